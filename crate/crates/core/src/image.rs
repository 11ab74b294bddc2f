//! Dense grayscale images and the low-level kernels the filter is built from.
//!
//! All neighbourhood operations replicate the nearest edge pixel for reads
//! that fall outside the image.

use rayon::prelude::*;

use crate::error::{Error, Result};

/// Row-major grayscale image with `f64` pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayImage {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl GrayImage {
    pub fn new(width: usize, height: usize) -> Self {
        Self::filled(width, height, 0.0)
    }

    pub fn filled(width: usize, height: usize, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::param(
                "data",
                format!(
                    "{} values cannot fill a {width}x{height} image",
                    data.len()
                ),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !v.is_finite()) {
            return Err(Error::param("data", format!("non-finite pixel {bad}")));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    /// Builds an image by evaluating `f(x, y)` at every pixel.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    #[inline]
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f64 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, value: f64) {
        self.data[y * self.width + x] = value;
    }

    /// Reads pixel `(x, y)` with edge replication for out-of-range coordinates.
    #[inline]
    pub fn get_clamped(&self, x: isize, y: isize) -> f64 {
        let cx = x.clamp(0, self.width as isize - 1) as usize;
        let cy = y.clamp(0, self.height as isize - 1) as usize;
        self.data[cy * self.width + cx]
    }

    #[inline]
    pub fn row(&self, y: usize) -> &[f64] {
        &self.data[y * self.width..(y + 1) * self.width]
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> GrayImage {
        GrayImage {
            width: self.width,
            height: self.height,
            data: self.data.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn max_value(&self) -> f64 {
        self.data.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub(crate) fn ensure_same_dims(&self, other: (usize, usize)) -> Result<()> {
        if self.dims() != other {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other,
            });
        }
        Ok(())
    }
}

/// One rank-1 term `coeff * taps ⊗ taps` of a separable decomposition.
#[derive(Debug, Clone, PartialEq)]
struct SeparableTerm {
    coeff: f64,
    taps: Vec<f64>,
}

/// Square convolution kernel spanning `[-radius, radius]` on both axes.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    radius: usize,
    weights: Vec<f64>,
    // Exact sum-of-outer-products form of `weights`, when known.
    separable: Vec<SeparableTerm>,
}

impl Kernel {
    /// Dense kernel from `(2 * radius + 1)^2` row-major weights.
    pub fn new(radius: usize, weights: Vec<f64>) -> Result<Self> {
        let side = 2 * radius + 1;
        if weights.len() != side * side {
            return Err(Error::param(
                "weights",
                format!("expected {} weights for radius {radius}", side * side),
            ));
        }
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::param("weights", "non-finite weight"));
        }
        Ok(Self {
            radius,
            weights,
            separable: Vec::new(),
        })
    }

    fn from_terms(radius: usize, terms: Vec<SeparableTerm>) -> Self {
        let side = 2 * radius + 1;
        let mut weights = vec![0.0; side * side];
        for term in &terms {
            for (j, &ty) in term.taps.iter().enumerate() {
                for (i, &tx) in term.taps.iter().enumerate() {
                    weights[j * side + i] += term.coeff * ty * tx;
                }
            }
        }
        Self {
            radius,
            weights,
            separable: terms,
        }
    }

    #[inline]
    pub fn radius(&self) -> usize {
        self.radius
    }

    #[inline]
    pub fn side(&self) -> usize {
        2 * self.radius + 1
    }

    #[inline]
    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// Weight at offset `(dx, dy)` from the kernel centre.
    #[inline]
    pub fn at(&self, dx: isize, dy: isize) -> f64 {
        let r = self.radius as isize;
        let side = self.side();
        self.weights[(dy + r) as usize * side + (dx + r) as usize]
    }

    pub fn sum(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// Drops the separable form so `convolve` takes the dense path.
    pub fn to_dense(&self) -> Kernel {
        Kernel {
            radius: self.radius,
            weights: self.weights.clone(),
            separable: Vec::new(),
        }
    }
}

fn check_sigma(name: &'static str, sigma: f64) -> Result<()> {
    if !sigma.is_finite() || sigma <= 0.0 {
        return Err(Error::param(name, format!("must be positive and finite, got {sigma}")));
    }
    Ok(())
}

/// Support radius `ceil(3 sigma)` shared by every Gaussian-derived kernel.
#[inline]
pub fn support_radius(sigma: f64) -> usize {
    // sigma' = sigma0 + alpha * rho lands a hair above integers like 9.0
    (3.0 * sigma - 1e-9).ceil().max(0.0) as usize
}

fn sampled_gaussian(sigma: f64, radius: usize, unit_mass: bool) -> Vec<f64> {
    let r = radius as isize;
    let norm = if unit_mass {
        1.0 / ((2.0 * std::f64::consts::PI).sqrt() * sigma)
    } else {
        1.0
    };
    (-r..=r)
        .map(|u| {
            let u = u as f64;
            norm * (-(u * u) / (2.0 * sigma * sigma)).exp()
        })
        .collect()
}

/// Difference-of-Gaussians kernel `G_sigma - G_{sigma/2}` on `[-ceil(3 sigma), ceil(3 sigma)]`.
///
/// The two sampled Gaussians are unit-mass in the continuum but not on a
/// truncated integer grid, so the kernel mean is subtracted to make the
/// weights sum to zero. A constant image therefore has zero response.
pub fn dog_kernel(sigma: f64) -> Result<Kernel> {
    check_sigma("sigma", sigma)?;
    let radius = support_radius(sigma);
    let side = 2 * radius + 1;
    let outer = sampled_gaussian(sigma, radius, true);
    let inner = sampled_gaussian(0.5 * sigma, radius, true);
    let raw_sum: f64 = {
        let so: f64 = outer.iter().sum();
        let si: f64 = inner.iter().sum();
        so * so - si * si
    };
    let mean = raw_sum / (side * side) as f64;

    let terms = vec![
        SeparableTerm {
            coeff: 1.0,
            taps: outer,
        },
        SeparableTerm {
            coeff: -1.0,
            taps: inner,
        },
        SeparableTerm {
            coeff: -mean,
            taps: vec![1.0; side],
        },
    ];

    // Dense weights straight from the closed form, so symmetry is exact.
    let r = radius as isize;
    let two_pi = 2.0 * std::f64::consts::PI;
    let s_in = 0.5 * sigma;
    let mut weights = Vec::with_capacity(side * side);
    for y in -r..=r {
        for x in -r..=r {
            let d2 = (x * x + y * y) as f64;
            let w = (-d2 / (2.0 * sigma * sigma)).exp() / (two_pi * sigma * sigma)
                - (-d2 / (2.0 * s_in * s_in)).exp() / (two_pi * s_in * s_in);
            weights.push(w - mean);
        }
    }
    Ok(Kernel {
        radius,
        weights,
        separable: terms,
    })
}

/// Peak-normalised Gaussian `exp(-(x^2 + y^2) / (2 sigma^2))`, weight 1 at the centre.
pub fn gaussian_kernel(sigma_prime: f64) -> Result<Kernel> {
    check_sigma("sigma_prime", sigma_prime)?;
    let radius = support_radius(sigma_prime);
    Ok(Kernel::from_terms(
        radius,
        vec![SeparableTerm {
            coeff: 1.0,
            taps: sampled_gaussian(sigma_prime, radius, false),
        }],
    ))
}

/// Applies `op(dst[x], src[clamp(x + shift)])` along a row.
#[inline]
pub(crate) fn for_each_shifted(
    dst: &mut [f64],
    src: &[f64],
    shift: isize,
    op: impl FnMut(&mut f64, f64),
) {
    debug_assert_eq!(dst.len(), src.len());
    for_each_shifted_from(dst, src, 0, shift, op);
}

/// As [`for_each_shifted`] for a window: `dst[i]` pairs with
/// `src[clamp(x0 + i + shift)]`.
pub(crate) fn for_each_shifted_from(
    dst: &mut [f64],
    src: &[f64],
    x0: usize,
    shift: isize,
    mut op: impl FnMut(&mut f64, f64),
) {
    let n = src.len() as isize;
    let m = dst.len() as isize;
    let base = x0 as isize + shift;
    // dst indices whose source lies inside the row
    let lo = (-base).clamp(0, m) as usize;
    let hi = ((n - base).clamp(0, m) as usize).max(lo);
    let first = src[0];
    let last = src[src.len() - 1];
    for d in &mut dst[..lo] {
        op(d, first);
    }
    if lo < hi {
        let start = (lo as isize + base) as usize;
        for (d, &v) in dst[lo..hi].iter_mut().zip(&src[start..start + (hi - lo)]) {
            op(d, v);
        }
    }
    for d in &mut dst[hi..] {
        op(d, last);
    }
}

#[inline]
fn clamp_index(i: isize, n: usize) -> usize {
    i.clamp(0, n as isize - 1) as usize
}

fn separable_convolve(image: &GrayImage, term: &SeparableTerm, out: &mut [f64]) {
    let (w, h) = image.dims();
    let r = (term.taps.len() / 2) as isize;

    // Horizontal pass.
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let src = image.row(y);
        for (k, &tap) in term.taps.iter().enumerate() {
            let u = k as isize - r;
            for_each_shifted(dst, src, -u, |d, v| *d += tap * v);
        }
    });

    // Vertical pass, accumulated into `out`.
    let coeff = term.coeff;
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let mut acc = vec![0.0; w];
        for (k, &tap) in term.taps.iter().enumerate() {
            let u = k as isize - r;
            let sy = clamp_index(y as isize - u, h);
            let src = &tmp[sy * w..(sy + 1) * w];
            for (a, &v) in acc.iter_mut().zip(src) {
                *a += tap * v;
            }
        }
        for (d, a) in dst.iter_mut().zip(acc) {
            *d += coeff * a;
        }
    });
}

/// Direct 2-D convolution `out(x, y) = sum_{u,v} image(x - u, y - v) * kernel(u, v)`.
pub fn convolve_direct(image: &GrayImage, kernel: &Kernel) -> GrayImage {
    let (w, h) = image.dims();
    let r = kernel.radius as isize;
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for v in -r..=r {
            let src = image.row(clamp_index(y as isize - v, h));
            for u in -r..=r {
                let k = kernel.at(u, v);
                if k != 0.0 {
                    for_each_shifted(dst, src, -u, |d, p| *d += k * p);
                }
            }
        }
    });
    GrayImage {
        width: w,
        height: h,
        data: out,
    }
}

/// Convolves with edge replication. Kernels built by [`dog_kernel`] and
/// [`gaussian_kernel`] take a separable path; other kernels are applied directly.
pub fn convolve(image: &GrayImage, kernel: &Kernel) -> GrayImage {
    if kernel.separable.is_empty() || image.is_empty() {
        return convolve_direct(image, kernel);
    }
    let mut out = vec![0.0; image.data.len()];
    for term in &kernel.separable {
        separable_convolve(image, term, &mut out);
    }
    GrayImage {
        width: image.width,
        height: image.height,
        data: out,
    }
}

/// Half-wave rectification `max(v, 0)`.
pub fn rectify(image: &GrayImage) -> GrayImage {
    image.map(|v| if v > 0.0 { v } else { 0.0 })
}

/// `out(x, y) = max_{|x'|,|y'| <= ceil(3 sigma')} image(x - x', y - y') * G(x', y')`
/// with the peak-normalised Gaussian `G`.
///
/// `G` factors into `g(x') g(y')` with positive factors, so the maximum is
/// taken as two 1-D passes.
pub fn weighted_max_blur(image: &GrayImage, sigma_prime: f64) -> Result<GrayImage> {
    check_sigma("sigma_prime", sigma_prime)?;
    if image.is_empty() {
        return Ok(image.clone());
    }
    let (w, h) = image.dims();
    let radius = support_radius(sigma_prime);
    let taps = sampled_gaussian(sigma_prime, radius, false);
    let r = radius as isize;

    let mut tmp = image.data.clone();
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        let src = image.row(y);
        for (k, &g) in taps.iter().enumerate() {
            let u = k as isize - r;
            if u != 0 {
                for_each_shifted(dst, src, -u, |d, v| *d = d.max(g * v));
            }
        }
    });

    let mut out = tmp.clone();
    out.par_chunks_mut(w).enumerate().for_each(|(y, dst)| {
        for (k, &g) in taps.iter().enumerate() {
            let u = k as isize - r;
            if u != 0 {
                let sy = clamp_index(y as isize - u, h);
                for (d, &v) in dst.iter_mut().zip(&tmp[sy * w..(sy + 1) * w]) {
                    *d = d.max(g * v);
                }
            }
        }
    });

    Ok(GrayImage {
        width: w,
        height: h,
        data: out,
    })
}
