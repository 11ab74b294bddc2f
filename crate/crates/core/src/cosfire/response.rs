//! Filter application: DoG responses, blurred and shifted point responses,
//! their weighted geometric mean, the max over orientations and thresholding.

use std::collections::HashMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::bank::OrientationBank;
use super::config::{blur_sigma, FilterPoint, WeightScheme};
use crate::error::{Error, Result};
use crate::image::{convolve, dog_kernel, for_each_shifted_from, rectify, weighted_max_blur, GrayImage};
use crate::preprocess::FovMask;

/// Top of the normalised response scale that thresholds live on.
pub const RESPONSE_SCALE: f64 = 255.0;

/// `c_sigma = |f * DoG_sigma|^+`.
pub fn dog_response(image: &GrayImage, sigma: f64) -> Result<GrayImage> {
    Ok(rectify(&convolve(image, &dog_kernel(sigma)?)))
}

/// Blurred and shifted response of one point:
/// `max_{x',y'} c(x - Δx - x', y - Δy - y') G_{sigma'}(x', y')` with
/// `sigma' = sigma0 + alpha * rho`.
pub fn blur_shift_response(
    c_sigma: &GrayImage,
    point: &FilterPoint,
    sigma0: f64,
    alpha: f64,
) -> Result<GrayImage> {
    let blurred = weighted_max_blur(c_sigma, blur_sigma(sigma0, alpha, point.rho))?;
    let (ox, oy) = point.offset();
    Ok(GrayImage::from_fn(c_sigma.width(), c_sigma.height(), |x, y| {
        blurred.get_clamped(x as isize + ox, y as isize + oy)
    }))
}

#[inline]
fn ln_or_floor(v: f64) -> f64 {
    if v > 0.0 {
        v.ln()
    } else {
        f64::NEG_INFINITY
    }
}

/// Weighted geometric mean `(prod s_i^w_i)^(1 / sum w_i)`, evaluated in log
/// space. A zero in any input gives zero.
pub fn combine_responses(responses: &[GrayImage], scheme: &WeightScheme) -> Result<GrayImage> {
    let first = responses.first().ok_or(Error::EmptyInput("responses"))?;
    if responses.len() != scheme.omega.len() {
        return Err(Error::param(
            "scheme",
            format!("{} weights for {} responses", scheme.omega.len(), responses.len()),
        ));
    }
    for r in &responses[1..] {
        first.ensure_same_dims(r.dims())?;
    }
    let total = scheme.total();
    let mut out = GrayImage::new(first.width(), first.height());
    for (i, o) in out.data_mut().iter_mut().enumerate() {
        let mut acc = 0.0;
        for (r, &w) in responses.iter().zip(&scheme.omega) {
            acc += w * ln_or_floor(r.data()[i]);
        }
        *o = (acc / total).exp();
    }
    Ok(out)
}

type ScaleKey = (u64, u64);

/// Per-image memo of DoG responses (by `sigma`) and log-blurred responses
/// (by `sigma`, `sigma'`), shared across orientations and filters.
pub struct ResponseCache<'a> {
    image: &'a GrayImage,
    dog: HashMap<u64, Arc<GrayImage>>,
    blurred: HashMap<ScaleKey, Arc<Vec<f64>>>,
    max_blurred: Option<usize>,
}

impl<'a> ResponseCache<'a> {
    pub fn new(image: &'a GrayImage) -> Self {
        Self {
            image,
            dog: HashMap::new(),
            blurred: HashMap::new(),
            max_blurred: None,
        }
    }

    /// Caps the number of blurred maps kept; the memo is flushed when full.
    pub fn with_capacity_limit(mut self, max_blurred: usize) -> Self {
        self.max_blurred = Some(max_blurred);
        self
    }

    pub fn image(&self) -> &GrayImage {
        self.image
    }

    pub fn dog(&mut self, sigma: f64) -> Result<Arc<GrayImage>> {
        if let Some(c) = self.dog.get(&sigma.to_bits()) {
            return Ok(Arc::clone(c));
        }
        let c = Arc::new(dog_response(self.image, sigma)?);
        self.dog.insert(sigma.to_bits(), Arc::clone(&c));
        Ok(c)
    }

    fn log_blurred(&mut self, sigma: f64, sigma_prime: f64) -> Result<Arc<Vec<f64>>> {
        let key = (sigma.to_bits(), sigma_prime.to_bits());
        if let Some(m) = self.blurred.get(&key) {
            return Ok(Arc::clone(m));
        }
        let c = self.dog(sigma)?;
        let map = Arc::new(log_blur(&c, sigma_prime)?);
        if let Some(limit) = self.max_blurred {
            if self.blurred.len() >= limit {
                self.blurred.clear();
            }
        }
        self.blurred.insert(key, Arc::clone(&map));
        Ok(map)
    }

    /// Drops every memoised map.
    pub fn clear(&mut self) {
        self.dog.clear();
        self.blurred.clear();
    }
}

fn log_blur(c_sigma: &GrayImage, sigma_prime: f64) -> Result<Vec<f64>> {
    let mut data = weighted_max_blur(c_sigma, sigma_prime)?.into_vec();
    data.par_iter_mut().for_each(|v| *v = ln_or_floor(*v));
    Ok(data)
}

struct Term {
    log: Arc<Vec<f64>>,
    dx: isize,
    dy: isize,
    weight: f64,
}

/// Columns fused per pass; keeps the rows touched by neighbouring output rows
/// cache resident.
const FUSE_BLOCK: usize = 128;

/// Pixelwise max over orientations of the log-domain weighted mean, then exp.
fn fuse_orientations(width: usize, height: usize, orientations: &[Vec<Term>], total: f64) -> GrayImage {
    let mut out = GrayImage::new(width, height);
    if width == 0 {
        return out;
    }
    for x0 in (0..width).step_by(FUSE_BLOCK) {
        let x1 = (x0 + FUSE_BLOCK).min(width);
        out.data_mut()
            .par_chunks_mut(width)
            .enumerate()
            .for_each(|(y, row)| {
                let dst = &mut row[x0..x1];
                let mut best = [f64::NEG_INFINITY; FUSE_BLOCK];
                let mut acc = [0.0; FUSE_BLOCK];
                let (best, acc) = (&mut best[..dst.len()], &mut acc[..dst.len()]);
                for terms in orientations {
                    acc.fill(0.0);
                    for t in terms {
                        let sy = (y as isize + t.dy).clamp(0, height as isize - 1) as usize;
                        let src = &t.log[sy * width..(sy + 1) * width];
                        let w = t.weight;
                        for_each_shifted_from(acc, src, x0, t.dx, |a, v| *a += w * v);
                    }
                    for (b, &a) in best.iter_mut().zip(acc.iter()) {
                        *b = b.max(a);
                    }
                }
                for (d, &b) in dst.iter_mut().zip(best.iter()) {
                    *d = (b / total).exp();
                }
            });
    }
    out
}

/// Rotation-invariant response of `bank` using (and filling) `cache`.
pub fn filter_response(cache: &mut ResponseCache<'_>, bank: &OrientationBank) -> Result<GrayImage> {
    let base = bank.base();
    let scheme = base.weights();
    let mut orientations = Vec::with_capacity(bank.len());
    for (_, rotated) in bank.orientations() {
        let mut terms = Vec::with_capacity(rotated.len());
        for (p, &weight) in rotated.points().iter().zip(&scheme.omega) {
            let log = cache.log_blurred(p.sigma, base.blur_sigma(p.rho))?;
            let (dx, dy) = p.offset();
            terms.push(Term { log, dx, dy, weight });
        }
        orientations.push(terms);
    }
    let (w, h) = cache.image().dims();
    Ok(fuse_orientations(w, h, &orientations, scheme.total()))
}

/// Rotation-invariant filter response: the maximum over the bank's
/// orientations of the weighted geometric mean of the point responses.
pub fn apply_filter(image: &GrayImage, bank: &OrientationBank) -> Result<GrayImage> {
    filter_response(&mut ResponseCache::new(image), bank)
}

/// As [`apply_filter`] but recomputes every DoG and blur per point and orientation.
pub fn apply_filter_uncached(image: &GrayImage, bank: &OrientationBank) -> Result<GrayImage> {
    let base = bank.base();
    let scheme = base.weights();
    let mut orientations = Vec::with_capacity(bank.len());
    for (_, rotated) in bank.orientations() {
        let mut terms = Vec::with_capacity(rotated.len());
        for (p, &weight) in rotated.points().iter().zip(&scheme.omega) {
            let c = dog_response(image, p.sigma)?;
            let log = Arc::new(log_blur(&c, base.blur_sigma(p.rho))?);
            let (dx, dy) = p.offset();
            terms.push(Term { log, dx, dy, weight });
        }
        orientations.push(terms);
    }
    Ok(fuse_orientations(image.width(), image.height(), &orientations, scheme.total()))
}

/// `r_as = r_s + r_a`; the asymmetric term is optional.
pub fn combined_response(
    cache: &mut ResponseCache<'_>,
    symmetric: &OrientationBank,
    asymmetric: Option<&OrientationBank>,
) -> Result<GrayImage> {
    let mut r = filter_response(cache, symmetric)?;
    if let Some(a) = asymmetric {
        let ra = filter_response(cache, a)?;
        for (v, &add) in r.data_mut().iter_mut().zip(ra.data()) {
            *v += add;
        }
    }
    Ok(r)
}

/// Rescales so the largest in-mask value becomes 255; pixels outside the mask
/// are zeroed. An all-zero response stays zero.
pub fn normalize_response(response: &GrayImage, mask: &FovMask) -> Result<GrayImage> {
    response.ensure_same_dims(mask.dims())?;
    let max = response
        .data()
        .iter()
        .zip(mask.data())
        .filter(|(_, &m)| m)
        .map(|(&v, _)| v)
        .fold(0.0, f64::max);
    let data = response
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| {
            if m && max > 0.0 {
                (v / max * RESPONSE_SCALE).max(0.0)
            } else {
                0.0
            }
        })
        .collect();
    GrayImage::from_vec(response.width(), response.height(), data)
}

/// Threshold on the normalised 0–255 response scale.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct SegmentationParams {
    threshold: f64,
}

impl SegmentationParams {
    pub fn new(threshold: f64) -> Result<Self> {
        if !(0.0..=RESPONSE_SCALE).contains(&threshold) {
            return Err(Error::param(
                "threshold",
                format!("must lie in [0, 255], got {threshold}"),
            ));
        }
        Ok(Self { threshold })
    }

    pub fn threshold(&self) -> f64 {
        self.threshold
    }
}

/// `g = 1` where the normalised response exceeds the threshold inside the mask.
pub fn threshold_response(normalized: &GrayImage, mask: &FovMask, params: SegmentationParams) -> Result<GrayImage> {
    normalized.ensure_same_dims(mask.dims())?;
    let t = params.threshold();
    let data = normalized
        .data()
        .iter()
        .zip(mask.data())
        .map(|(&v, &m)| if m && v > t { 1.0 } else { 0.0 })
        .collect();
    GrayImage::from_vec(normalized.width(), normalized.height(), data)
}

/// Full segmentation of a preprocessed image: combined response, per-image
/// normalisation over `mask`, then thresholding.
pub fn segment(
    image: &GrayImage,
    symmetric: &OrientationBank,
    asymmetric: Option<&OrientationBank>,
    mask: &FovMask,
    threshold: f64,
) -> Result<GrayImage> {
    let params = SegmentationParams::new(threshold)?;
    image.ensure_same_dims(mask.dims())?;
    let r = combined_response(&mut ResponseCache::new(image), symmetric, asymmetric)?;
    threshold_response(&normalize_response(&r, mask)?, mask, params)
}
