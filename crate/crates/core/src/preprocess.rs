//! Turning a colour fundus photograph into the single-channel image the
//! filters consume: green channel, FOV border smoothing and CLAHE.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::image::GrayImage;

/// 8-bit RGB image held as three planes.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RgbImage {
    width: usize,
    height: usize,
    red: Vec<u8>,
    green: Vec<u8>,
    blue: Vec<u8>,
}

impl RgbImage {
    pub fn from_planes(
        width: usize,
        height: usize,
        red: Vec<u8>,
        green: Vec<u8>,
        blue: Vec<u8>,
    ) -> Result<Self> {
        let n = width * height;
        if red.len() != n || green.len() != n || blue.len() != n {
            return Err(Error::param("planes", format!("each plane must hold {n} values")));
        }
        Ok(Self {
            width,
            height,
            red,
            green,
            blue,
        })
    }

    /// From interleaved `RGBRGB...` bytes.
    pub fn from_interleaved(width: usize, height: usize, rgb: &[u8]) -> Result<Self> {
        if rgb.len() != 3 * width * height {
            return Err(Error::param(
                "rgb",
                format!("expected {} bytes, got {}", 3 * width * height, rgb.len()),
            ));
        }
        let mut planes = [
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
            Vec::with_capacity(width * height),
        ];
        for px in rgb.chunks_exact(3) {
            for (plane, &v) in planes.iter_mut().zip(px) {
                plane.push(v);
            }
        }
        let [red, green, blue] = planes;
        Self::from_planes(width, height, red, green, blue)
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn red(&self) -> &[u8] {
        &self.red
    }

    pub fn green(&self) -> &[u8] {
        &self.green
    }

    pub fn blue(&self) -> &[u8] {
        &self.blue
    }
}

/// Binary mask of evaluable pixels (field of view, optionally minus the optic disc).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FovMask {
    width: usize,
    height: usize,
    data: Vec<bool>,
}

impl FovMask {
    pub fn full(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![true; width * height],
        }
    }

    pub fn from_vec(width: usize, height: usize, data: Vec<bool>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::param(
                "mask",
                format!("{} values cannot fill a {width}x{height} mask", data.len()),
            ));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
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

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    pub fn data(&self) -> &[bool] {
        &self.data
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Pixels set in both masks.
    pub fn intersect(&self, other: &FovMask) -> Result<FovMask> {
        if self.dims() != other.dims() {
            return Err(Error::DimensionMismatch {
                expected: self.dims(),
                found: other.dims(),
            });
        }
        Ok(FovMask {
            width: self.width,
            height: self.height,
            data: self.data.iter().zip(&other.data).map(|(&a, &b)| a && b).collect(),
        })
    }
}

/// Green plane scaled to `[0, 1]`.
pub fn extract_green(rgb: &RgbImage) -> GrayImage {
    let data = rgb.green.iter().map(|&g| g as f64 / 255.0).collect();
    GrayImage::from_vec(rgb.width, rgb.height, data).expect("plane sized by construction")
}

const NEIGHBOURS: [(isize, isize); 8] = [
    (-1, -1),
    (0, -1),
    (1, -1),
    (-1, 0),
    (1, 0),
    (-1, 1),
    (0, 1),
    (1, 1),
];

/// Grows the FOV outward one pixel ring per iteration, giving each new pixel the
/// mean of its already-filled 8-neighbours. Pixels inside the mask never change.
pub fn smooth_fov_border(gray: &GrayImage, mask: &FovMask, iterations: usize) -> Result<GrayImage> {
    gray.ensure_same_dims(mask.dims())?;
    let (w, h) = gray.dims();
    let mut out = gray.clone();
    let mut filled = mask.data.clone();

    for _ in 0..iterations {
        let mut ring = Vec::new();
        for y in 0..h {
            for x in 0..w {
                if filled[y * w + x] {
                    continue;
                }
                let mut sum = 0.0;
                let mut count = 0usize;
                for (dx, dy) in NEIGHBOURS {
                    let (nx, ny) = (x as isize + dx, y as isize + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if filled[j] {
                        sum += out.data()[j];
                        count += 1;
                    }
                }
                if count > 0 {
                    ring.push((y * w + x, sum / count as f64));
                }
            }
        }
        if ring.is_empty() {
            break;
        }
        for (i, v) in ring {
            out.data_mut()[i] = v;
            filled[i] = true;
        }
    }
    Ok(out)
}

pub const CLAHE_BINS: usize = 256;

#[inline]
fn level(v: f64) -> usize {
    ((v.clamp(0.0, 1.0) * (CLAHE_BINS - 1) as f64).round()) as usize
}

/// Intensity lookup table for one tile.
fn tile_mapping(gray: &GrayImage, xs: (usize, usize), ys: (usize, usize), clip_limit: f64) -> Vec<f64> {
    let mut hist = vec![0.0f64; CLAHE_BINS];
    for y in ys.0..ys.1 {
        for &v in &gray.row(y)[xs.0..xs.1] {
            hist[level(v)] += 1.0;
        }
    }
    let n = ((xs.1 - xs.0) * (ys.1 - ys.0)) as f64;

    // A single occupied level has no contrast to stretch: map levels to themselves.
    if hist.iter().filter(|&&c| c > 0.0).count() <= 1 {
        return (0..CLAHE_BINS).map(|k| k as f64 / (CLAHE_BINS - 1) as f64).collect();
    }

    // clip_limit = 0 clips to the mean bin height, clip_limit = 1 never clips.
    let mean = n / CLAHE_BINS as f64;
    let clip = mean + clip_limit * (n - mean);
    let mut excess = 0.0;
    for c in hist.iter_mut() {
        if *c > clip {
            excess += *c - clip;
            *c = clip;
        }
    }
    let bonus = excess / CLAHE_BINS as f64;

    let mut cdf = 0.0;
    hist.iter()
        .map(|&c| {
            cdf += c + bonus;
            (cdf / n).min(1.0)
        })
        .collect()
}

fn tile_bounds(len: usize, tiles: usize) -> Vec<(usize, usize)> {
    (0..tiles).map(|i| (i * len / tiles, (i + 1) * len / tiles)).collect()
}

/// Per-coordinate (lower tile, upper tile, weight of upper tile).
fn interpolation_axis(bounds: &[(usize, usize)], len: usize) -> Vec<(usize, usize, f64)> {
    let centres: Vec<f64> = bounds
        .iter()
        .map(|&(a, b)| (a + b - 1) as f64 / 2.0)
        .collect();
    (0..len)
        .map(|p| {
            let p = p as f64;
            let i0 = centres.iter().rposition(|&c| c <= p).unwrap_or(0);
            if i0 + 1 < centres.len() && p > centres[i0] {
                let t = (p - centres[i0]) / (centres[i0 + 1] - centres[i0]);
                (i0, i0 + 1, t)
            } else {
                (i0, i0, 0.0)
            }
        })
        .collect()
}

#[inline]
fn lerp(a: f64, b: f64, t: f64) -> f64 {
    a + (b - a) * t
}

/// Contrast-limited adaptive histogram equalisation on a `[0, 1]` image.
///
/// Each tile's histogram (256 levels) is clipped at
/// `mean + clip_limit * (pixels - mean)` with the excess spread evenly, and the
/// resulting CDFs are bilinearly interpolated between tile centres.
pub fn clahe(gray: &GrayImage, tiles_x: usize, tiles_y: usize, clip_limit: f64) -> Result<GrayImage> {
    if tiles_x == 0 || tiles_y == 0 {
        return Err(Error::param("tiles", "need at least one tile per axis"));
    }
    if tiles_x > gray.width() || tiles_y > gray.height() {
        return Err(Error::param(
            "tiles",
            format!(
                "{tiles_x}x{tiles_y} tiles do not fit a {}x{} image",
                gray.width(),
                gray.height()
            ),
        ));
    }
    if !(clip_limit > 0.0 && clip_limit <= 1.0) {
        return Err(Error::param("clip_limit", format!("must lie in (0, 1], got {clip_limit}")));
    }

    let (w, h) = gray.dims();
    let bx = tile_bounds(w, tiles_x);
    let by = tile_bounds(h, tiles_y);
    let maps: Vec<Vec<f64>> = (0..tiles_x * tiles_y)
        .into_par_iter()
        .map(|t| tile_mapping(gray, bx[t % tiles_x], by[t / tiles_x], clip_limit))
        .collect();
    let ax = interpolation_axis(&bx, w);
    let ay = interpolation_axis(&by, h);

    let mut out = GrayImage::new(w, h);
    out.data_mut()
        .par_chunks_mut(w)
        .enumerate()
        .for_each(|(y, dst)| {
            let (ty0, ty1, fy) = ay[y];
            let src = gray.row(y);
            for (x, d) in dst.iter_mut().enumerate() {
                let (tx0, tx1, fx) = ax[x];
                let k = level(src[x]);
                let top = lerp(maps[ty0 * tiles_x + tx0][k], maps[ty0 * tiles_x + tx1][k], fx);
                let bottom = lerp(maps[ty1 * tiles_x + tx0][k], maps[ty1 * tiles_x + tx1][k], fx);
                *d = lerp(top, bottom, fy).clamp(0.0, 1.0);
            }
        });
    Ok(out)
}

/// Preprocessing knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PreprocessOptions {
    pub smooth_iterations: usize,
    pub clahe_tiles_x: usize,
    pub clahe_tiles_y: usize,
    pub clahe_clip: f64,
}

impl Default for PreprocessOptions {
    fn default() -> Self {
        Self {
            smooth_iterations: 10,
            clahe_tiles_x: 8,
            clahe_tiles_y: 8,
            clahe_clip: 0.01,
        }
    }
}

/// Green channel, border smoothing against `fov`, then CLAHE.
pub fn preprocess(rgb: &RgbImage, fov: &FovMask, opts: &PreprocessOptions) -> Result<GrayImage> {
    preprocess_gray(&extract_green(rgb), fov, opts)
}

/// As [`preprocess`] for an image that is already single-channel.
pub fn preprocess_gray(gray: &GrayImage, fov: &FovMask, opts: &PreprocessOptions) -> Result<GrayImage> {
    let smoothed = smooth_fov_border(gray, fov, opts.smooth_iterations)?;
    clahe(&smoothed, opts.clahe_tiles_x, opts.clahe_tiles_y, opts.clahe_clip)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn green_extraction() {
        let rgb = RgbImage::from_interleaved(3, 1, &[0, 255, 0, 255, 0, 255, 10, 128, 200]).unwrap();
        let g = extract_green(&rgb);
        assert_eq!(g.data()[0], 1.0);
        assert_eq!(g.data()[1], 0.0);
        assert!((g.data()[2] - 0.50196).abs() < 1e-5);
    }

    #[test]
    fn green_ignores_red_and_blue() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let bytes: Vec<u8> = (0..3 * 20).map(|_| rng.gen()).collect();
        let a = RgbImage::from_interleaved(5, 4, &bytes).unwrap();
        let b = RgbImage::from_planes(
            5,
            4,
            (0..20).map(|_| rng.gen()).collect(),
            a.green().to_vec(),
            (0..20).map(|_| rng.gen()).collect(),
        )
        .unwrap();
        assert_eq!(extract_green(&a), extract_green(&b));
    }

    #[test]
    fn smoothing_identity_cases() {
        let img = GrayImage::from_fn(6, 6, |x, y| (x * 7 + y) as f64 / 50.0);
        let ring = FovMask::from_fn(6, 6, |x, y| (1..5).contains(&x) && (1..5).contains(&y));
        assert_eq!(smooth_fov_border(&img, &ring, 0).unwrap(), img);
        assert_eq!(smooth_fov_border(&img, &FovMask::full(6, 6), 5).unwrap(), img);
        assert!(smooth_fov_border(&img, &FovMask::full(5, 6), 1).is_err());
    }

    #[test]
    fn smoothing_single_ring_matches_hand_oracle() {
        let img = GrayImage::from_fn(5, 5, |x, y| (y * 5 + x) as f64);
        let mask = FovMask::from_fn(5, 5, |x, y| (1..4).contains(&x) && (1..4).contains(&y));
        let out = smooth_fov_border(&img, &mask, 1).unwrap();
        for y in 0..5 {
            for x in 0..5 {
                let inside = mask.get(x, y);
                let want = if inside {
                    img.get(x, y)
                } else {
                    let mut vals = Vec::new();
                    for ny in y.saturating_sub(1)..=(y + 1).min(4) {
                        for nx in x.saturating_sub(1)..=(x + 1).min(4) {
                            if mask.get(nx, ny) {
                                vals.push(img.get(nx, ny));
                            }
                        }
                    }
                    vals.iter().sum::<f64>() / vals.len() as f64
                };
                assert_eq!(out.get(x, y), want, "({x},{y})");
            }
        }
        // Corner (0,0) only touches (1,1) = 6; edge (2,0) averages 6, 7, 8.
        assert_eq!(out.get(0, 0), 6.0);
        assert_eq!(out.get(2, 0), 7.0);
    }

    #[test]
    fn smoothing_never_touches_fov_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let img = GrayImage::from_fn(20, 20, |_, _| rng.gen());
        let mask = FovMask::from_fn(20, 20, |x, y| {
            let (dx, dy) = (x as f64 - 9.5, y as f64 - 9.5);
            dx * dx + dy * dy < 49.0
        });
        let out = smooth_fov_border(&img, &mask, 4).unwrap();
        for (i, &m) in mask.data().iter().enumerate() {
            if m {
                assert_eq!(out.data()[i], img.data()[i]);
            }
        }
        // Far corner is out of reach after 4 rings and keeps its value.
        assert_eq!(out.get(0, 0), img.get(0, 0));
    }

    #[test]
    fn clahe_parameter_validation() {
        let img = GrayImage::filled(8, 8, 0.5);
        assert!(clahe(&img, 0, 1, 0.5).is_err());
        assert!(clahe(&img, 9, 1, 0.5).is_err());
        assert!(clahe(&img, 2, 2, 0.0).is_err());
        assert!(clahe(&img, 2, 2, 1.5).is_err());
        assert!(clahe(&img, 2, 2, f64::NAN).is_err());
    }

    #[test]
    fn clahe_constant_image_stays_constant() {
        for v in [0.0, 0.3, 100.0 / 255.0, 1.0] {
            let img = GrayImage::filled(33, 17, v);
            let out = clahe(&img, 4, 3, 0.01).unwrap();
            let first = out.data()[0];
            assert!(out.data().iter().all(|&o| o == first));
            assert!((first - v).abs() <= 0.5 / 255.0);
        }
    }

    #[test]
    fn clahe_single_tile_unclipped_is_global_equalisation() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let img = GrayImage::from_fn(8, 8, |_, _| rng.gen_range(0..256) as f64 / 255.0);
        let out = clahe(&img, 1, 1, 1.0).unwrap();

        // Oracle: rank-count mapping, out = #{q : level(q) <= level(p)} / N.
        let lv: Vec<i64> = img.data().iter().map(|v| (v * 255.0).round() as i64).collect();
        for (i, &l) in lv.iter().enumerate() {
            let below = lv.iter().filter(|&&m| m <= l).count() as f64;
            assert_eq!(out.data()[i], below / 64.0);
        }
    }

    #[test]
    fn clahe_output_in_unit_range_and_monotone_in_corner_zone() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let img = GrayImage::from_fn(64, 48, |x, y| {
            (0.3 * (x as f64 / 9.0).sin() + 0.2 * (y as f64 / 5.0).cos() + 0.5 + rng.gen_range(-0.1..0.1))
                .clamp(0.0, 1.0)
        });
        let out = clahe(&img, 4, 4, 0.02).unwrap();
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));

        // Pixels left/above the first tile centre use the first tile's map alone.
        let zone: Vec<(f64, f64)> = (0..6)
            .flat_map(|y| (0..7).map(move |x| (x, y)))
            .map(|(x, y)| (img.get(x, y), out.get(x, y)))
            .collect();
        for a in &zone {
            for b in &zone {
                if a.0 < b.0 {
                    assert!(a.1 <= b.1);
                }
            }
        }
    }

    #[test]
    fn preprocess_runs_end_to_end() {
        let rgb = RgbImage::from_planes(
            32,
            32,
            vec![0; 1024],
            (0..1024).map(|i| (i % 251) as u8).collect(),
            vec![0; 1024],
        )
        .unwrap();
        let fov = FovMask::from_fn(32, 32, |x, y| x > 2 && y > 2);
        let out = preprocess(&rgb, &fov, &PreprocessOptions::default()).unwrap();
        assert_eq!(out.dims(), (32, 32));
        assert!(out.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }
}
