//! Automatic configuration of a filter from a prototype pattern.

use std::f64::consts::TAU;

use super::config::{angular_distance, normalize_angle, FilterConfig, FilterKind, FilterPoint};
use super::response::dog_response;
use crate::error::{Error, Result};
use crate::image::GrayImage;

/// Responses at or below this are treated as no response at all.
const RESPONSE_FLOOR: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigureOptions {
    /// Circle radii in pixels; must include 0 (the centre).
    pub radii: Vec<f64>,
    /// DoG scale used to analyse the prototype.
    pub sigma: f64,
    pub sigma0: f64,
    pub alpha: f64,
    /// Minimum peak height relative to the strongest sample on the same circle.
    pub peak_fraction: f64,
    pub angular_samples: usize,
    /// Maxima closer than this (radians) are merged into the stronger one.
    pub merge_window: f64,
    /// Filter kind; inferred from half-turn symmetry of the points when `None`.
    pub kind: Option<FilterKind>,
}

impl ConfigureOptions {
    pub fn new(sigma: f64, radii: Vec<f64>, sigma0: f64, alpha: f64) -> Self {
        Self {
            radii,
            sigma,
            sigma0,
            alpha,
            peak_fraction: 0.2,
            angular_samples: 360,
            merge_window: 10f64.to_radians(),
            kind: None,
        }
    }

    pub fn with_peak_fraction(mut self, peak_fraction: f64) -> Self {
        self.peak_fraction = peak_fraction;
        self
    }

    pub fn with_kind(mut self, kind: FilterKind) -> Self {
        self.kind = Some(kind);
        self
    }
}

fn bilinear(img: &GrayImage, x: f64, y: f64) -> f64 {
    let x0 = x.floor();
    let y0 = y.floor();
    let (fx, fy) = (x - x0, y - y0);
    let (x0, y0) = (x0 as isize, y0 as isize);
    let p00 = img.get_clamped(x0, y0);
    let p10 = img.get_clamped(x0 + 1, y0);
    let p01 = img.get_clamped(x0, y0 + 1);
    let p11 = img.get_clamped(x0 + 1, y0 + 1);
    let top = p00 + (p10 - p00) * fx;
    let bottom = p01 + (p11 - p01) * fx;
    top + (bottom - top) * fy
}

/// Angles (radians) of the merged local maxima of `samples` around a circle.
fn circle_peaks(samples: &[f64], peak_fraction: f64, merge_window: f64) -> Vec<f64> {
    let n = samples.len();
    let max = samples.iter().copied().fold(0.0, f64::max);
    if max <= RESPONSE_FLOOR {
        return Vec::new();
    }
    let floor = peak_fraction * max;
    let mut candidates: Vec<(usize, f64)> = (0..n)
        .filter_map(|i| {
            let v = samples[i];
            let prev = samples[(i + n - 1) % n];
            let next = samples[(i + 1) % n];
            let is_peak = v >= prev && v >= next && (v > prev || v > next);
            (is_peak && v >= floor && v > RESPONSE_FLOOR).then_some((i, v))
        })
        .collect();
    candidates.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));

    let step = TAU / n as f64;
    let mut kept: Vec<f64> = Vec::new();
    for (i, _) in candidates {
        let angle = i as f64 * step;
        if kept.iter().all(|&k| angular_distance(k, angle) >= merge_window) {
            kept.push(angle);
        }
    }
    kept.sort_by(f64::total_cmp);
    kept
}

/// Places concentric circles around `center` on the prototype's rectified DoG
/// response and keeps the angular local maxima as points of interest. The
/// centre point `(sigma, 0, 0)` is always included.
pub fn configure_from_prototype(
    prototype: &GrayImage,
    center: (usize, usize),
    opts: &ConfigureOptions,
) -> Result<FilterConfig> {
    if !opts.radii.contains(&0.0) {
        return Err(Error::param("radii", "must include 0 (the filter centre)"));
    }
    if let Some(&r) = opts.radii.iter().find(|r| !(r.is_finite() && **r >= 0.0)) {
        return Err(Error::param("radii", format!("invalid radius {r}")));
    }
    if !(opts.peak_fraction > 0.0 && opts.peak_fraction < 1.0) {
        return Err(Error::param(
            "peak_fraction",
            format!("must lie in (0, 1), got {}", opts.peak_fraction),
        ));
    }
    if opts.angular_samples < 3 {
        return Err(Error::param("angular_samples", "need at least 3 samples per circle"));
    }
    if center.0 >= prototype.width() || center.1 >= prototype.height() {
        return Err(Error::param("center", "lies outside the prototype"));
    }

    let c = dog_response(prototype, opts.sigma)?;
    let (cx, cy) = (center.0 as f64, center.1 as f64);

    let mut radii: Vec<f64> = opts.radii.iter().copied().filter(|&r| r > 0.0).collect();
    radii.sort_by(f64::total_cmp);
    radii.dedup();

    let mut points = vec![FilterPoint::new(opts.sigma, 0.0, 0.0)?];
    let mut any_response = c.get(center.0, center.1) > RESPONSE_FLOOR;
    for rho in radii {
        let samples: Vec<f64> = (0..opts.angular_samples)
            .map(|k| {
                let theta = k as f64 * TAU / opts.angular_samples as f64;
                bilinear(&c, cx + rho * theta.cos(), cy + rho * theta.sin())
            })
            .collect();
        let peaks = circle_peaks(&samples, opts.peak_fraction, opts.merge_window);
        any_response |= !peaks.is_empty();
        for phi in peaks {
            points.push(FilterPoint::new(opts.sigma, rho, normalize_angle(phi))?);
        }
    }

    if !any_response || (points.len() == 1 && opts.radii.iter().any(|&r| r > 0.0)) {
        return Err(Error::ConfigurationFailed(
            "prototype has no intensity variation on any circle".into(),
        ));
    }

    let kind = opts.kind.unwrap_or_else(|| {
        if FilterConfig::new(points.clone(), opts.sigma0, opts.alpha, FilterKind::Symmetric).is_ok() {
            FilterKind::Symmetric
        } else {
            FilterKind::Asymmetric
        }
    });
    FilterConfig::new(points, opts.sigma0, opts.alpha, kind)
}
