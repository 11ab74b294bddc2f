use std::f64::consts::{FRAC_PI_2, PI, TAU};
use std::fmt::{self, Write as _};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Normalises an angle into `[0, 2π)`.
pub fn normalize_angle(phi: f64) -> f64 {
    let a = phi.rem_euclid(TAU);
    if a >= TAU {
        0.0
    } else {
        a
    }
}

/// Smallest absolute difference between two angles.
pub fn angular_distance(a: f64, b: f64) -> f64 {
    let d = (a - b).rem_euclid(TAU);
    d.min(TAU - d)
}

/// A point of interest: DoG scale, circle radius and polar angle.
///
/// Angles run from the +x (column) axis toward +y (row), so a point at
/// `phi = π/2` sits `rho` rows below the filter centre.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterPoint {
    pub sigma: f64,
    pub rho: f64,
    pub phi: f64,
}

impl FilterPoint {
    pub fn new(sigma: f64, rho: f64, phi: f64) -> Result<Self> {
        if !(sigma.is_finite() && sigma > 0.0) {
            return Err(Error::param("sigma", format!("must be positive, got {sigma}")));
        }
        if !(rho.is_finite() && rho >= 0.0) {
            return Err(Error::param("rho", format!("must be non-negative, got {rho}")));
        }
        if !phi.is_finite() {
            return Err(Error::param("phi", "must be finite"));
        }
        Ok(Self {
            sigma,
            rho,
            phi: normalize_angle(phi),
        })
    }

    pub fn is_center(&self) -> bool {
        self.rho == 0.0
    }

    /// Whole-pixel offset `(rho cos phi, rho sin phi)` from the filter centre
    /// to the point. The filter reads the point's response there.
    pub fn offset(&self) -> (isize, isize) {
        (
            snap_round(self.rho * self.phi.cos()),
            snap_round(self.rho * self.phi.sin()),
        )
    }

    /// The shift `(Δx, Δy) = (-rho cos phi, -rho sin phi)` that moves the
    /// point's response onto the centre.
    pub fn shift(&self) -> (isize, isize) {
        let (ox, oy) = self.offset();
        (-ox, -oy)
    }
}

// Angle noise below 1e-3 px is absorbed before rounding, so a config that has
// been through the 6-decimal text format rounds exactly like the original.
fn snap_round(v: f64) -> isize {
    let snapped = (v * 1000.0).round() / 1000.0;
    snapped.round() as isize
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Symmetric,
    Asymmetric,
}

impl FilterKind {
    /// Number of rotated copies in the orientation bank.
    pub fn orientations(self) -> usize {
        match self {
            FilterKind::Symmetric => 12,
            FilterKind::Asymmetric => 24,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            FilterKind::Symmetric => "symmetric",
            FilterKind::Asymmetric => "asymmetric",
        }
    }
}

impl fmt::Display for FilterKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "symmetric" => Ok(FilterKind::Symmetric),
            "asymmetric" => Ok(FilterKind::Asymmetric),
            other => Err(Error::Parse {
                what: "filter kind",
                reason: format!("expected `symmetric` or `asymmetric`, got `{other}`"),
            }),
        }
    }
}

// Tolerance for the half-turn closure check on prototype-derived angles.
const CLOSURE_TOLERANCE: f64 = 2.0 * PI / 180.0;

/// One configured B-COSFIRE filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    points: Vec<FilterPoint>,
    sigma0: f64,
    alpha: f64,
    kind: FilterKind,
}

impl FilterConfig {
    pub fn new(points: Vec<FilterPoint>, sigma0: f64, alpha: f64, kind: FilterKind) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::param("points", "a filter needs at least one point"));
        }
        let centers = points.iter().filter(|p| p.is_center()).count();
        if centers != 1 {
            return Err(Error::param(
                "points",
                format!("exactly one centre point (rho = 0) required, found {centers}"),
            ));
        }
        if !(sigma0.is_finite() && sigma0 > 0.0) {
            return Err(Error::param("sigma0", format!("must be positive, got {sigma0}")));
        }
        if !(alpha.is_finite() && alpha >= 0.0) {
            return Err(Error::param("alpha", format!("must be non-negative, got {alpha}")));
        }
        if kind == FilterKind::Symmetric && !closed_under_half_turn(&points) {
            return Err(Error::param(
                "points",
                "symmetric filter points must come in pairs phi, phi + π",
            ));
        }
        Ok(Self {
            points,
            sigma0,
            alpha,
            kind,
        })
    }

    pub fn points(&self) -> &[FilterPoint] {
        &self.points
    }

    pub fn sigma0(&self) -> f64 {
        self.sigma0
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn kind(&self) -> FilterKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn max_rho(&self) -> f64 {
        self.points.iter().map(|p| p.rho).fold(0.0, f64::max)
    }

    /// Standard deviation of the blur applied to a point on radius `rho`.
    pub fn blur_sigma(&self, rho: f64) -> f64 {
        blur_sigma(self.sigma0, self.alpha, rho)
    }

    pub fn weights(&self) -> WeightScheme {
        WeightScheme::for_points(&self.points)
    }

    /// Text form: kind, blur parameters, then one `[sigma, rho, phi]` triple per point.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let _ = writeln!(s, "# B-COSFIRE filter configuration");
        let _ = writeln!(s, "format = 1");
        let _ = writeln!(s, "kind = \"{}\"", self.kind);
        let _ = writeln!(s, "sigma0 = {:.6}", self.sigma0);
        let _ = writeln!(s, "alpha = {:.6}", self.alpha);
        let _ = writeln!(s, "# sigma, rho, phi (radians)");
        let _ = writeln!(s, "points = [");
        for p in &self.points {
            let _ = writeln!(s, "  [{:.6}, {:.6}, {:.6}],", p.sigma, p.rho, p.phi);
        }
        let _ = writeln!(s, "]");
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        #[serde(deny_unknown_fields)]
        struct FilterFile {
            format: u32,
            kind: FilterKind,
            sigma0: f64,
            alpha: f64,
            points: Vec<[f64; 3]>,
        }

        let file: FilterFile = toml::from_str(text).map_err(|e| Error::Parse {
            what: "filter configuration",
            reason: e.to_string(),
        })?;
        if file.format != 1 {
            return Err(Error::Parse {
                what: "filter configuration",
                reason: format!("unsupported format version {}", file.format),
            });
        }
        let points = file
            .points
            .iter()
            .map(|&[sigma, rho, phi]| FilterPoint::new(sigma, rho, phi))
            .collect::<Result<Vec<_>>>()?;
        FilterConfig::new(points, file.sigma0, file.alpha, file.kind)
    }
}

fn closed_under_half_turn(points: &[FilterPoint]) -> bool {
    points.iter().filter(|p| !p.is_center()).all(|p| {
        let opposite = normalize_angle(p.phi + PI);
        points.iter().any(|q| {
            !q.is_center()
                && (q.rho - p.rho).abs() < 1e-9
                && (q.sigma - p.sigma).abs() < 1e-9
                && angular_distance(q.phi, opposite) <= CLOSURE_TOLERANCE
        })
    })
}

/// `sigma' = sigma0 + alpha * rho`.
pub fn blur_sigma(sigma0: f64, alpha: f64, rho: f64) -> f64 {
    sigma0 + alpha * rho
}

/// Per-point weights `exp(-rho^2 / (2 sigma_hat^2))` with `sigma_hat = max(rho) / 3`.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightScheme {
    pub sigma_hat: f64,
    pub omega: Vec<f64>,
}

impl WeightScheme {
    pub fn for_points(points: &[FilterPoint]) -> Self {
        let max_rho = points.iter().map(|p| p.rho).fold(0.0, f64::max);
        let sigma_hat = max_rho / 3.0;
        let omega = points
            .iter()
            .map(|p| {
                if p.rho == 0.0 || sigma_hat == 0.0 {
                    1.0
                } else {
                    (-(p.rho * p.rho) / (2.0 * sigma_hat * sigma_hat)).exp()
                }
            })
            .collect();
        Self { sigma_hat, omega }
    }

    pub fn total(&self) -> f64 {
        self.omega.iter().sum()
    }
}

fn ring_radii(rho_max: f64, rho_step: f64) -> Result<Vec<f64>> {
    if !(rho_step.is_finite() && rho_step > 0.0) {
        return Err(Error::param("rho_step", format!("must be positive, got {rho_step}")));
    }
    if !(rho_max.is_finite() && rho_max >= rho_step) {
        return Err(Error::param(
            "rho_max",
            format!("must be at least rho_step ({rho_step}), got {rho_max}"),
        ));
    }
    let rings = (rho_max / rho_step + 1e-9).floor() as usize;
    Ok((1..=rings).map(|k| k as f64 * rho_step).collect())
}

/// Point set a vertical full bar yields: the centre plus `phi = π/2, 3π/2`
/// on every ring `rho_step, 2 rho_step, ..., rho_max`.
pub fn analytic_symmetric(
    sigma: f64,
    rho_max: f64,
    rho_step: f64,
    sigma0: f64,
    alpha: f64,
) -> Result<FilterConfig> {
    let mut points = vec![FilterPoint::new(sigma, 0.0, 0.0)?];
    for rho in ring_radii(rho_max, rho_step)? {
        points.push(FilterPoint::new(sigma, rho, FRAC_PI_2)?);
        points.push(FilterPoint::new(sigma, rho, 3.0 * FRAC_PI_2)?);
    }
    FilterConfig::new(points, sigma0, alpha, FilterKind::Symmetric)
}

/// Point set of a vertical bar ending: the centre plus `phi = π/2` on every ring.
pub fn analytic_asymmetric(
    sigma: f64,
    rho_max: f64,
    rho_step: f64,
    sigma0: f64,
    alpha: f64,
) -> Result<FilterConfig> {
    let mut points = vec![FilterPoint::new(sigma, 0.0, 0.0)?];
    for rho in ring_radii(rho_max, rho_step)? {
        points.push(FilterPoint::new(sigma, rho, FRAC_PI_2)?);
    }
    FilterConfig::new(points, sigma0, alpha, FilterKind::Asymmetric)
}

/// Rotates every point by `psi`. The centre point has no direction and is
/// left as is.
pub fn rotate_config(config: &FilterConfig, psi: f64) -> FilterConfig {
    FilterConfig {
        points: config
            .points
            .iter()
            .map(|p| match p.is_center() {
                true => *p,
                false => FilterPoint {
                    phi: normalize_angle(p.phi + psi),
                    ..*p
                },
            })
            .collect(),
        ..config.clone()
    }
}
