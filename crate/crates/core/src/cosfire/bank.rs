use std::f64::consts::PI;

use super::config::{rotate_config, FilterConfig, FilterKind};

/// Angular spacing between neighbouring orientations.
pub const ORIENTATION_STEP: f64 = PI / 12.0;

/// A filter together with its rotated copies `R_psi(S)`, `psi = k π/12`.
#[derive(Debug, Clone, PartialEq)]
pub struct OrientationBank {
    base: FilterConfig,
    orientations: Vec<(f64, FilterConfig)>,
}

impl OrientationBank {
    pub fn base(&self) -> &FilterConfig {
        &self.base
    }

    pub fn kind(&self) -> FilterKind {
        self.base.kind()
    }

    /// `(psi, R_psi(S))` pairs in increasing `psi`.
    pub fn orientations(&self) -> &[(f64, FilterConfig)] {
        &self.orientations
    }

    pub fn len(&self) -> usize {
        self.orientations.len()
    }

    pub fn is_empty(&self) -> bool {
        self.orientations.is_empty()
    }

    /// A bank holding just the `index`-th orientation.
    pub fn only(&self, index: usize) -> OrientationBank {
        OrientationBank {
            base: self.base.clone(),
            orientations: vec![self.orientations[index].clone()],
        }
    }
}

/// 12 rotations over a half turn for symmetric filters, 24 over a full turn
/// for asymmetric ones.
pub fn make_bank(config: &FilterConfig) -> OrientationBank {
    let n = config.kind().orientations();
    let orientations = (0..n)
        .map(|k| {
            let psi = k as f64 * ORIENTATION_STEP;
            (psi, rotate_config(config, psi))
        })
        .collect();
    OrientationBank {
        base: config.clone(),
        orientations,
    }
}
