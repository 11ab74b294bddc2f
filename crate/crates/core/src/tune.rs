//! Parameter selection: dataset splitting, grid search over filter
//! parameters with a full threshold sweep, and the sensitivity experiment.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cosfire::{
    analytic_asymmetric, analytic_symmetric, combined_response, filter_response, make_bank,
    normalize_response, threshold_response, FilterConfig, FilterKind, OrientationBank,
    ResponseCache, SegmentationParams,
};
use crate::error::{Error, Result};
use crate::eval::{
    confusion, ensure_binary, mcc, paired_t_test, roc_from_sweeps, RocCurve, TTestResult,
    ThresholdSweep, THRESHOLD_LEVELS,
};
use crate::image::GrayImage;
use crate::preprocess::FovMask;

pub const DEFAULT_RHO_STEP: f64 = 2.0;

/// Rough memory allowed per image for memoised blurred maps.
const CACHE_BUDGET_BYTES: usize = 512 << 20;

fn default_rho_step() -> f64 {
    DEFAULT_RHO_STEP
}

/// Rounds away accumulated error from decimal steps such as `4.8 - 0.1`.
fn snap(v: f64) -> f64 {
    (v * 1e9).round() / 1e9
}

/// A preprocessed image with its binary ground truth and evaluation mask.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub image: GrayImage,
    pub ground_truth: GrayImage,
    pub mask: FovMask,
}

impl Sample {
    pub fn new(image: GrayImage, ground_truth: GrayImage, mask: FovMask) -> Result<Self> {
        image.ensure_same_dims(ground_truth.dims())?;
        image.ensure_same_dims(mask.dims())?;
        ensure_binary(&ground_truth, "ground truth")?;
        Ok(Self { image, ground_truth, mask })
    }

    fn cache(&self) -> ResponseCache<'_> {
        let pixels = self.image.data().len().max(1);
        let limit = (CACHE_BUDGET_BYTES / (8 * pixels)).max(4);
        ResponseCache::new(&self.image).with_capacity_limit(limit)
    }
}

/// Deterministic shuffle by `seed`, then the first half for training and the
/// second for validation.
pub fn split_dataset<T: Clone>(items: &[T], seed: u64) -> Result<(Vec<T>, Vec<T>)> {
    if items.is_empty() {
        return Err(Error::EmptyInput("dataset"));
    }
    if !items.len().is_multiple_of(2) {
        return Err(Error::param(
            "dataset",
            format!("needs an even number of items, got {}", items.len()),
        ));
    }
    let mut order: Vec<usize> = (0..items.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train, val) = order.split_at(items.len() / 2);
    let pick = |idx: &[usize]| idx.iter().map(|&i| items[i].clone()).collect();
    Ok((pick(train), pick(val)))
}

/// The four tunable values of one filter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FilterParams {
    pub sigma: f64,
    pub rho_max: f64,
    pub sigma0: f64,
    pub alpha: f64,
}

impl FilterParams {
    pub fn new(sigma: f64, rho_max: f64, sigma0: f64, alpha: f64) -> Self {
        Self { sigma, rho_max, sigma0, alpha }
    }

    /// Filter with circles at `0, rho_step, ..., rho_max`.
    pub fn build(&self, kind: FilterKind, rho_step: f64) -> Result<FilterConfig> {
        match kind {
            FilterKind::Symmetric => {
                analytic_symmetric(self.sigma, self.rho_max, rho_step, self.sigma0, self.alpha)
            }
            FilterKind::Asymmetric => {
                analytic_asymmetric(self.sigma, self.rho_max, rho_step, self.sigma0, self.alpha)
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SearchSpace {
    /// May be left empty for the asymmetric stage of [`tune_sequential`].
    #[serde(default)]
    pub sigma: Vec<f64>,
    pub rho_max: Vec<f64>,
    pub sigma0: Vec<f64>,
    pub alpha: Vec<f64>,
    #[serde(default = "default_rho_step")]
    pub rho_step: f64,
}

impl SearchSpace {
    pub fn new(sigma: Vec<f64>, rho_max: Vec<f64>, sigma0: Vec<f64>, alpha: Vec<f64>) -> Self {
        Self { sigma, rho_max, sigma0, alpha, rho_step: DEFAULT_RHO_STEP }
    }

    pub fn with_rho_step(mut self, rho_step: f64) -> Self {
        self.rho_step = rho_step;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let lists: [(&'static str, &Vec<f64>); 4] = [
            ("sigma", &self.sigma),
            ("rho_max", &self.rho_max),
            ("sigma0", &self.sigma0),
            ("alpha", &self.alpha),
        ];
        for (name, list) in lists {
            if list.is_empty() {
                return Err(Error::param(name, "search list is empty"));
            }
            if let Some(v) = list.iter().find(|v| !(v.is_finite() && **v > 0.0)) {
                return Err(Error::param(name, format!("search values must be positive, got {v}")));
            }
        }
        if !(self.rho_step.is_finite() && self.rho_step > 0.0) {
            return Err(Error::param("rho_step", "must be positive"));
        }
        Ok(())
    }

    /// Every grid cell, in lexicographic `(sigma, rho_max, sigma0, alpha)` order.
    pub fn cells(&self) -> Result<Vec<FilterParams>> {
        self.validate()?;
        let sorted = |v: &[f64]| {
            let mut v = v.to_vec();
            v.sort_by(f64::total_cmp);
            v.dedup();
            v
        };
        let (s, r, s0, a) = (sorted(&self.sigma), sorted(&self.rho_max), sorted(&self.sigma0), sorted(&self.alpha));
        let mut cells = Vec::with_capacity(s.len() * r.len() * s0.len() * a.len());
        for &sigma in &s {
            for &rho_max in &r {
                for &sigma0 in &s0 {
                    for &alpha in &a {
                        cells.push(FilterParams::new(sigma, rho_max, sigma0, alpha));
                    }
                }
            }
        }
        Ok(cells)
    }
}

/// Candidate scales for the bar-ending filter: `sigma_s - 0.1 k` for
/// `k = 1..=6`, keeping only positive values.
pub fn asymmetric_sigma_range(symmetric_sigma: f64) -> Vec<f64> {
    (1..=6)
        .map(|k| snap(symmetric_sigma - 0.1 * k as f64))
        .filter(|&s| s > 0.0)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellScore {
    #[serde(flatten)]
    pub params: FilterParams,
    /// Best threshold for this cell alone.
    pub threshold: u8,
    pub mean_mcc: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuningResult {
    pub kind: FilterKind,
    pub params: FilterParams,
    pub rho_step: f64,
    pub config: FilterConfig,
    pub threshold: u8,
    pub mean_mcc: f64,
    /// Every evaluated cell in grid order.
    pub cells: Vec<CellScore>,
    /// Macro-averaged ROC of the winning cell over the training images.
    pub roc: RocCurve,
}

/// The exportable part of a [`TuningResult`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningSummary {
    pub kind: FilterKind,
    pub threshold: u8,
    pub mean_mcc: f64,
    pub rho_step: f64,
    pub params: FilterParams,
    #[serde(default, rename = "cell")]
    pub cells: Vec<CellScore>,
}

impl TuningResult {
    pub fn summary(&self) -> TuningSummary {
        TuningSummary {
            kind: self.kind,
            threshold: self.threshold,
            mean_mcc: self.mean_mcc,
            rho_step: self.rho_step,
            params: self.params,
            cells: self.cells.clone(),
        }
    }

    pub fn to_text(&self) -> String {
        toml::to_string(&self.summary()).expect("tuning summary is always representable")
    }
}

fn add_into(acc: &mut GrayImage, other: &GrayImage) {
    for (v, &o) in acc.data_mut().iter_mut().zip(other.data()) {
        *v += o;
    }
}

fn sample_sweeps(
    sample: &Sample,
    banks: &[OrientationBank],
    fixed: Option<&OrientationBank>,
) -> Result<Vec<ThresholdSweep>> {
    let mut cache = sample.cache();
    let base = fixed.map(|b| filter_response(&mut cache, b)).transpose()?;
    banks
        .iter()
        .map(|bank| {
            let r = match &base {
                Some(b) => {
                    let mut r = b.clone();
                    add_into(&mut r, &filter_response(&mut cache, bank)?);
                    r
                }
                None => filter_response(&mut cache, bank)?,
            };
            let normalized = normalize_response(&r, &sample.mask)?;
            ThresholdSweep::new(&normalized, &sample.ground_truth, &sample.mask)
        })
        .collect()
}

/// Exhaustive search for the cell and threshold with the best mean MCC over
/// `samples`. For the asymmetric filter, `fixed_symmetric` is the already
/// chosen symmetric filter and candidates are scored on the summed response.
///
/// Ties go to the lower threshold, then to the lexicographically smaller
/// parameters.
pub fn grid_search(
    samples: &[Sample],
    space: &SearchSpace,
    kind: FilterKind,
    fixed_symmetric: Option<&FilterConfig>,
) -> Result<TuningResult> {
    if samples.is_empty() {
        return Err(Error::EmptyInput("training set"));
    }
    let fixed = match (kind, fixed_symmetric) {
        (FilterKind::Asymmetric, Some(f)) if f.kind() == FilterKind::Symmetric => Some(make_bank(f)),
        (FilterKind::Asymmetric, _) => {
            return Err(Error::param(
                "fixed_symmetric",
                "asymmetric search needs the chosen symmetric filter",
            ))
        }
        (FilterKind::Symmetric, None) => None,
        (FilterKind::Symmetric, Some(_)) => {
            return Err(Error::param("fixed_symmetric", "only used by the asymmetric search"))
        }
    };
    let cells = space.cells()?;
    let configs = cells
        .iter()
        .map(|c| c.build(kind, space.rho_step))
        .collect::<Result<Vec<_>>>()?;
    let banks: Vec<OrientationBank> = configs.iter().map(make_bank).collect();

    let per_image = samples
        .par_iter()
        .map(|s| sample_sweeps(s, &banks, fixed.as_ref()))
        .collect::<Result<Vec<_>>>()?;

    let n = samples.len() as f64;
    let mut scores = Vec::with_capacity(cells.len());
    let mut best: Option<(usize, usize, f64)> = None;
    for (ci, params) in cells.iter().enumerate() {
        let mut mean = vec![0.0; THRESHOLD_LEVELS];
        for sweeps in &per_image {
            for (m, v) in mean.iter_mut().zip(sweeps[ci].mcc_curve()) {
                *m += v;
            }
        }
        let mut cell_best = (0usize, f64::NEG_INFINITY);
        for (t, m) in mean.iter_mut().enumerate() {
            *m /= n;
            if *m > cell_best.1 {
                cell_best = (t, *m);
            }
        }
        scores.push(CellScore {
            params: *params,
            threshold: cell_best.0 as u8,
            mean_mcc: cell_best.1,
        });
        let better = match best {
            None => true,
            Some((_, bt, bm)) => cell_best.1 > bm || (cell_best.1 == bm && cell_best.0 < bt),
        };
        if better {
            best = Some((ci, cell_best.0, cell_best.1));
        }
    }

    let (ci, threshold, mean_mcc) = best.expect("grid has at least one cell");
    let winner_sweeps: Vec<ThresholdSweep> = per_image.iter().map(|s| s[ci].clone()).collect();
    Ok(TuningResult {
        kind,
        params: cells[ci],
        rho_step: space.rho_step,
        config: configs[ci].clone(),
        threshold: threshold as u8,
        mean_mcc,
        cells: scores,
        roc: roc_from_sweeps(&winner_sweeps)?,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SequentialTuning {
    pub symmetric: TuningResult,
    /// Its threshold applies to the summed response and is the one to use.
    pub asymmetric: TuningResult,
}

/// Symmetric search first, then the asymmetric search with the symmetric
/// winner fixed. An empty `asymmetric.sigma` list is filled from
/// [`asymmetric_sigma_range`] around the chosen symmetric scale.
pub fn tune_sequential(
    train: &[Sample],
    symmetric: &SearchSpace,
    asymmetric: &SearchSpace,
) -> Result<SequentialTuning> {
    let sym = grid_search(train, symmetric, FilterKind::Symmetric, None)?;
    let mut asym_space = asymmetric.clone();
    if asym_space.sigma.is_empty() {
        asym_space.sigma = asymmetric_sigma_range(sym.params.sigma);
    }
    let asym = grid_search(train, &asym_space, FilterKind::Asymmetric, Some(&sym.config))?;
    Ok(SequentialTuning { symmetric: sym, asymmetric: asym })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SensitivityParam {
    Sigma,
    Sigma0,
    Alpha,
}

impl SensitivityParam {
    pub fn as_str(self) -> &'static str {
        match self {
            SensitivityParam::Sigma => "sigma",
            SensitivityParam::Sigma0 => "sigma0",
            SensitivityParam::Alpha => "alpha",
        }
    }

    fn get(self, p: &FilterParams) -> f64 {
        match self {
            SensitivityParam::Sigma => p.sigma,
            SensitivityParam::Sigma0 => p.sigma0,
            SensitivityParam::Alpha => p.alpha,
        }
    }

    fn with(self, p: &FilterParams, v: f64) -> FilterParams {
        let mut out = *p;
        match self {
            SensitivityParam::Sigma => out.sigma = v,
            SensitivityParam::Sigma0 => out.sigma0 = v,
            SensitivityParam::Alpha => out.alpha = v,
        }
        out
    }

    /// The blur slope may drop to zero (a constant blur); scales may not.
    fn admits(self, v: f64) -> bool {
        match self {
            SensitivityParam::Alpha => v >= 0.0,
            _ => v > 0.0,
        }
    }
}

impl fmt::Display for SensitivityParam {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SensitivityParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SensitivityParam::Sigma),
            "sigma0" => Ok(SensitivityParam::Sigma0),
            "alpha" => Ok(SensitivityParam::Alpha),
            other => Err(Error::Parse {
                what: "parameter name",
                reason: format!("expected sigma, sigma0 or alpha, got `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SensitivityStatus {
    Evaluated(TTestResult),
    /// Zero offset: the optimum compared with itself.
    Skipped,
    /// The perturbed value is out of range.
    Invalid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensitivityRow {
    pub offset: f64,
    pub value: f64,
    pub status: SensitivityStatus,
}

/// MCC of each sample segmented with `symmetric` (plus `asymmetric`) at `threshold`.
pub fn per_image_mcc(
    samples: &[Sample],
    symmetric: &OrientationBank,
    asymmetric: Option<&OrientationBank>,
    threshold: f64,
) -> Result<Vec<f64>> {
    let params = SegmentationParams::new(threshold)?;
    samples
        .par_iter()
        .map(|s| {
            let r = combined_response(&mut s.cache(), symmetric, asymmetric)?;
            let seg = threshold_response(&normalize_response(&r, &s.mask)?, &s.mask, params)?;
            Ok(mcc(&confusion(&seg, &s.ground_truth, &s.mask)?))
        })
        .collect()
}

/// Perturbs one symmetric-filter parameter by each offset, keeps everything
/// else (including any asymmetric filter) at its optimum, and compares the
/// per-image MCCs with the optimal ones by a paired t-test on
/// `optimal - perturbed`.
pub fn sensitivity_experiment(
    samples: &[Sample],
    optimal: &FilterParams,
    rho_step: f64,
    asymmetric: Option<&FilterConfig>,
    threshold: f64,
    param: SensitivityParam,
    offsets: &[f64],
) -> Result<Vec<SensitivityRow>> {
    if samples.len() < 2 {
        return Err(Error::param("samples", "the paired t-test needs at least two images"));
    }
    let asym_bank = asymmetric.map(make_bank);
    let sym_bank = make_bank(&optimal.build(FilterKind::Symmetric, rho_step)?);
    let baseline = per_image_mcc(samples, &sym_bank, asym_bank.as_ref(), threshold)?;

    offsets
        .iter()
        .map(|&offset| {
            let value = snap(param.get(optimal) + offset);
            if offset == 0.0 {
                return Ok(SensitivityRow { offset, value, status: SensitivityStatus::Skipped });
            }
            if !param.admits(value) {
                return Ok(SensitivityRow { offset, value, status: SensitivityStatus::Invalid });
            }
            let perturbed = match param.with(optimal, value).build(FilterKind::Symmetric, rho_step) {
                Ok(cfg) => cfg,
                Err(_) => {
                    return Ok(SensitivityRow { offset, value, status: SensitivityStatus::Invalid })
                }
            };
            let mccs = per_image_mcc(samples, &make_bank(&perturbed), asym_bank.as_ref(), threshold)?;
            let t = paired_t_test(&baseline, &mccs)?;
            Ok(SensitivityRow { offset, value, status: SensitivityStatus::Evaluated(t) })
        })
        .collect()
}
