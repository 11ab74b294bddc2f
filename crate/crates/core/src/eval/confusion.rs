use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::preprocess::FovMask;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub fn_: u64,
    pub tn: u64,
}

impl ConfusionMatrix {
    pub fn new(tp: u64, fp: u64, fn_: u64, tn: u64) -> Self {
        Self { tp, fp, fn_, tn }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> u64 {
        self.tp + self.fn_
    }

    pub fn negatives(&self) -> u64 {
        self.tn + self.fp
    }

    /// Swaps the roles of the two classes in the ground truth.
    pub fn inverted(&self) -> Self {
        Self::new(self.fn_, self.tn, self.tp, self.fp)
    }
}

impl std::ops::Add for ConfusionMatrix {
    type Output = Self;

    fn add(self, o: Self) -> Self {
        Self::new(self.tp + o.tp, self.fp + o.fp, self.fn_ + o.fn_, self.tn + o.tn)
    }
}

pub(crate) fn ensure_binary(img: &GrayImage, what: &'static str) -> Result<()> {
    if img.data().iter().all(|&v| v == 0.0 || v == 1.0) {
        Ok(())
    } else {
        Err(Error::NonBinary(what))
    }
}

/// Counts agreement between a binary prediction and ground truth over the
/// pixels where `mask` is set.
pub fn confusion(pred: &GrayImage, gt: &GrayImage, mask: &FovMask) -> Result<ConfusionMatrix> {
    pred.ensure_same_dims(gt.dims())?;
    pred.ensure_same_dims(mask.dims())?;
    ensure_binary(pred, "prediction")?;
    ensure_binary(gt, "ground truth")?;
    let mut cm = ConfusionMatrix::default();
    for ((&p, &g), &m) in pred.data().iter().zip(gt.data()).zip(mask.data()) {
        if !m {
            continue;
        }
        match (p == 1.0, g == 1.0) {
            (true, true) => cm.tp += 1,
            (true, false) => cm.fp += 1,
            (false, true) => cm.fn_ += 1,
            (false, false) => cm.tn += 1,
        }
    }
    Ok(cm)
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc(cm: &ConfusionMatrix) -> f64 {
    let (tp, fp, fn_, tn) = (cm.tp as f64, cm.fp as f64, cm.fn_ as f64, cm.tn as f64);
    let denom = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    if denom == 0.0 {
        return 0.0;
    }
    (tp * tn - fp * fn_) / denom.sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BasicMetrics {
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.total() {
        0 => Err(Error::UndefinedMetric("accuracy")),
        n => Ok((cm.tp + cm.tn) as f64 / n as f64),
    }
}

pub fn sensitivity(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.positives() {
        0 => Err(Error::UndefinedMetric("sensitivity")),
        n => Ok(cm.tp as f64 / n as f64),
    }
}

pub fn specificity(cm: &ConfusionMatrix) -> Result<f64> {
    match cm.negatives() {
        0 => Err(Error::UndefinedMetric("specificity")),
        n => Ok(cm.tn as f64 / n as f64),
    }
}

pub fn basic_metrics(cm: &ConfusionMatrix) -> Result<BasicMetrics> {
    Ok(BasicMetrics {
        accuracy: accuracy(cm)?,
        sensitivity: sensitivity(cm)?,
        specificity: specificity(cm)?,
    })
}
