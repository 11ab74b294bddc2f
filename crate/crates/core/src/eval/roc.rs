use std::fmt::Write as _;

use super::confusion::{ensure_binary, mcc, ConfusionMatrix};
use crate::cosfire::RESPONSE_SCALE;
use crate::error::{Error, Result};
use crate::image::GrayImage;
use crate::preprocess::FovMask;

/// Integer thresholds `0..=255` swept on the normalised response.
pub const THRESHOLD_LEVELS: usize = 256;

/// Per-image counts of positives and negatives above every integer threshold,
/// so the confusion matrix at any threshold is a lookup.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ThresholdSweep {
    pos_above: Vec<u64>,
    neg_above: Vec<u64>,
    positives: u64,
    negatives: u64,
}

impl ThresholdSweep {
    /// `normalized` lives on `[0, 255]`; a pixel counts as foreground at
    /// threshold `t` when its value is strictly greater than `t`.
    pub fn new(normalized: &GrayImage, gt: &GrayImage, mask: &FovMask) -> Result<Self> {
        normalized.ensure_same_dims(gt.dims())?;
        normalized.ensure_same_dims(mask.dims())?;
        ensure_binary(gt, "ground truth")?;
        let mut pos = vec![0u64; THRESHOLD_LEVELS];
        let mut neg = vec![0u64; THRESHOLD_LEVELS];
        let (mut positives, mut negatives) = (0, 0);
        for ((&v, &g), &m) in normalized.data().iter().zip(gt.data()).zip(mask.data()) {
            if !m {
                continue;
            }
            if !(0.0..=RESPONSE_SCALE).contains(&v) {
                return Err(Error::param("response", format!("value {v} outside [0, 255]")));
            }
            let hist = if g == 1.0 {
                positives += 1;
                &mut pos
            } else {
                negatives += 1;
                &mut neg
            };
            // v > t holds exactly for integer t <= ceil(v) - 1.
            let last = v.ceil() as i64 - 1;
            if last >= 0 {
                hist[(last as usize).min(THRESHOLD_LEVELS - 1)] += 1;
            }
        }
        for k in (0..THRESHOLD_LEVELS - 1).rev() {
            pos[k] += pos[k + 1];
            neg[k] += neg[k + 1];
        }
        Ok(Self {
            pos_above: pos,
            neg_above: neg,
            positives,
            negatives,
        })
    }

    pub fn confusion(&self, threshold: usize) -> ConfusionMatrix {
        let tp = self.pos_above[threshold];
        let fp = self.neg_above[threshold];
        ConfusionMatrix::new(tp, fp, self.positives - tp, self.negatives - fp)
    }

    /// MCC at every threshold.
    pub fn mcc_curve(&self) -> Vec<f64> {
        (0..THRESHOLD_LEVELS).map(|t| mcc(&self.confusion(t))).collect()
    }

    /// `(fpr, tpr)` at `threshold`; a rate with an empty denominator is 0.
    pub fn rates(&self, threshold: usize) -> (f64, f64) {
        let ratio = |a: u64, b: u64| if b == 0 { 0.0 } else { a as f64 / b as f64 };
        (
            ratio(self.neg_above[threshold], self.negatives),
            ratio(self.pos_above[threshold], self.positives),
        )
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RocPoint {
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    points: Vec<RocPoint>,
}

impl RocCurve {
    /// Points must have strictly increasing thresholds, rates in `[0, 1]` and
    /// both rates non-increasing.
    pub fn new(points: Vec<RocPoint>) -> Result<Self> {
        for p in &points {
            if !p.threshold.is_finite()
                || !(0.0..=1.0).contains(&p.fpr)
                || !(0.0..=1.0).contains(&p.tpr)
            {
                return Err(Error::param("roc", format!("invalid point {p:?}")));
            }
        }
        for w in points.windows(2) {
            if w[1].threshold <= w[0].threshold {
                return Err(Error::param("roc", "thresholds must strictly increase"));
            }
            if w[1].fpr > w[0].fpr || w[1].tpr > w[0].tpr {
                return Err(Error::param("roc", "rates must not increase with the threshold"));
            }
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[RocPoint] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn at_threshold(&self, threshold: f64) -> Option<&RocPoint> {
        self.points.iter().find(|p| p.threshold == threshold)
    }

    /// Exact curve of raw scores: one point below the smallest score and one
    /// at every distinct score, classifying `score > threshold` as positive.
    pub fn from_scores(scores: &[f64], labels: &[bool]) -> Result<Self> {
        if scores.len() != labels.len() {
            return Err(Error::param("labels", "length differs from scores"));
        }
        if scores.is_empty() {
            return Err(Error::EmptyInput("scores"));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(Error::param("scores", "must be finite"));
        }
        let mut pairs: Vec<(f64, bool)> = scores.iter().copied().zip(labels.iter().copied()).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let positives = labels.iter().filter(|&&l| l).count() as f64;
        let negatives = labels.len() as f64 - positives;
        let ratio = |a: f64, b: f64| if b == 0.0 { 0.0 } else { a / b };

        let mut tp_above = positives;
        let mut fp_above = negatives;
        let mut points = vec![RocPoint {
            threshold: pairs[0].0 - 1.0,
            fpr: ratio(fp_above, negatives),
            tpr: ratio(tp_above, positives),
        }];
        let mut i = 0;
        while i < pairs.len() {
            let s = pairs[i].0;
            while i < pairs.len() && pairs[i].0 == s {
                if pairs[i].1 {
                    tp_above -= 1.0;
                } else {
                    fp_above -= 1.0;
                }
                i += 1;
            }
            points.push(RocPoint {
                threshold: s,
                fpr: ratio(fp_above, negatives),
                tpr: ratio(tp_above, positives),
            });
        }
        Self::new(points)
    }

    /// `threshold,fpr,tpr` rows with six decimals.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("threshold,fpr,tpr\n");
        for p in &self.points {
            let _ = writeln!(out, "{:.6},{:.6},{:.6}", p.threshold, p.fpr, p.tpr);
        }
        out
    }
}

/// Macro-averaged curve: rates are computed per image and then averaged at
/// every integer threshold.
pub fn roc_from_sweeps(sweeps: &[ThresholdSweep]) -> Result<RocCurve> {
    if sweeps.is_empty() {
        return Err(Error::EmptyInput("sweeps"));
    }
    let n = sweeps.len() as f64;
    let points = (0..THRESHOLD_LEVELS)
        .map(|t| {
            let (mut fpr, mut tpr) = (0.0, 0.0);
            for s in sweeps {
                let (f, r) = s.rates(t);
                fpr += f;
                tpr += r;
            }
            RocPoint {
                threshold: t as f64,
                fpr: fpr / n,
                tpr: tpr / n,
            }
        })
        .collect();
    RocCurve::new(points)
}

pub fn roc(responses: &[GrayImage], gts: &[GrayImage], masks: &[FovMask]) -> Result<RocCurve> {
    if responses.is_empty() {
        return Err(Error::EmptyInput("responses"));
    }
    if gts.len() != responses.len() || masks.len() != responses.len() {
        return Err(Error::param("roc", "responses, ground truths and masks differ in count"));
    }
    let sweeps = responses
        .iter()
        .zip(gts)
        .zip(masks)
        .map(|((r, g), m)| ThresholdSweep::new(r, g, m))
        .collect::<Result<Vec<_>>>()?;
    roc_from_sweeps(&sweeps)
}

/// Trapezoidal area under the curve, closed at (0,0) and (1,1).
pub fn auc(curve: &RocCurve) -> Result<f64> {
    if curve.len() < 2 {
        return Err(Error::param("roc", "need at least two points for an area"));
    }
    let mut pts: Vec<(f64, f64)> = curve.points().iter().map(|p| (p.fpr, p.tpr)).collect();
    pts.push((0.0, 0.0));
    pts.push((1.0, 1.0));
    pts.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.total_cmp(&b.1)));
    Ok(pts
        .windows(2)
        .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pts(v: &[(f64, f64)]) -> RocCurve {
        RocCurve::new(
            v.iter()
                .enumerate()
                .map(|(i, &(fpr, tpr))| RocPoint { threshold: i as f64, fpr, tpr })
                .collect(),
        )
        .unwrap()
    }

    #[test]
    fn auc_examples() {
        assert_eq!(auc(&pts(&[(1.0, 1.0), (0.0, 0.0)])).unwrap(), 0.5);
        assert_eq!(auc(&pts(&[(1.0, 1.0), (0.0, 1.0), (0.0, 0.0)])).unwrap(), 1.0);
        assert!(auc(&pts(&[(0.5, 0.5)])).is_err());
    }

    #[test]
    fn curve_validation() {
        let p = |threshold, fpr, tpr| RocPoint { threshold, fpr, tpr };
        assert!(RocCurve::new(vec![p(0.0, 0.5, 0.5), p(0.0, 0.4, 0.4)]).is_err());
        assert!(RocCurve::new(vec![p(0.0, 0.5, 0.5), p(1.0, 0.6, 0.4)]).is_err());
        assert!(RocCurve::new(vec![p(0.0, 1.5, 0.5)]).is_err());
    }

    #[test]
    fn perfect_response() {
        let gt = GrayImage::from_fn(8, 8, |x, y| ((x + y) % 3 == 0) as u8 as f64);
        let response = gt.map(|v| 255.0 * v);
        let curve = roc(&[response], &[gt], &[FovMask::full(8, 8)]).unwrap();
        assert!(curve.points().iter().any(|p| p.tpr == 1.0 && p.fpr == 0.0));
        assert_eq!(auc(&curve).unwrap(), 1.0);
    }

    #[test]
    fn sweep_matches_direct_threshold() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let resp = GrayImage::from_fn(20, 20, |_, _| rng.gen_range(0.0..=255.0));
        let gt = GrayImage::from_fn(20, 20, |_, _| rng.gen_bool(0.3) as u8 as f64);
        let mask = FovMask::from_fn(20, 20, |x, _| x > 2);
        let sweep = ThresholdSweep::new(&resp, &gt, &mask).unwrap();
        for t in [0usize, 1, 35, 128, 254, 255] {
            let pred = resp.map(|v| (v > t as f64) as u8 as f64);
            let direct = super::super::confusion(&pred, &gt, &mask).unwrap();
            assert_eq!(sweep.confusion(t), direct);
        }
    }

    #[test]
    fn integral_values_sit_on_boundaries() {
        let resp = GrayImage::from_vec(3, 1, vec![0.0, 35.0, 255.0]).unwrap();
        let gt = GrayImage::from_vec(3, 1, vec![0.0, 1.0, 1.0]).unwrap();
        let s = ThresholdSweep::new(&resp, &gt, &FovMask::full(3, 1)).unwrap();
        assert_eq!(s.confusion(34).tp, 2);
        assert_eq!(s.confusion(35).tp, 1);
        assert_eq!(s.confusion(255).tp, 0);
        assert_eq!(s.confusion(0).fp, 0);
    }

    #[test]
    fn random_response_is_near_chance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let resp = GrayImage::from_fn(64, 64, |_, _| rng.gen_range(0.0..=255.0));
        let gt = GrayImage::from_fn(64, 64, |_, _| rng.gen_bool(0.5) as u8 as f64);
        let a = auc(&roc(&[resp], &[gt], &[FovMask::full(64, 64)]).unwrap()).unwrap();
        assert!((a - 0.5).abs() < 0.05, "auc = {a}");
    }

    #[test]
    fn from_scores_small_case() {
        let c = RocCurve::from_scores(&[0.1, 0.4, 0.35, 0.8], &[false, false, true, true]).unwrap();
        assert_eq!(c.len(), 5);
        assert_eq!(auc(&c).unwrap(), 0.75);
    }

    #[test]
    fn csv_layout() {
        let c = pts(&[(1.0, 1.0), (0.25, 0.5)]);
        assert_eq!(
            c.to_csv(),
            "threshold,fpr,tpr\n0.000000,1.000000,1.000000\n1.000000,0.250000,0.500000\n"
        );
    }
}
