use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use bcosfire::cosfire::{
    combined_response, configure_from_prototype, make_bank, normalize_response, threshold_response,
    ConfigureOptions, FilterConfig, FilterKind, OrientationBank, ResponseCache, SegmentationParams,
};
use bcosfire::eval::{
    auc, basic_metrics, confusion, mcc, roc_from_sweeps, BasicMetrics, ThresholdSweep,
};
use bcosfire::preprocess::{preprocess, FovMask, PreprocessOptions};
use bcosfire::synthetic::{bar_image, BarExtent};
use bcosfire::tune::{
    sensitivity_experiment, split_dataset, tune_sequential, FilterParams, Sample, SearchSpace,
    SensitivityParam, SensitivityStatus, TuningSummary,
};
use bcosfire::GrayImage;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{CliError, CliResult};
use crate::io;
use crate::manifest::{DatasetManifest, Entry};
use crate::plot::roc_svg;

pub const TUNING_FILE: &str = "tuning.toml";
pub const ROC_CSV: &str = "roc.csv";
pub const ROC_SVG: &str = "roc.svg";
pub const SYMMETRIC_FILTER: &str = "symmetric.filter";
pub const ASYMMETRIC_FILTER: &str = "asymmetric.filter";

/// How optic-disc masks enter evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum OdMode {
    /// Disc pixels are left out of every count.
    #[default]
    Exclude,
    /// Disc pixels are counted, with prediction and truth both set to background.
    ForceNonVessel,
}

fn usage(e: bcosfire::Error) -> CliError {
    CliError::Usage(e.to_string())
}

/// Where each filter comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum FilterSource {
    File(PathBuf),
    Params(FilterParams),
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterSetup {
    pub symmetric: FilterSource,
    pub asymmetric: Option<FilterSource>,
    pub rho_step: f64,
}

impl FilterSetup {
    fn load(&self) -> CliResult<(FilterConfig, Option<FilterConfig>)> {
        let build = |src: &FilterSource, kind: FilterKind| -> CliResult<FilterConfig> {
            match src {
                FilterSource::File(p) => Ok(FilterConfig::from_text(&io::read_text(p)?)
                    .map_err(|e| CliError::io(p, e))?),
                FilterSource::Params(fp) => fp.build(kind, self.rho_step).map_err(usage),
            }
        };
        let sym = build(&self.symmetric, FilterKind::Symmetric)?;
        let asym = self
            .asymmetric
            .as_ref()
            .map(|s| build(s, FilterKind::Asymmetric))
            .transpose()?;
        Ok((sym, asym))
    }
}

fn check_threshold(t: f64) -> CliResult<SegmentationParams> {
    SegmentationParams::new(t).map_err(usage)
}

/// Normalised response and binary segmentation of one preprocessed image.
pub fn segment_image(
    image: &GrayImage,
    fov: &FovMask,
    symmetric: &OrientationBank,
    asymmetric: Option<&OrientationBank>,
    params: SegmentationParams,
) -> CliResult<(GrayImage, GrayImage)> {
    let r = combined_response(&mut ResponseCache::new(image), symmetric, asymmetric)?;
    let normalized = normalize_response(&r, fov)?;
    let seg = threshold_response(&normalized, fov, params)?;
    Ok((normalized, seg))
}

fn check_dims(what: &str, path: &Path, found: (usize, usize), expected: (usize, usize)) -> CliResult<()> {
    if found != expected {
        return Err(CliError::Data(format!(
            "{}: {what} is {}x{}, expected {}x{}",
            path.display(),
            found.0,
            found.1,
            expected.0,
            expected.1
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------- configure

#[derive(Debug, Clone, PartialEq)]
pub enum PrototypeSource {
    File { path: PathBuf, center: Option<(usize, usize)> },
    Synthetic { extent: BarExtent, half_width: f64 },
}

#[derive(Debug, Clone)]
pub struct ConfigureRequest {
    pub prototype: PrototypeSource,
    pub options: ConfigureOptions,
    pub output: PathBuf,
}

pub fn cmd_configure(req: &ConfigureRequest) -> CliResult<FilterConfig> {
    let (image, center) = match &req.prototype {
        PrototypeSource::File { path, center } => {
            let img = io::load_gray(path)?;
            let c = center.unwrap_or((img.width() / 2, img.height() / 2));
            (img, c)
        }
        PrototypeSource::Synthetic { extent, half_width } => {
            let reach = req.options.radii.iter().copied().fold(0.0, f64::max) + 4.0 * req.options.sigma;
            let side = 2 * reach.ceil() as usize + 11;
            let c = side / 2;
            let img = bar_image(
                side,
                side,
                (c as f64, c as f64),
                std::f64::consts::FRAC_PI_2,
                *half_width,
                *extent,
            );
            (img, (c, c))
        }
    };
    let cfg = configure_from_prototype(&image, center, &req.options).map_err(|e| match e {
        bcosfire::Error::InvalidParameter { .. } => usage(e),
        other => other.into(),
    })?;
    io::write_text(&req.output, &cfg.to_text())?;
    Ok(cfg)
}

// ------------------------------------------------------------------ segment

#[derive(Debug, Clone, PartialEq)]
pub enum SegmentInput {
    Manifest(PathBuf),
    Image { image: PathBuf, fov: Option<PathBuf> },
}

#[derive(Debug, Clone)]
pub struct SegmentRequest {
    pub input: SegmentInput,
    pub filters: FilterSetup,
    pub threshold: f64,
    pub preprocess: PreprocessOptions,
    pub output_dir: PathBuf,
}

struct SegmentJob {
    stem: String,
    image: PathBuf,
    fov: Option<PathBuf>,
    od: Option<PathBuf>,
}

pub fn cmd_segment(req: &SegmentRequest) -> CliResult<Vec<PathBuf>> {
    let params = check_threshold(req.threshold)?;
    let (sym, asym) = req.filters.load()?;
    let jobs: Vec<SegmentJob> = match &req.input {
        SegmentInput::Manifest(p) => DatasetManifest::load(p)?
            .entries
            .into_iter()
            .map(|e| SegmentJob { stem: e.stem, image: e.image, fov: Some(e.fov_mask), od: e.od_mask })
            .collect(),
        SegmentInput::Image { image, fov } => {
            let stem = image
                .file_stem()
                .and_then(|s| s.to_str())
                .ok_or_else(|| CliError::Usage(format!("bad image path {}", image.display())))?;
            vec![SegmentJob { stem: stem.to_string(), image: image.clone(), fov: fov.clone(), od: None }]
        }
    };

    // Load and check everything before the first write.
    let inputs = jobs
        .par_iter()
        .map(|j| {
            let rgb = io::load_rgb(&j.image)?;
            let fov = match &j.fov {
                Some(p) => {
                    let m = io::load_mask(p)?;
                    check_dims("FOV mask", p, m.dims(), rgb.dims())?;
                    m
                }
                None => FovMask::full(rgb.width(), rgb.height()),
            };
            // Border smoothing uses the FOV; the response is normalised and
            // thresholded only where the optic-disc mask allows.
            let region = match &j.od {
                Some(p) => {
                    let od = io::load_mask(p)?;
                    check_dims("optic-disc mask", p, od.dims(), rgb.dims())?;
                    fov.intersect(&od)?
                }
                None => fov.clone(),
            };
            Ok((rgb, fov, region))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let sym_bank = make_bank(&sym);
    let asym_bank = asym.as_ref().map(make_bank);
    let outputs = jobs
        .par_iter()
        .zip(&inputs)
        .map(|(j, (rgb, fov, region))| {
            let pre = preprocess(rgb, fov, &req.preprocess)?;
            let (normalized, seg) = segment_image(&pre, region, &sym_bank, asym_bank.as_ref(), params)?;
            Ok((j.stem.clone(), normalized, seg))
        })
        .collect::<CliResult<Vec<_>>>()?;

    let mut written = Vec::new();
    for (stem, normalized, seg) in outputs {
        let rp = req.output_dir.join(format!("{stem}_response.png"));
        let sp = req.output_dir.join(format!("{stem}_seg.png"));
        io::save_levels(&rp, &normalized)?;
        io::save_binary(&sp, &seg)?;
        written.push(rp);
        written.push(sp);
    }
    Ok(written)
}

// ----------------------------------------------------------------- evaluate

/// Ground truth and the mask that evaluation counts over.
struct Truth {
    gt: GrayImage,
    mask: FovMask,
    /// Pixels forced to background in both prediction and truth.
    forced: Option<FovMask>,
}

fn load_truth(e: &Entry, od_mode: OdMode) -> CliResult<Truth> {
    let mut gt = io::load_binary(&e.ground_truth)?;
    let fov = io::load_mask(&e.fov_mask)?;
    check_dims("FOV mask", &e.fov_mask, fov.dims(), gt.dims())?;
    let od = match &e.od_mask {
        Some(p) => {
            let m = io::load_mask(p)?;
            check_dims("optic-disc mask", p, m.dims(), gt.dims())?;
            Some(m)
        }
        None => None,
    };
    Ok(match (od, od_mode) {
        (None, _) => Truth { gt, mask: fov, forced: None },
        (Some(od), OdMode::Exclude) => Truth { gt, mask: fov.intersect(&od)?, forced: None },
        (Some(od), OdMode::ForceNonVessel) => {
            for (v, &keep) in gt.data_mut().iter_mut().zip(od.data()) {
                if !keep {
                    *v = 0.0;
                }
            }
            Truth { gt, mask: fov, forced: Some(od) }
        }
    })
}

fn apply_forced(img: &mut GrayImage, forced: &Option<FovMask>) {
    if let Some(keep) = forced {
        for (v, &k) in img.data_mut().iter_mut().zip(keep.data()) {
            if !k {
                *v = 0.0;
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ImageMetrics {
    pub auc: f64,
    pub mcc: f64,
    pub accuracy: f64,
    pub sensitivity: f64,
    pub specificity: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvaluationReport {
    pub rows: Vec<(String, ImageMetrics)>,
    pub mean: ImageMetrics,
}

fn fmt_metric(v: f64) -> String {
    if v.is_finite() {
        format!("{v:.6}")
    } else {
        "nan".into()
    }
}

impl EvaluationReport {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("image,auc,mcc,accuracy,sensitivity,specificity\n");
        let row = |out: &mut String, name: &str, m: &ImageMetrics| {
            let _ = writeln!(
                out,
                "{name},{},{},{},{},{}",
                fmt_metric(m.auc),
                fmt_metric(m.mcc),
                fmt_metric(m.accuracy),
                fmt_metric(m.sensitivity),
                fmt_metric(m.specificity)
            );
        };
        for (name, m) in &self.rows {
            row(&mut out, name, m);
        }
        row(&mut out, "mean", &self.mean);
        out
    }
}

fn response_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}_response.png"))
}

fn seg_path(dir: &Path, stem: &str) -> PathBuf {
    dir.join(format!("{stem}_seg.png"))
}

fn check_outputs_present(m: &DatasetManifest, dir: &Path, need_seg: bool) -> CliResult<()> {
    let mut gaps = Vec::new();
    for e in &m.entries {
        let mut wanted = vec![response_path(dir, &e.stem)];
        if need_seg {
            wanted.push(seg_path(dir, &e.stem));
        }
        gaps.extend(wanted.into_iter().filter(|p| !p.is_file()).map(|p| p.display().to_string()));
    }
    if gaps.is_empty() {
        Ok(())
    } else {
        Err(CliError::Data(format!("missing outputs: {}", gaps.join(", "))))
    }
}

fn mean_finite(values: impl Iterator<Item = f64>) -> f64 {
    let (mut sum, mut n) = (0.0, 0usize);
    for v in values.filter(|v| v.is_finite()) {
        sum += v;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        sum / n as f64
    }
}

pub fn cmd_evaluate(manifest: &Path, segmentations: &Path, od_mode: OdMode) -> CliResult<EvaluationReport> {
    let m = DatasetManifest::load(manifest)?;
    check_outputs_present(&m, segmentations, true)?;
    let rows = m
        .entries
        .par_iter()
        .map(|e| {
            let truth = load_truth(e, od_mode)?;
            let sp = seg_path(segmentations, &e.stem);
            let rp = response_path(segmentations, &e.stem);
            let mut seg = io::load_binary(&sp)?;
            let mut response = io::load_levels(&rp)?;
            check_dims("segmentation", &sp, seg.dims(), truth.gt.dims())?;
            check_dims("response", &rp, response.dims(), truth.gt.dims())?;
            apply_forced(&mut seg, &truth.forced);
            apply_forced(&mut response, &truth.forced);

            let cm = confusion(&seg, &truth.gt, &truth.mask)?;
            let basic = basic_metrics(&cm).unwrap_or(BasicMetrics {
                accuracy: bcosfire::eval::accuracy(&cm).unwrap_or(f64::NAN),
                sensitivity: bcosfire::eval::sensitivity(&cm).unwrap_or(f64::NAN),
                specificity: bcosfire::eval::specificity(&cm).unwrap_or(f64::NAN),
            });
            let sweep = ThresholdSweep::new(&response, &truth.gt, &truth.mask)?;
            let area = auc(&roc_from_sweeps(&[sweep])?)?;
            Ok((
                e.stem.clone(),
                ImageMetrics {
                    auc: area,
                    mcc: mcc(&cm),
                    accuracy: basic.accuracy,
                    sensitivity: basic.sensitivity,
                    specificity: basic.specificity,
                },
            ))
        })
        .collect::<CliResult<Vec<_>>>()?;
    let col = |f: fn(&ImageMetrics) -> f64| mean_finite(rows.iter().map(|(_, m)| f(m)));
    let mean = ImageMetrics {
        auc: col(|m| m.auc),
        mcc: col(|m| m.mcc),
        accuracy: col(|m| m.accuracy),
        sensitivity: col(|m| m.sensitivity),
        specificity: col(|m| m.specificity),
    };
    Ok(EvaluationReport { rows, mean })
}

// ---------------------------------------------------------------------- roc

pub struct RocReport {
    pub csv: String,
    pub svg: String,
    pub auc: f64,
}

/// Macro-averaged ROC of stored `<stem>_response.png` images.
pub fn cmd_roc(manifest: &Path, responses: &Path, od_mode: OdMode, marked: Option<f64>) -> CliResult<RocReport> {
    let m = DatasetManifest::load(manifest)?;
    check_outputs_present(&m, responses, false)?;
    let sweeps = m
        .entries
        .par_iter()
        .map(|e| {
            let truth = load_truth(e, od_mode)?;
            let rp = response_path(responses, &e.stem);
            let mut r = io::load_levels(&rp)?;
            check_dims("response", &rp, r.dims(), truth.gt.dims())?;
            apply_forced(&mut r, &truth.forced);
            Ok(ThresholdSweep::new(&r, &truth.gt, &truth.mask)?)
        })
        .collect::<CliResult<Vec<_>>>()?;
    let curve = roc_from_sweeps(&sweeps)?;
    let area = auc(&curve)?;
    let title = format!("{} ROC (AUC {area:.4})", m.name).trim().to_string();
    Ok(RocReport { csv: curve.to_csv(), svg: roc_svg(&curve, marked, &title), auc: area })
}

// --------------------------------------------------------------------- tune

/// Search-space file: `[symmetric]` and `[asymmetric]` tables; the
/// asymmetric `sigma` list may be omitted.
#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpaceFile {
    pub symmetric: SearchSpace,
    pub asymmetric: SearchSpace,
}

impl SpaceFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        toml::from_str(&io::read_text(path)?).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
    }
}

/// Contents of `tuning.toml`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningFile {
    pub seed: u64,
    /// Threshold for the summed response.
    pub threshold: u8,
    pub train: Vec<String>,
    pub validation: Vec<String>,
    pub symmetric: TuningSummary,
    pub asymmetric: TuningSummary,
}

impl TuningFile {
    pub fn load(path: &Path) -> CliResult<Self> {
        toml::from_str(&io::read_text(path)?).map_err(|e| CliError::Data(format!("{}: {e}", path.display())))
    }
}

/// Preprocessed samples with evaluation masks (optic disc excluded).
pub fn load_samples(entries: &[Entry], opts: &PreprocessOptions) -> CliResult<Vec<Sample>> {
    entries
        .par_iter()
        .map(|e| {
            let rgb = io::load_rgb(&e.image)?;
            let fov = io::load_mask(&e.fov_mask)?;
            check_dims("FOV mask", &e.fov_mask, fov.dims(), rgb.dims())?;
            let truth = load_truth(e, OdMode::Exclude)?;
            check_dims("ground truth", &e.ground_truth, truth.gt.dims(), rgb.dims())?;
            let image = preprocess(&rgb, &fov, opts)?;
            Ok(Sample::new(image, truth.gt, truth.mask)?)
        })
        .collect()
}

pub struct TuneRequest {
    pub manifest: PathBuf,
    pub space: PathBuf,
    pub seed: u64,
    pub preprocess: PreprocessOptions,
    pub output_dir: PathBuf,
}

pub fn cmd_tune(req: &TuneRequest) -> CliResult<TuningFile> {
    let space = SpaceFile::load(&req.space)?;
    space.symmetric.validate().map_err(usage)?;
    let m = DatasetManifest::load(&req.manifest)?;
    let (train, validation) = split_dataset(&m.entries, req.seed).map_err(usage)?;
    let samples = load_samples(&train, &req.preprocess)?;
    let result = tune_sequential(&samples, &space.symmetric, &space.asymmetric)?;

    let threshold = result.asymmetric.threshold;
    let file = TuningFile {
        seed: req.seed,
        threshold,
        train: train.iter().map(|e| e.stem.clone()).collect(),
        validation: validation.iter().map(|e| e.stem.clone()).collect(),
        symmetric: result.symmetric.summary(),
        asymmetric: result.asymmetric.summary(),
    };
    let roc = &result.asymmetric.roc;
    let title = format!("{} training ROC (AUC {:.4})", m.name, auc(roc)?).trim().to_string();
    let text = toml::to_string(&file).map_err(|e| CliError::Data(e.to_string()))?;
    let out = &req.output_dir;
    io::write_text(&out.join(TUNING_FILE), &text)?;
    io::write_text(&out.join(ROC_CSV), &roc.to_csv())?;
    io::write_text(&out.join(ROC_SVG), &roc_svg(roc, Some(threshold as f64), &title))?;
    io::write_text(&out.join(SYMMETRIC_FILTER), &result.symmetric.config.to_text())?;
    io::write_text(&out.join(ASYMMETRIC_FILTER), &result.asymmetric.config.to_text())?;
    Ok(file)
}

// -------------------------------------------------------------- sensitivity

pub struct SensitivityRequest {
    pub manifest: PathBuf,
    pub optimal: FilterParams,
    pub rho_step: f64,
    pub asymmetric: Option<FilterParams>,
    pub threshold: f64,
    pub param: SensitivityParam,
    pub offsets: Vec<f64>,
    pub preprocess: PreprocessOptions,
}

pub fn cmd_sensitivity(req: &SensitivityRequest) -> CliResult<String> {
    check_threshold(req.threshold)?;
    let asym = req
        .asymmetric
        .map(|p| p.build(FilterKind::Asymmetric, req.rho_step).map_err(usage))
        .transpose()?;
    req.optimal.build(FilterKind::Symmetric, req.rho_step).map_err(usage)?;
    let m = DatasetManifest::load(&req.manifest)?;
    let samples = load_samples(&m.entries, &req.preprocess)?;
    let rows = sensitivity_experiment(
        &samples,
        &req.optimal,
        req.rho_step,
        asym.as_ref(),
        req.threshold,
        req.param,
        &req.offsets,
    )?;
    let mut out = String::from("param,offset,value,t,df,p_value,significant,status\n");
    for r in rows {
        let name = req.param.as_str();
        let _ = match r.status {
            SensitivityStatus::Evaluated(t) => writeln!(
                out,
                "{name},{:.6},{:.6},{:.6},{},{:.6},{},evaluated",
                r.offset, r.value, t.t, t.df, t.p_value, t.significant
            ),
            SensitivityStatus::Skipped => writeln!(out, "{name},{:.6},{:.6},,,,,skipped", r.offset, r.value),
            SensitivityStatus::Invalid => writeln!(out, "{name},{:.6},{:.6},,,,,invalid", r.offset, r.value),
        };
    }
    Ok(out)
}
