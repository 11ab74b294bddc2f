//! Command-line driver: dataset manifests, image IO and the `configure`,
//! `segment`, `evaluate`, `roc`, `tune` and `sensitivity` subcommands.

pub mod commands;
pub mod error;
pub mod io;
pub mod manifest;
pub mod plot;

use std::ffi::OsString;
use std::path::PathBuf;

use bcosfire::cosfire::{ConfigureOptions, FilterKind};
use bcosfire::preprocess::PreprocessOptions;
use bcosfire::synthetic::BarExtent;
use bcosfire::tune::{FilterParams, SensitivityParam, DEFAULT_RHO_STEP};
use clap::{Args, Parser, Subcommand, ValueEnum};

use commands::*;
pub use error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "bcosfire", version, about = "Bar-selective COSFIRE vessel segmentation")]
pub struct Cli {
    /// Worker threads (default: one per core).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Configure a filter from a prototype image or a synthetic bar.
    Configure(ConfigureArgs),
    /// Segment one image or every image of a manifest.
    Segment(SegmentArgs),
    /// Score stored segmentations and responses against ground truth.
    Evaluate(EvaluateArgs),
    /// ROC curve of stored responses.
    Roc(RocArgs),
    /// Grid search for the symmetric and then the asymmetric filter.
    Tune(TuneArgs),
    /// Paired t-tests of per-image MCC under single-parameter perturbations.
    Sensitivity(SensitivityArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OdModeArg {
    Exclude,
    ForceNonVessel,
}

impl From<OdModeArg> for OdMode {
    fn from(m: OdModeArg) -> Self {
        match m {
            OdModeArg::Exclude => OdMode::Exclude,
            OdModeArg::ForceNonVessel => OdMode::ForceNonVessel,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum KindArg {
    Symmetric,
    Asymmetric,
}

impl From<KindArg> for FilterKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Symmetric => FilterKind::Symmetric,
            KindArg::Asymmetric => FilterKind::Asymmetric,
        }
    }
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum BarArg {
    Full,
    Half,
}

#[derive(Debug, Args)]
pub struct PreprocessArgs {
    /// Dilation steps that extend the image past the FOV border.
    #[arg(long, default_value_t = 10)]
    pub smooth_iterations: usize,
    #[arg(long, default_value_t = 8)]
    pub clahe_tiles_x: usize,
    #[arg(long, default_value_t = 8)]
    pub clahe_tiles_y: usize,
    /// CLAHE clip limit in (0, 1].
    #[arg(long, default_value_t = 0.01)]
    pub clahe_clip: f64,
}

impl PreprocessArgs {
    fn options(&self) -> PreprocessOptions {
        PreprocessOptions {
            smooth_iterations: self.smooth_iterations,
            clahe_tiles_x: self.clahe_tiles_x,
            clahe_tiles_y: self.clahe_tiles_y,
            clahe_clip: self.clahe_clip,
        }
    }
}

#[derive(Debug, Args)]
pub struct SymmetricArgs {
    #[arg(long, default_value_t = 4.8)]
    pub sigma: f64,
    #[arg(long, default_value_t = 20.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Spacing of the concentric circles.
    #[arg(long, default_value_t = DEFAULT_RHO_STEP)]
    pub rho_step: f64,
}

impl SymmetricArgs {
    fn params(&self) -> FilterParams {
        FilterParams::new(self.sigma, self.rho_max, self.sigma0, self.alpha)
    }
}

#[derive(Debug, Args)]
pub struct AsymmetricArgs {
    #[arg(long, default_value_t = 4.4)]
    pub asym_sigma: f64,
    #[arg(long, default_value_t = 36.0)]
    pub asym_rho_max: f64,
    #[arg(long, default_value_t = 1.0)]
    pub asym_sigma0: f64,
    #[arg(long, default_value_t = 0.1)]
    pub asym_alpha: f64,
    /// Use the symmetric filter alone.
    #[arg(long)]
    pub no_asymmetric: bool,
}

impl AsymmetricArgs {
    fn params(&self) -> Option<FilterParams> {
        (!self.no_asymmetric)
            .then(|| FilterParams::new(self.asym_sigma, self.asym_rho_max, self.asym_sigma0, self.asym_alpha))
    }
}

fn parse_center(s: &str) -> Result<(usize, usize), String> {
    let (x, y) = s.split_once(',').ok_or_else(|| format!("expected `x,y`, got `{s}`"))?;
    let coord = |v: &str| v.trim().parse::<usize>().map_err(|e| format!("bad coordinate `{v}`: {e}"));
    Ok((coord(x)?, coord(y)?))
}

#[derive(Debug, Args)]
pub struct ConfigureArgs {
    /// Prototype image; its centre is used unless --center is given.
    #[arg(long, conflicts_with = "synthetic", required_unless_present = "synthetic")]
    pub prototype: Option<PathBuf>,
    /// Filter centre as `x,y` in the prototype.
    #[arg(long, value_parser = parse_center, requires = "prototype")]
    pub center: Option<(usize, usize)>,
    /// Use a synthetic vertical bar as the prototype.
    #[arg(long, value_enum)]
    pub synthetic: Option<BarArg>,
    /// Half thickness of the synthetic bar.
    #[arg(long, default_value_t = 1.0)]
    pub bar_half_width: f64,
    #[arg(long, default_value_t = 4.8)]
    pub sigma: f64,
    /// Explicit circle radii (must include 0); overrides --rho-max.
    #[arg(long, value_delimiter = ',')]
    pub radii: Option<Vec<f64>>,
    #[arg(long, default_value_t = 20.0)]
    pub rho_max: f64,
    #[arg(long, default_value_t = DEFAULT_RHO_STEP)]
    pub rho_step: f64,
    #[arg(long, default_value_t = 3.0)]
    pub sigma0: f64,
    #[arg(long, default_value_t = 0.3)]
    pub alpha: f64,
    /// Minimum peak height relative to the strongest response on its circle.
    #[arg(long, default_value_t = 0.2)]
    pub peak_fraction: f64,
    /// Force the filter kind instead of inferring it from the points.
    #[arg(long, value_enum)]
    pub kind: Option<KindArg>,
    #[arg(long, short)]
    pub output: PathBuf,
}

#[derive(Debug, Args)]
pub struct SegmentArgs {
    #[arg(long, conflicts_with = "image", required_unless_present = "image")]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub image: Option<PathBuf>,
    /// FOV mask for --image (default: the whole image).
    #[arg(long, requires = "image")]
    pub fov: Option<PathBuf>,
    /// Symmetric filter file; overrides the symmetric parameter flags.
    #[arg(long)]
    pub symmetric_filter: Option<PathBuf>,
    /// Asymmetric filter file; overrides the asymmetric parameter flags.
    #[arg(long, conflicts_with = "no_asymmetric")]
    pub asymmetric_filter: Option<PathBuf>,
    #[command(flatten)]
    pub symmetric: SymmetricArgs,
    #[command(flatten)]
    pub asymmetric: AsymmetricArgs,
    /// Threshold on the 0-255 normalised response.
    #[arg(long, short, default_value_t = 35.0)]
    pub threshold: f64,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, short)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<stem>_seg.png` and `<stem>_response.png`.
    #[arg(long)]
    pub segmentations: PathBuf,
    #[arg(long, value_enum, default_value = "exclude")]
    pub od_mode: OdModeArg,
    /// Write the CSV report here as well as printing the mean row.
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct RocArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Directory holding `<stem>_response.png`.
    #[arg(long)]
    pub responses: PathBuf,
    #[arg(long, value_enum, default_value = "exclude")]
    pub od_mode: OdModeArg,
    /// Threshold to mark on the plot.
    #[arg(long)]
    pub mark: Option<f64>,
    #[arg(long, short)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Search-space TOML with [symmetric] and [asymmetric] tables.
    #[arg(long)]
    pub space: PathBuf,
    /// Seed of the train/validation split.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, short)]
    pub output_dir: PathBuf,
}

#[derive(Debug, Args)]
pub struct SensitivityArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// `tuning.toml` from `tune`; overrides the parameter flags.
    #[arg(long)]
    pub tuning: Option<PathBuf>,
    #[command(flatten)]
    pub symmetric: SymmetricArgs,
    #[command(flatten)]
    pub asymmetric: AsymmetricArgs,
    #[arg(long, short, default_value_t = 35.0)]
    pub threshold: f64,
    /// Parameter to perturb: sigma, sigma0 or alpha.
    #[arg(long)]
    pub param: SensitivityParam,
    #[arg(
        long,
        value_delimiter = ',',
        allow_hyphen_values = true,
        default_value = "-0.5,-0.4,-0.3,-0.2,-0.1,0,0.1,0.2,0.3,0.4,0.5"
    )]
    pub offsets: Vec<f64>,
    #[command(flatten)]
    pub preprocess: PreprocessArgs,
    #[arg(long, short)]
    pub output: Option<PathBuf>,
}

fn radii_up_to(rho_max: f64, step: f64) -> CliResult<Vec<f64>> {
    if !(step > 0.0 && rho_max >= 0.0) {
        return Err(CliError::Usage("--rho-step must be positive and --rho-max non-negative".into()));
    }
    let n = (rho_max / step + 1e-9).floor() as usize;
    Ok((0..=n).map(|k| k as f64 * step).collect())
}

fn execute(cmd: Command) -> CliResult<()> {
    match cmd {
        Command::Configure(a) => {
            let radii = match a.radii {
                Some(r) => r,
                None => radii_up_to(a.rho_max, a.rho_step)?,
            };
            let mut options = ConfigureOptions::new(a.sigma, radii, a.sigma0, a.alpha).with_peak_fraction(a.peak_fraction);
            if let Some(k) = a.kind {
                options = options.with_kind(k.into());
            }
            let prototype = match (a.prototype, a.synthetic) {
                (Some(path), _) => PrototypeSource::File {
                    path,
                    center: a.center,
                },
                (None, Some(bar)) => PrototypeSource::Synthetic {
                    extent: match bar {
                        BarArg::Full => BarExtent::Full,
                        BarArg::Half => BarExtent::Half,
                    },
                    half_width: a.bar_half_width,
                },
                (None, None) => unreachable!("clap requires one prototype source"),
            };
            let cfg = cmd_configure(&ConfigureRequest { prototype, options, output: a.output.clone() })?;
            println!("{} filter with {} points written to {}", cfg.kind(), cfg.len(), a.output.display());
        }
        Command::Segment(a) => {
            let input = match (a.manifest, a.image) {
                (Some(m), _) => SegmentInput::Manifest(m),
                (None, Some(image)) => SegmentInput::Image { image, fov: a.fov },
                (None, None) => unreachable!("clap requires one input"),
            };
            let symmetric = match a.symmetric_filter {
                Some(p) => FilterSource::File(p),
                None => FilterSource::Params(a.symmetric.params()),
            };
            let asymmetric = match (a.asymmetric_filter, a.asymmetric.params()) {
                (Some(p), _) => Some(FilterSource::File(p)),
                (None, p) => p.map(FilterSource::Params),
            };
            let written = cmd_segment(&SegmentRequest {
                input,
                filters: FilterSetup { symmetric, asymmetric, rho_step: a.symmetric.rho_step },
                threshold: a.threshold,
                preprocess: a.preprocess.options(),
                output_dir: a.output_dir,
            })?;
            println!("wrote {} files", written.len());
        }
        Command::Evaluate(a) => {
            let report = cmd_evaluate(&a.manifest, &a.segmentations, a.od_mode.into())?;
            let csv = report.to_csv();
            if let Some(out) = &a.output {
                io::write_text(out, &csv)?;
            }
            print!("image,auc,mcc,accuracy,sensitivity,specificity\n{}", csv.lines().last().unwrap_or(""));
            println!();
        }
        Command::Roc(a) => {
            let report = cmd_roc(&a.manifest, &a.responses, a.od_mode.into(), a.mark)?;
            io::write_text(&a.output_dir.join(ROC_CSV), &report.csv)?;
            io::write_text(&a.output_dir.join(ROC_SVG), &report.svg)?;
            println!("auc {:.6}", report.auc);
        }
        Command::Tune(a) => {
            let file = cmd_tune(&TuneRequest {
                manifest: a.manifest,
                space: a.space,
                seed: a.seed,
                preprocess: a.preprocess.options(),
                output_dir: a.output_dir.clone(),
            })?;
            let (s, q) = (&file.symmetric.params, &file.asymmetric.params);
            println!(
                "symmetric sigma={} rho_max={} sigma0={} alpha={}",
                s.sigma, s.rho_max, s.sigma0, s.alpha
            );
            println!(
                "asymmetric sigma={} rho_max={} sigma0={} alpha={}",
                q.sigma, q.rho_max, q.sigma0, q.alpha
            );
            println!("threshold {} mean mcc {:.4}", file.threshold, file.asymmetric.mean_mcc);
            println!("results in {}", a.output_dir.display());
        }
        Command::Sensitivity(a) => {
            let (optimal, rho_step, asymmetric, threshold) = match &a.tuning {
                Some(p) => {
                    let t = TuningFile::load(p)?;
                    let asym = (!a.asymmetric.no_asymmetric).then_some(t.asymmetric.params);
                    (t.symmetric.params, t.symmetric.rho_step, asym, t.threshold as f64)
                }
                None => (a.symmetric.params(), a.symmetric.rho_step, a.asymmetric.params(), a.threshold),
            };
            let table = cmd_sensitivity(&SensitivityRequest {
                manifest: a.manifest,
                optimal,
                rho_step,
                asymmetric,
                threshold,
                param: a.param,
                offsets: a.offsets,
                preprocess: a.preprocess.options(),
            })?;
            if let Some(out) = &a.output {
                io::write_text(out, &table)?;
            }
            print!("{table}");
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command. Returns
/// the process exit code: 0 on success, 1 for usage errors, 2 for data errors.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 1 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: cannot start worker threads: {e}");
            return 1;
        }
    };
    match pool.install(|| execute(cli.command)) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
