//! Command-line front end.
//!
//! Each subcommand reads an optional TOML file holding the matching library
//! configuration (`StereoConfig`, `AlignConfig`, ...). Flags override file
//! entries, which override the defaults.

mod layer;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::align::{self, AlignConfig, Patch, PointSelection, WarpModel};
use crate::error::{Error, Result};
use crate::eval::{
    self, disparity_stats, run_perturbation_experiment, run_toy_edge_experiment, stats_csv,
    InvalidPolicy, ToyEdgeConfig,
};
use crate::image::{
    apply_perturbation, load_image_auto, save_image_auto, GradientOperator, PerturbationSpec,
};
use crate::metrics::{self, JacobianCheckConfig, MetricKind};
use crate::stereo::{self, read_disparity, StereoConfig};
use crate::synth;

pub use layer::layered;

/// Exit status of a run that completed without error but did not meet its
/// goal: `--strict` alignment without convergence.
pub const EXIT_NOT_CONVERGED: u8 = 4;
/// Jacobian check found a sample over the tolerance.
pub const EXIT_CHECK_FAILED: u8 = 1;

#[derive(Debug, Parser)]
#[command(
    name = "gradfield",
    version,
    about = "Gradient-field matching costs for stereo and alignment"
)]
pub struct Cli {
    /// Worker threads; defaults to the available parallelism.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Seed for every random draw of the run.
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// TOML file with the subcommand's settings.
    #[arg(long, global = true, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the resolved settings as TOML and exit.
    #[arg(long, global = true)]
    pub print_config: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Winner-takes-all disparity estimation on a rectified pair.
    Stereo(StereoArgs),
    /// Coarse-to-fine direct alignment of two images.
    Align(AlignArgs),
    /// Matching cost of one pixel against every candidate shift.
    Costcurve(CostCurveArgs),
    /// Photometric perturbation of an image, or the robustness experiment.
    Perturb(PerturbArgs),
    /// Error statistics of a disparity map against ground truth.
    Evaldisp(EvalArgs),
    /// Analytic against numeric Jacobians on seeded random images.
    Jaccheck(JacArgs),
}

#[derive(Debug, Args)]
pub struct MetricArgs {
    #[arg(long)]
    pub metric: Option<MetricKind>,
    /// Odd window side.
    #[arg(long)]
    pub window: Option<usize>,
    #[arg(long)]
    pub operator: Option<GradientOperator>,
}

#[derive(Debug, Args)]
pub struct StereoArgs {
    pub left: PathBuf,
    pub right: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub min_disp: Option<i32>,
    /// Largest candidate disparity, inclusive.
    #[arg(long)]
    pub max_disp: Option<i32>,
    /// Best cost times this must stay below the runner-up; 1 disables.
    #[arg(long)]
    pub uniqueness: Option<f64>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub lr_check: Option<bool>,
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub subpixel: Option<bool>,
    /// Disparity output, `.pfm` or KITTI-style `.png`.
    #[arg(short, long)]
    pub output: Option<PathBuf>,
    /// Ground truth; prints a statistics row.
    #[arg(long)]
    pub gt: Option<PathBuf>,
    #[arg(long, default_value = "excluded")]
    pub invalid: InvalidPolicy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Translation,
    Affine,
}

#[derive(Debug, Args)]
pub struct AlignArgs {
    pub reference: PathBuf,
    pub current: PathBuf,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, default_value = "translation")]
    pub model: ModelArg,
    #[arg(long)]
    pub levels: Option<usize>,
    #[arg(long)]
    pub max_iterations: Option<usize>,
    #[arg(long)]
    pub huber: Option<f64>,
    /// Update norm below which a level stops.
    #[arg(long)]
    pub epsilon: Option<f64>,
    /// Select pixels whose gradient norm exceeds this.
    #[arg(long, conflicts_with = "grid_stride")]
    pub min_gradient: Option<f64>,
    /// Select every n-th pixel instead.
    #[arg(long)]
    pub grid_stride: Option<usize>,
    #[arg(long)]
    pub patch: Option<Patch>,
    /// Write the per-iteration objective to this CSV file.
    #[arg(long, value_name = "FILE")]
    pub trace: Option<PathBuf>,
    /// Exit with status 4 unless the finest level converged.
    #[arg(long)]
    pub strict: bool,
}

#[derive(Debug, Args)]
pub struct CostCurveArgs {
    #[arg(required_unless_present = "toy")]
    pub left: Option<PathBuf>,
    #[arg(required_unless_present = "toy")]
    pub right: Option<PathBuf>,
    #[arg(long, required_unless_present = "toy")]
    pub x: Option<usize>,
    #[arg(long, required_unless_present = "toy")]
    pub y: Option<usize>,
    #[command(flatten)]
    pub metric: MetricArgs,
    #[arg(long, allow_hyphen_values = true)]
    pub min_disp: Option<i32>,
    #[arg(long)]
    pub max_disp: Option<i32>,
    /// Strong/weak edge scene instead of input images.
    #[arg(long, conflicts_with_all = ["left", "right", "x", "y"])]
    pub toy: bool,
    #[arg(long, requires = "toy")]
    pub strong: Option<f64>,
    #[arg(long, requires = "toy")]
    pub weak: Option<f64>,
    #[arg(long, requires = "toy")]
    pub noise: Option<f64>,
    #[arg(short, long)]
    pub output: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PerturbArgs {
    /// Image to perturb; the experiment falls back to a synthetic scene.
    #[arg(required_unless_present = "experiment")]
    pub input: Option<PathBuf>,
    #[arg(short, long, required_unless_present = "experiment")]
    pub output: Option<PathBuf>,
    #[arg(long)]
    pub gain: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    pub offset: Option<f64>,
    #[arg(long)]
    pub vignette: Option<f64>,
    #[arg(long)]
    pub radius: Option<f64>,
    #[arg(long)]
    pub noise: Option<f64>,
    /// Match the image against its perturbed copy with each metric and
    /// print the error table.
    #[arg(long)]
    pub experiment: bool,
    /// Size of the synthetic scene.
    #[arg(long, default_value_t = 160)]
    pub width: usize,
    #[arg(long, default_value_t = 120)]
    pub height: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    pub estimate: PathBuf,
    pub gt: PathBuf,
    #[arg(long, default_value = "excluded")]
    pub invalid: InvalidPolicy,
    /// First CSV column.
    #[arg(long, default_value = "estimate")]
    pub label: String,
}

#[derive(Debug, Args)]
pub struct JacArgs {
    /// Comma-separated kinds; defaults to photo, ugf, sgf, sgf2, sgf3.
    #[arg(long, value_delimiter = ',')]
    pub kinds: Vec<MetricKind>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub step: Option<f64>,
    #[arg(long)]
    pub tolerance: Option<f64>,
    #[arg(long)]
    pub sigma: Option<f64>,
}

/// Parses the process arguments, runs, and maps errors to exit codes.
pub fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(e.exit_code() as u8);
        }
    };
    match run(&cli, &mut std::io::stdout()) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}

/// 3 for unreadable or unwritable files, 2 for everything the user can fix
/// in the arguments.
pub fn exit_code(e: &Error) -> u8 {
    match e {
        Error::Io { .. } | Error::Format { .. } => 3,
        Error::EmptySelection { .. } | Error::SingularNormalEquations => EXIT_NOT_CONVERGED,
        _ => 2,
    }
}

/// Runs a parsed command line, writing reports to `out`.
pub fn run(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<u8> {
    let threads = match cli.threads {
        Some(0) => return Err(Error::Config("--threads must be at least 1".into())),
        Some(n) => n,
        None => std::thread::available_parallelism().map_or(1, |n| n.get()),
    };
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(e.to_string()))?;
    pool.install(|| dispatch(cli, out))
}

fn dispatch(cli: &Cli, out: &mut (dyn Write + Send)) -> Result<u8> {
    let file = cli.config.as_deref().map(read_table).transpose()?;
    match &cli.command {
        Command::Stereo(a) => cmd_stereo(cli, a, file, out),
        Command::Align(a) => cmd_align(cli, a, file, out),
        Command::Costcurve(a) => cmd_costcurve(cli, a, file, out),
        Command::Perturb(a) => cmd_perturb(cli, a, file, out),
        Command::Evaldisp(a) => cmd_evaldisp(a, out),
        Command::Jaccheck(a) => cmd_jaccheck(cli, a, file, out),
    }
}

fn read_table(path: &Path) -> Result<toml::Table> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
}

fn emit(out: &mut (dyn Write + Send), text: &str) -> Result<()> {
    out.write_all(text.as_bytes())
        .and_then(|_| out.flush())
        .map_err(|e| Error::io("<stdout>", e))
}

/// Writes `cfg` as TOML when `--print-config` is set; returns whether it did.
fn print_config<T: Serialize>(cli: &Cli, cfg: &T, out: &mut (dyn Write + Send)) -> Result<bool> {
    if !cli.print_config {
        return Ok(false);
    }
    let text = toml::to_string(cfg).map_err(|e| Error::Config(e.to_string()))?;
    emit(out, &text)?;
    Ok(true)
}

fn require_inputs(paths: &[&Path]) -> Result<()> {
    for p in paths {
        fs::metadata(p).map_err(|e| Error::io(*p, e))?;
    }
    Ok(())
}

fn require_output(path: &Path) -> Result<()> {
    let parent = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => return Ok(()),
    };
    match fs::metadata(parent) {
        Ok(m) if m.is_dir() => Ok(()),
        Ok(_) => Err(Error::io(parent, std::io::Error::other("not a directory"))),
        Err(e) => Err(Error::io(parent, e)),
    }
}

fn apply_metric_flags(
    m: &MetricArgs,
    kind: &mut MetricKind,
    window: &mut usize,
    op: &mut GradientOperator,
) {
    if let Some(k) = m.metric {
        *kind = k;
    }
    if let Some(w) = m.window {
        *window = w;
    }
    if let Some(o) = m.operator {
        *op = o;
    }
}

fn stereo_config(
    m: &MetricArgs,
    min: Option<i32>,
    max: Option<i32>,
    file: Option<toml::Table>,
) -> Result<StereoConfig> {
    let mut cfg: StereoConfig = layered(&StereoConfig::default(), file)?;
    apply_metric_flags(m, &mut cfg.kind, &mut cfg.params.window, &mut cfg.operator);
    if let Some(d) = min {
        cfg.min_disparity = d;
    }
    if let Some(d) = max {
        cfg.max_disparity = d;
    }
    Ok(cfg)
}

fn cmd_stereo(
    cli: &Cli,
    a: &StereoArgs,
    file: Option<toml::Table>,
    out: &mut (dyn Write + Send),
) -> Result<u8> {
    let mut cfg = stereo_config(&a.metric, a.min_disp, a.max_disp, file)?;
    if let Some(r) = a.uniqueness {
        cfg.uniqueness_ratio = r;
    }
    if let Some(b) = a.lr_check {
        cfg.lr_check = b;
    }
    if let Some(b) = a.subpixel {
        cfg.subpixel = b;
    }
    if print_config(cli, &cfg, out)? {
        return Ok(0);
    }
    cfg.validate()?;
    if a.output.is_none() && a.gt.is_none() {
        return Err(Error::Config("nothing to do: pass -o and/or --gt".into()));
    }
    let mut inputs = vec![a.left.as_path(), a.right.as_path()];
    inputs.extend(a.gt.as_deref());
    require_inputs(&inputs)?;
    if let Some(o) = &a.output {
        stereo::DisparityFormat::from_path(o)?;
        require_output(o)?;
    }

    let left = load_image_auto(&a.left)?;
    let right = load_image_auto(&a.right)?;
    let gt = a.gt.as_deref().map(read_disparity).transpose()?;
    let disp = stereo::match_pair(&left, &right, &cfg)?;
    if let Some(o) = &a.output {
        disp.save_auto(o)?;
    }
    if let Some(gt) = gt {
        let s = disparity_stats(&disp, &gt, a.invalid)?;
        emit(out, &stats_csv([(cfg.kind.name(), &s)]))?;
    }
    Ok(0)
}

fn cmd_align(
    cli: &Cli,
    a: &AlignArgs,
    file: Option<toml::Table>,
    out: &mut (dyn Write + Send),
) -> Result<u8> {
    // The kind picks the defaults the file and flags are layered on.
    let file_kind = match file.as_ref().and_then(|t| t.get("kind")) {
        Some(v) => Some(
            v.clone()
                .try_into::<MetricKind>()
                .map_err(|e| Error::Config(format!("kind: {e}")))?,
        ),
        None => None,
    };
    let kind = a.metric.metric.or(file_kind).unwrap_or(MetricKind::Sgf);
    let mut cfg: AlignConfig = layered(&AlignConfig::for_kind(kind), file)?;
    apply_metric_flags(
        &a.metric,
        &mut cfg.kind,
        &mut cfg.params.window,
        &mut cfg.operator,
    );
    if let Some(n) = a.levels {
        cfg.pyramid_levels = n;
    }
    if let Some(n) = a.max_iterations {
        cfg.max_iterations = n;
    }
    if let Some(d) = a.huber {
        cfg.huber_delta = d;
    }
    if let Some(e) = a.epsilon {
        cfg.convergence_epsilon = e;
    }
    if let Some(t) = a.min_gradient {
        cfg.point_selection = PointSelection::AllGradientAbove(t);
    }
    if let Some(s) = a.grid_stride {
        cfg.point_selection = PointSelection::GridStride(s);
    }
    if let Some(p) = a.patch {
        cfg.patch = p;
    }
    if print_config(cli, &cfg, out)? {
        return Ok(0);
    }
    cfg.validate()?;
    require_inputs(&[&a.reference, &a.current])?;
    if let Some(t) = &a.trace {
        require_output(t)?;
    }

    let reference = load_image_auto(&a.reference)?;
    let current = load_image_auto(&a.current)?;
    let init = match a.model {
        ModelArg::Translation => WarpModel::default(),
        ModelArg::Affine => WarpModel::affine_identity(),
    };
    let result = match align::align(&reference, &current, &cfg, init) {
        Ok(r) => r,
        Err(e @ (Error::EmptySelection { .. } | Error::SingularNormalEquations)) => {
            eprintln!("warning: {e}");
            let failed = align::AlignmentResult {
                warp: init,
                converged: false,
                iterations_per_level: Vec::new(),
                final_cost: f64::NAN,
                inlier_fraction: 0.0,
                trace: Vec::new(),
            };
            emit(out, &align::result_csv(&failed))?;
            return Ok(if a.strict { EXIT_NOT_CONVERGED } else { 0 });
        }
        Err(e) => return Err(e),
    };
    if let Some(t) = &a.trace {
        fs::write(t, align::trace_csv(&result.trace)).map_err(|e| Error::io(t, e))?;
    }
    emit(out, &align::result_csv(&result))?;
    Ok(if a.strict && !result.converged {
        EXIT_NOT_CONVERGED
    } else {
        0
    })
}

fn write_or_emit(path: Option<&Path>, text: &str, out: &mut (dyn Write + Send)) -> Result<()> {
    match path {
        Some(p) => fs::write(p, text).map_err(|e| Error::io(p, e)),
        None => emit(out, text),
    }
}

fn cmd_costcurve(
    cli: &Cli,
    a: &CostCurveArgs,
    file: Option<toml::Table>,
    out: &mut (dyn Write + Send),
) -> Result<u8> {
    if let Some(o) = &a.output {
        require_output(o)?;
    }
    if a.toy {
        let mut cfg: ToyEdgeConfig = layered(&ToyEdgeConfig::default(), file)?;
        if a.metric.metric.is_some() {
            return Err(Error::Config(
                "--toy always reports ugf, mag, sgf and photo".into(),
            ));
        }
        if let Some(w) = a.metric.window {
            cfg.window = w;
        }
        if let Some(o) = a.metric.operator {
            cfg.operator = o;
        }
        if let Some(v) = a.strong {
            cfg.strong_amplitude = v;
        }
        if let Some(v) = a.weak {
            cfg.weak_amplitude = v;
        }
        if let Some(v) = a.noise {
            cfg.noise_sigma = v;
        }
        if let Some(s) = cli.seed {
            cfg.seed = s;
        }
        if let Some(d) = a.min_disp {
            cfg.min_shift = d;
        }
        if let Some(d) = a.max_disp {
            cfg.max_shift = d;
        }
        if print_config(cli, &cfg, out)? {
            return Ok(0);
        }
        let result = run_toy_edge_experiment(&cfg)?;
        write_or_emit(a.output.as_deref(), &result.to_csv(), out)?;
        return Ok(0);
    }

    let cfg = stereo_config(&a.metric, a.min_disp, a.max_disp, file)?;
    if print_config(cli, &cfg, out)? {
        return Ok(0);
    }
    cfg.validate()?;
    let (left, right) = (a.left.as_deref().unwrap(), a.right.as_deref().unwrap());
    require_inputs(&[left, right])?;
    let curve = stereo::cost_curve(
        &load_image_auto(left)?,
        &load_image_auto(right)?,
        &cfg,
        (a.x.unwrap(), a.y.unwrap()),
    )?;
    write_or_emit(a.output.as_deref(), &stereo::curve_csv(&curve), out)?;
    Ok(0)
}

fn cmd_perturb(
    cli: &Cli,
    a: &PerturbArgs,
    file: Option<toml::Table>,
    out: &mut (dyn Write + Send),
) -> Result<u8> {
    let base = if a.experiment {
        eval::robustness_perturbation()
    } else {
        PerturbationSpec::identity()
    };
    let mut spec: PerturbationSpec = layered(&base, file)?;
    if let Some(v) = a.gain {
        spec.exposure_gain = v;
    }
    if let Some(v) = a.offset {
        spec.exposure_offset = v;
    }
    if let Some(v) = a.vignette {
        spec.vignette_strength = v;
    }
    if let Some(v) = a.radius {
        spec.vignette_radius = v;
    }
    if let Some(v) = a.noise {
        spec.noise_sigma = v;
    }
    if let Some(s) = cli.seed {
        spec.rng_seed = s;
    }
    if print_config(cli, &spec, out)? {
        return Ok(0);
    }
    spec.validate()?;
    if let Some(i) = &a.input {
        require_inputs(&[i])?;
    }
    if let Some(o) = &a.output {
        require_output(o)?;
    }

    if a.experiment {
        let img = match &a.input {
            Some(p) => load_image_auto(p)?,
            None => synth::textured_scene(a.width, a.height, spec.rng_seed),
        };
        let rows = run_perturbation_experiment(
            &img,
            &spec,
            &eval::PERTURBATION_KINDS,
            &eval::perturbation_stereo_config(),
        )?;
        let csv = stats_csv(rows.iter().map(|(k, s)| (k.name(), s)));
        write_or_emit(a.output.as_deref(), &csv, out)?;
        return Ok(0);
    }
    let (input, output) = (a.input.as_deref().unwrap(), a.output.as_deref().unwrap());
    crate::image::ImageFormat::from_path(output)?;
    let img = load_image_auto(input)?;
    save_image_auto(&apply_perturbation(&img, &spec)?, output)?;
    Ok(0)
}

fn cmd_evaldisp(a: &EvalArgs, out: &mut (dyn Write + Send)) -> Result<u8> {
    require_inputs(&[&a.estimate, &a.gt])?;
    let est = read_disparity(&a.estimate)?;
    let gt = read_disparity(&a.gt)?;
    let s = disparity_stats(&est, &gt, a.invalid)?;
    emit(out, &stats_csv([(a.label.as_str(), &s)]))?;
    Ok(0)
}

fn cmd_jaccheck(
    cli: &Cli,
    a: &JacArgs,
    file: Option<toml::Table>,
    out: &mut (dyn Write + Send),
) -> Result<u8> {
    let mut cfg: JacobianCheckConfig = layered(&JacobianCheckConfig::default(), file)?;
    if let Some(v) = a.samples {
        cfg.samples = v;
    }
    if let Some(v) = a.step {
        cfg.step = v;
    }
    if let Some(v) = a.tolerance {
        cfg.tolerance = v;
    }
    if let Some(v) = a.sigma {
        cfg.sigma = v;
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if print_config(cli, &cfg, out)? {
        return Ok(0);
    }
    let kinds = if a.kinds.is_empty() {
        metrics::CHECKED_KINDS.to_vec()
    } else {
        a.kinds.clone()
    };
    let checks = metrics::check_jacobians(&kinds, &cfg)?;
    let mut csv = String::from(
        "kind,samples,passed,pass_fraction,worst_rel_error,branch_straddles,smooth_failures\n",
    );
    for c in &checks {
        csv.push_str(&format!(
            "{},{},{},{:.4},{:.3e},{},{}\n",
            c.kind,
            c.samples.len(),
            c.passed(),
            c.pass_fraction(),
            c.worst().map_or(0.0, |s| s.rel_error),
            c.samples.iter().filter(|s| s.straddles_branch).count(),
            c.smooth_failures()
        ));
    }
    emit(out, &csv)?;
    let mut failed = false;
    for c in checks.iter().filter(|c| c.smooth_failures() > 0) {
        failed = true;
        if let Some(s) = c.worst_smooth() {
            eprintln!(
                "{}: worst at ({}, {}): analytic {:?} numeric {:?} relative error {:.3e}",
                c.kind, s.at.x, s.at.y, s.analytic, s.numeric, s.rel_error
            );
        }
    }
    Ok(if failed { EXIT_CHECK_FAILED } else { 0 })
}
