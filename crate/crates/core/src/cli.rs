//! The `bokeh` command line.
//!
//! Every run ends with one summary line on stdout:
//! `status=<ok|fail> cmd=<name> wall_ms=<int> key=value...`.
//! Exit codes: 0 success, 1 usage, 2 invalid input, 3 numerical failure.

use std::ffi::OsString;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::buffer::ImageBuffer;
use crate::dfd::{optimize, DfdError, DfdProblem};
use crate::io::{
    load_color_png, load_gray_png, load_scene, read_pfm, save_color_png, write_pfm, write_text,
    IoError,
};
use crate::metrics::{psnr, MetricError};
use crate::oracle::{evaluate_dataset, generate_benchmark, OracleError, Recipe};
use crate::render::{gradcheck, render, GradcheckConfig, RenderError};
use crate::scene::{
    validate_scene, ApertureKernel, KernelMask, LensConfig, RadiusPolicy, RenderMode, SceneError,
};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(
    name = "bokeh",
    version,
    about = "Layered bokeh rendering, gradient checks, ray-traced benchmarks and depth from defocus"
)]
pub struct Cli {
    /// Worker threads (default: all logical cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Render a layered scene manifest to a PNG.
    Render(RenderArgs),
    /// Compare the analytic gradient with finite differences.
    Gradcheck(GradcheckArgs),
    /// Generate a ray-traced benchmark dataset from a recipe.
    Oracle(OracleArgs),
    /// Score the renderer against a generated dataset.
    Benchmark(BenchmarkArgs),
    /// Recover disparity from an all-in-focus image and a defocused target.
    Dfd(DfdArgs),
    /// Load and validate a scene manifest.
    Validate(ValidateArgs),
}

impl Command {
    fn name(&self) -> &'static str {
        match self {
            Command::Render(_) => "render",
            Command::Gradcheck(_) => "gradcheck",
            Command::Oracle(_) => "oracle",
            Command::Benchmark(_) => "benchmark",
            Command::Dfd(_) => "dfd",
            Command::Validate(_) => "validate",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Hard,
    Soft,
}

impl From<ModeArg> for RenderMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Hard => RenderMode::Hard,
            ModeArg::Soft => RenderMode::Soft,
        }
    }
}

/// Lens settings that override the manifest.
#[derive(Debug, Args)]
pub struct LensOverrides {
    #[arg(long, value_enum)]
    pub mode: Option<ModeArg>,
    /// Focal-plane disparity.
    #[arg(long)]
    pub focus: Option<f64>,
    /// Blur scale: pixels of CoC radius per unit disparity.
    #[arg(long = "radius", value_name = "G")]
    pub blur_scale: Option<f64>,
    /// `circle` or a grayscale PNG aperture mask.
    #[arg(long)]
    pub kernel: Option<String>,
    /// Fixed window half-width instead of the automatic one.
    #[arg(long)]
    pub max_radius: Option<usize>,
}

impl LensOverrides {
    fn apply(&self, mut lens: LensConfig) -> Result<LensConfig, CliError> {
        if let Some(m) = self.mode {
            lens.mode = m.into();
        }
        if let Some(f) = self.focus {
            lens.focus_disparity = f;
        }
        if let Some(g) = self.blur_scale {
            lens.blur_scale = g;
        }
        if let Some(r) = self.max_radius {
            lens.max_radius = RadiusPolicy::Fixed(r);
        }
        if let Some(k) = &self.kernel {
            lens.kernel = if k == "circle" {
                ApertureKernel::Circle
            } else {
                let mask = load_gray_png(Path::new(k))?;
                ApertureKernel::Mask(KernelMask::from_buffer(&mask)?)
            };
        }
        lens.validate()?;
        Ok(lens)
    }
}

#[derive(Debug, Args)]
pub struct RenderArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub lens: LensOverrides,
    /// Also write per-layer composite weights and visibility as PFM here.
    #[arg(long)]
    pub debug: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct GradcheckArgs {
    #[arg(long)]
    pub scene: PathBuf,
    #[arg(long, default_value_t = 1e-3)]
    pub eps: f64,
    #[arg(long, default_value_t = 1e-3)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Fraction of non-degenerate entries that must be within `tol`.
    #[arg(long, default_value_t = 0.99)]
    pub pass_fraction: f64,
    #[command(flatten)]
    pub lens: LensOverrides,
}

#[derive(Debug, Args)]
pub struct OracleArgs {
    #[arg(long)]
    pub recipe: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    /// Override the recipe's samples per pixel.
    #[arg(long)]
    pub spp: Option<usize>,
    /// Override the recipe's seed.
    #[arg(long)]
    pub seed: Option<u64>,
}

#[derive(Debug, Args)]
pub struct BenchmarkArgs {
    #[arg(long)]
    pub dataset: PathBuf,
    /// CSV report path.
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct DfdArgs {
    /// All-in-focus image (PNG, or 3-channel PFM).
    #[arg(long)]
    pub image: PathBuf,
    /// Defocused target (PNG, or 3-channel PFM).
    #[arg(long)]
    pub target: PathBuf,
    /// Output disparity PFM.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 0.0)]
    pub focus: f64,
    #[arg(long = "radius", value_name = "G", default_value_t = 8.0)]
    pub blur_scale: f64,
    #[arg(long)]
    pub max_radius: Option<usize>,
    /// Constant initial disparity.
    #[arg(long, default_value_t = 0.25, conflicts_with = "init_map")]
    pub init: f64,
    /// Initial disparity map (1-channel PFM).
    #[arg(long)]
    pub init_map: Option<PathBuf>,
    #[arg(long, default_value_t = 2000)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.01)]
    pub lr: f64,
    #[arg(long, default_value_t = 1e-5)]
    pub tol: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_l1: f64,
    #[arg(long, default_value_t = 0.1)]
    pub lambda_grad: f64,
    #[arg(long, default_value_t = 1.0)]
    pub lambda_hssim: f64,
    /// SSIM window sizes, comma separated.
    #[arg(long, value_delimiter = ',', default_values_t = [11, 21, 31])]
    pub windows: Vec<usize>,
    #[arg(long, default_value_t = 4)]
    pub levels: usize,
    /// Loss trace CSV.
    #[arg(long)]
    pub loss_csv: Option<PathBuf>,
    /// Render of the recovered disparity.
    #[arg(long)]
    pub render: Option<PathBuf>,
    /// Ground-truth disparity to report an RMSE against.
    #[arg(long)]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub scene: PathBuf,
}

/// Failure with its error code and exit class.
#[derive(Debug)]
pub struct CliError {
    pub code: &'static str,
    pub message: String,
    pub exit: i32,
}

impl CliError {
    fn invalid(code: &'static str, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: EXIT_INVALID,
        }
    }

    fn numerical(code: &'static str, message: impl Display) -> Self {
        Self {
            code,
            message: message.to_string(),
            exit: EXIT_NUMERICAL,
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        Self::invalid(e.code(), e)
    }
}

impl From<SceneError> for CliError {
    fn from(e: SceneError) -> Self {
        Self::invalid(e.code(), e)
    }
}

impl From<RenderError> for CliError {
    fn from(e: RenderError) -> Self {
        Self::invalid(e.code(), e)
    }
}

impl From<MetricError> for CliError {
    fn from(e: MetricError) -> Self {
        Self::invalid(e.code(), e)
    }
}

impl From<OracleError> for CliError {
    fn from(e: OracleError) -> Self {
        Self::invalid(e.code(), e)
    }
}

impl From<DfdError> for CliError {
    fn from(e: DfdError) -> Self {
        match e {
            DfdError::Diverged { .. } => Self::numerical(e.code(), e),
            _ => Self::invalid(e.code(), e),
        }
    }
}

type Fields = Vec<(&'static str, String)>;

fn field(key: &'static str, value: impl Display) -> (&'static str, String) {
    (key, value.to_string())
}

fn summary(status: &str, cmd: &str, start: Instant, fields: &Fields) -> String {
    let mut line = format!(
        "status={status} cmd={cmd} wall_ms={}",
        start.elapsed().as_millis()
    );
    for (k, v) in fields {
        line.push_str(&format!(" {k}={v}"));
    }
    line
}

/// Parses `args` (program name first), runs the command and returns the
/// process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let _ = e.print();
            return code;
        }
    };
    if let Some(n) = cli.threads {
        if n == 0 {
            eprintln!("error: --threads must be >= 1");
            return EXIT_USAGE;
        }
        // a second call in the same process keeps the first pool
        let _ = rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global();
    }
    let start = Instant::now();
    let name = cli.command.name();
    match dispatch(&cli.command) {
        Ok(fields) => {
            println!("{}", summary("ok", name, start, &fields));
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {}: {}", e.code, e.message);
            println!(
                "{}",
                summary("fail", name, start, &vec![field("error", e.code)])
            );
            e.exit
        }
    }
}

fn dispatch(cmd: &Command) -> Result<Fields, CliError> {
    match cmd {
        Command::Render(a) => cmd_render(a),
        Command::Gradcheck(a) => cmd_gradcheck(a),
        Command::Oracle(a) => cmd_oracle(a),
        Command::Benchmark(a) => cmd_benchmark(a),
        Command::Dfd(a) => cmd_dfd(a),
        Command::Validate(a) => cmd_validate(a),
    }
}

fn cmd_render(a: &RenderArgs) -> Result<Fields, CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    let lens = a.lens.apply(lens)?;
    let out = render(&scene, &lens)?;
    save_color_png(&a.out, &out.bokeh)?;
    if let Some(dir) = &a.debug {
        for (i, (c, v)) in out
            .composite_weights
            .iter()
            .zip(&out.per_layer_visibility)
            .enumerate()
        {
            write_pfm(&dir.join(format!("composite_weight_{i}.pfm")), c)?;
            write_pfm(&dir.join(format!("visibility_{i}.pfm")), v)?;
        }
    }
    Ok(vec![
        field("width", scene.width()),
        field("height", scene.height()),
        field("layers", scene.len()),
        field("radius", out.radius),
        field("out", a.out.display()),
    ])
}

fn cmd_gradcheck(a: &GradcheckArgs) -> Result<Fields, CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    let lens = a.lens.apply(lens)?;
    let cfg = GradcheckConfig {
        eps: a.eps,
        tol: a.tol,
        seed: a.seed,
        pass_fraction: a.pass_fraction,
        ..GradcheckConfig::default()
    };
    let report = gradcheck(&scene, &lens, &cfg)?;
    for f in &report.families {
        println!(
            "family={} checked={} excluded={} max_rel={:.3e} median_rel={:.3e} within_tol={:.4} pass={}",
            f.family.name(),
            f.checked,
            f.excluded,
            f.max_rel,
            f.median_rel,
            f.within_tol,
            f.pass
        );
    }
    if !report.passed() {
        let failed: Vec<&str> = report
            .families
            .iter()
            .filter(|f| !f.pass)
            .map(|f| f.family.name())
            .collect();
        return Err(CliError::numerical(
            "GRADCHECK_FAILED",
            format!("families outside tolerance {}: {}", a.tol, failed.join(",")),
        ));
    }
    let mut fields = vec![field("radius", report.radius)];
    for f in &report.families {
        let key: &'static str = match f.family.name() {
            "color" => "max_rel_color",
            "disparity" => "max_rel_disparity",
            _ => "max_rel_alpha",
        };
        fields.push(field(key, format!("{:.3e}", f.max_rel)));
    }
    Ok(fields)
}

fn cmd_oracle(a: &OracleArgs) -> Result<Fields, CliError> {
    let mut recipe = Recipe::load(&a.recipe)?;
    if let Some(spp) = a.spp {
        recipe.lens.samples_per_pixel = spp;
        for s in &mut recipe.scenes {
            s.samples_per_pixel = None;
        }
    }
    if let Some(seed) = a.seed {
        recipe.lens.rng_seed = seed;
        for s in &mut recipe.scenes {
            s.seed = None;
        }
    }
    let base = a.recipe.parent().unwrap_or(Path::new(""));
    let dirs = generate_benchmark(&recipe, base, &a.out)?;
    Ok(vec![
        field("scenes", dirs.len()),
        field("out", a.out.display()),
    ])
}

fn cmd_benchmark(a: &BenchmarkArgs) -> Result<Fields, CliError> {
    let report = evaluate_dataset(&a.dataset)?;
    let csv = report.to_csv();
    write_text(&a.out, &csv)?;
    print!("{csv}");
    let (ours, naive) = (report.engine().mean(), report.baseline().mean());
    Ok(vec![
        field("scenes", report.scenes.len()),
        field("mean_psnr", format!("{:.3}", ours.psnr)),
        field("mean_psnr_naive", format!("{:.3}", naive.psnr)),
        field("out", a.out.display()),
    ])
}

fn load_image(path: &Path) -> Result<ImageBuffer, CliError> {
    let is_pfm = path
        .extension()
        .is_some_and(|e| e.eq_ignore_ascii_case("pfm"));
    let img = if is_pfm {
        read_pfm(path)?
    } else {
        load_color_png(path)?
    };
    if img.channels() != 3 {
        return Err(CliError::invalid(
            "DECODE_ERROR",
            format!("{}: expected a 3-channel image", path.display()),
        ));
    }
    Ok(img)
}

fn cmd_dfd(a: &DfdArgs) -> Result<Fields, CliError> {
    let image = load_image(&a.image)?;
    let target = load_image(&a.target)?;
    let init = match &a.init_map {
        Some(p) => read_pfm(p)?,
        None => ImageBuffer::filled(image.width(), image.height(), 1, a.init),
    };
    let mut lens = LensConfig::new(a.focus, a.blur_scale, RenderMode::Soft);
    if let Some(r) = a.max_radius {
        lens.max_radius = RadiusPolicy::Fixed(r);
    }
    let mut p = DfdProblem::new(image, target, lens, init);
    p.loss.weights.l1 = a.lambda_l1;
    p.loss.weights.grad = a.lambda_grad;
    p.loss.weights.hssim = a.lambda_hssim;
    p.loss.windows = a.windows.clone();
    p.loss.pyramid_levels = a.levels;
    p.optimizer.max_iterations = a.iters;
    p.optimizer.learning_rate = a.lr;
    p.optimizer.tolerance = a.tol;
    let result = optimize(&p)?;
    write_pfm(&a.out, &result.disparity)?;
    if let Some(csv) = &a.loss_csv {
        write_text(csv, &result.trace_csv())?;
    }
    if let Some(r) = &a.render {
        save_color_png(r, &result.render)?;
    }
    let mut fields = vec![
        field("iterations", result.trace.len()),
        field("best_iteration", result.best_iteration),
        field("loss", format!("{:.6e}", result.best_loss)),
        field("psnr", format!("{:.3}", psnr(&result.render, &p.target)?)),
    ];
    if let Some(t) = &a.truth {
        let truth = read_pfm(t)?;
        let e = crate::metrics::rmse(&result.disparity, &truth)?;
        fields.push(field("disparity_rmse", format!("{e:.5}")));
    }
    fields.push(field("out", a.out.display()));
    Ok(fields)
}

fn cmd_validate(a: &ValidateArgs) -> Result<Fields, CliError> {
    let (scene, lens) = load_scene(&a.scene)?;
    validate_scene(&scene)?;
    Ok(vec![
        field("width", scene.width()),
        field("height", scene.height()),
        field("layers", scene.len()),
        field("radius", lens.resolve_radius(&scene)),
    ])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_flags_are_usage_errors() {
        assert_eq!(
            run(["bokeh", "render", "--scene", "x", "--out", "y", "--bogus"]),
            EXIT_USAGE
        );
        assert_eq!(run(["bokeh", "frobnicate"]), EXIT_USAGE);
        assert_eq!(run(["bokeh"]), EXIT_USAGE);
    }

    #[test]
    fn help_is_success() {
        assert_eq!(run(["bokeh", "--help"]), EXIT_OK);
    }

    #[test]
    fn missing_manifest_is_invalid_input() {
        assert_eq!(
            run(["bokeh", "validate", "--scene", "/nonexistent/manifest.toml"]),
            EXIT_INVALID
        );
    }

    #[test]
    fn summary_line_format() {
        let line = summary("ok", "render", Instant::now(), &vec![field("out", "a.png")]);
        assert!(line.starts_with("status=ok cmd=render wall_ms="));
        assert!(line.ends_with(" out=a.png"));
    }
}
