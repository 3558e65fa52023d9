//! Command-line front end: argument parsing, file handling, provenance.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use log::info;

use crate::blocks::BlockConfig;
use crate::distributions::{stabilize_volume, StabilizeOptions};
use crate::io::{parse_gradients, read_mask, read_volume, write_gradients, write_mask, write_volume};
use crate::metrics::quality_report;
use crate::noise::{
    estimate_noise_field, local_noise_variance, noise_field_from_map, piesno, NoiseField, PiesnoConfig,
};
use crate::phantom::{crossing_phantom, phantom_gradient_table};
use crate::reconstruct::{nlsam_denoise_with_report, DenoiseConfig, DictionaryScope, Eq5Weighting, Mode};
use crate::sim::{add_noise, BetaProfile, NoiseSpec};
use crate::sparse::{PenaltyRule, ResidualBound};
use crate::volume::{GradientTable, Mask3D, Volume4D, DEFAULT_B0_THRESHOLD};

#[derive(Parser, Debug)]
#[command(name = "nlsam", version, about = "Non-local spatial and angular matching denoising for diffusion MRI")]
pub struct Cli {
    /// Worker threads (defaults to all cores; 1 is fully sequential).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Denoise a 4D diffusion dataset.
    Denoise(DenoiseArgs),
    /// Map magnitude data to Gaussian-distributed values.
    Stabilize(StabilizeArgs),
    /// Estimate the noise standard deviation field.
    EstimateNoise(EstimateArgs),
    /// Add synthetic Rician / nc-χ noise to a clean dataset (or a built-in phantom).
    Simulate(SimulateArgs),
    /// Compare a volume against a reference with PSNR and SSIM.
    Evaluate(EvaluateArgs),
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum NoiseMethod {
    /// Per-slice background statistics (stationary noise).
    Piesno,
    /// Smoothed local residual standard deviation (spatially varying).
    Field,
    /// Minimum distance between neighboring high-pass patches.
    Local,
    /// Local statistics of an acquired noise-only map (`--noise-map`).
    Map,
}

impl NoiseMethod {
    fn as_str(self) -> &'static str {
        match self {
            NoiseMethod::Piesno => "piesno",
            NoiseMethod::Field => "field",
            NoiseMethod::Local => "local",
            NoiseMethod::Map => "map",
        }
    }
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Full,
    Fast,
}

#[derive(Copy, Clone, Debug, PartialEq, Eq, ValueEnum)]
pub enum BetaArg {
    Constant,
    Sphere,
}

#[derive(Args, Debug)]
pub struct NoiseArgs {
    /// Number of receiver coils N (1 = Rician).
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    #[arg(long = "noise", value_enum, default_value_t = NoiseMethod::Piesno)]
    pub method: NoiseMethod,
    /// Noise-only acquisition for `--noise map`.
    #[arg(long)]
    pub noise_map: Option<PathBuf>,
    /// Precomputed σ field (NIfTI); overrides `--noise`.
    #[arg(long)]
    pub sigma: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct DenoiseArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub bval: PathBuf,
    #[arg(long)]
    pub bvec: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[command(flatten)]
    pub noise: NoiseArgs,
    #[arg(long, default_value_t = 3)]
    pub ps: usize,
    #[arg(long, default_value_t = 4)]
    pub an: usize,
    #[arg(long, default_value_t = 1)]
    pub stride: usize,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    pub mode: ModeArg,
    /// Skip the variance-stabilization step.
    #[arg(long)]
    pub no_stabilize: bool,
    /// Weight blocks by 1 + ℓ0 instead of 1 / (1 + ℓ0).
    #[arg(long)]
    pub eq5_literal: bool,
    /// Train one dictionary on all subsets instead of one per subset.
    #[arg(long)]
    pub global_dict: bool,
    #[arg(long, default_value_t = 150)]
    pub epochs: usize,
    #[arg(long, default_value_t = 200_000)]
    pub max_train_columns: usize,
    /// Multiplier on every local residual bound.
    #[arg(long, default_value_t = PenaltyRule::default().lambda_scale)]
    pub lambda_scale: f64,
    /// Bound ½‖x − Dα‖² by λ_i instead of ‖x − Dα‖².
    #[arg(long)]
    pub half_residual_bound: bool,
    #[arg(long, default_value_t = DEFAULT_B0_THRESHOLD)]
    pub b0_threshold: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Args, Debug)]
pub struct StabilizeArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    #[arg(long)]
    pub out: PathBuf,
    #[command(flatten)]
    pub noise: NoiseArgs,
}

#[derive(Args, Debug)]
pub struct EstimateArgs {
    #[arg(long = "in")]
    pub input: PathBuf,
    /// Where to write the σ field.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    #[arg(long, value_enum, default_value_t = NoiseMethod::Piesno)]
    pub method: NoiseMethod,
    #[arg(long)]
    pub noise_map: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct SimulateArgs {
    /// Clean dataset; the built-in crossing phantom when omitted.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub bval: Option<PathBuf>,
    #[arg(long, requires = "input")]
    pub bvec: Option<PathBuf>,
    #[arg(long)]
    pub mask: Option<PathBuf>,
    #[arg(long)]
    pub snr: f64,
    #[arg(long, default_value_t = 1)]
    pub coils: usize,
    #[arg(long, value_enum, default_value_t = BetaArg::Constant)]
    pub beta: BetaArg,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output prefix: writes `<prefix>_noisy.nii` and `<prefix>_sigma.nii`.
    #[arg(long, default_value = "simulated")]
    pub out_prefix: String,
    /// Grid size of the built-in phantom.
    #[arg(long, default_value_t = 24)]
    pub size: usize,
    /// Gradient directions of the built-in phantom.
    #[arg(long, default_value_t = 12)]
    pub directions: usize,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    #[arg(long = "ref")]
    pub reference: PathBuf,
    #[arg(long)]
    pub test: PathBuf,
    /// Defaults to voxels where any reference volume is nonzero.
    #[arg(long)]
    pub mask: Option<PathBuf>,
    /// Also print one line per volume.
    #[arg(long)]
    pub per_volume: bool,
}

/// A failure attributed to the stage that produced it.
#[derive(Debug)]
pub enum CliError {
    /// Bad or missing input (exit code 2).
    Input(String),
    /// Processing failure (exit code 1).
    Runtime(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Input(_) => 2,
            CliError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Input(m) | CliError::Runtime(m) => f.write_str(m),
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn input<T>(stage: &str, r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Input(format!("{stage}: {e}")))
}

fn runtime<T>(stage: &str, r: crate::error::Result<T>) -> CliResult<T> {
    r.map_err(|e| CliError::Runtime(format!("{stage}: {e}")))
}

fn load_volume(path: &Path) -> CliResult<Volume4D> {
    input(&format!("reading volume {}", path.display()), read_volume(path))
}

fn load_gradients(bval: &Path, bvec: &Path, threshold: f64) -> CliResult<GradientTable> {
    let read = |p: &Path, what: &str| {
        std::fs::read_to_string(p).map_err(|e| CliError::Input(format!("reading {what} file {}: {e}", p.display())))
    };
    let bvals = read(bval, "bval")?;
    let bvecs = read(bvec, "bvec")?;
    input("parsing gradients", parse_gradients(&bvals, &bvecs, threshold))
}

fn load_mask(path: Option<&PathBuf>, vol: &Volume4D) -> CliResult<Option<Mask3D>> {
    let Some(p) = path else { return Ok(None) };
    let mask = input(&format!("reading mask {}", p.display()), read_mask(p))?;
    input("checking mask", mask.check_matches(vol))?;
    Ok(Some(mask))
}

fn obtain_noise(vol: &Volume4D, args: &NoiseArgs) -> CliResult<NoiseField> {
    if args.coils == 0 {
        return Err(CliError::Input("--coils must be at least 1".into()));
    }
    if let Some(p) = &args.sigma {
        let sigma = load_volume(p)?;
        return input(
            "loading sigma field",
            NoiseField::from_volume(&sigma, args.coils, crate::noise::NoiseProvenance::Provided),
        );
    }
    estimate(vol, args.method, args.coils, args.noise_map.as_deref())
}

fn estimate(vol: &Volume4D, method: NoiseMethod, coils: usize, map: Option<&Path>) -> CliResult<NoiseField> {
    let stage = format!("noise estimation ({})", method.as_str());
    match method {
        NoiseMethod::Piesno => runtime(&stage, piesno(vol, coils, &PiesnoConfig::default())),
        NoiseMethod::Field => runtime(&stage, estimate_noise_field(vol, coils)),
        NoiseMethod::Local => runtime(&stage, local_noise_variance(vol, 1, coils)),
        NoiseMethod::Map => {
            let p = map.ok_or_else(|| CliError::Input("--noise map needs --noise-map".into()))?;
            let m = load_volume(p)?;
            if m.spatial_dims() != vol.spatial_dims() {
                return Err(CliError::Input("noise map does not match the volume".into()));
            }
            runtime(&stage, noise_field_from_map(&m, coils))
        }
    }
}

fn median_sigma(field: &NoiseField) -> f64 {
    let mut s: Vec<f64> = field.sigma().iter().copied().filter(|&v| v > 0.0).collect();
    if s.is_empty() {
        return 0.0;
    }
    crate::filters::median(&mut s)
}

fn save_volume(vol: &Volume4D, path: &Path) -> CliResult<()> {
    runtime(&format!("writing {}", path.display()), write_volume(vol, path))
}

/// Key=value record of a run, written next to its main output.
struct Provenance {
    text: String,
}

impl Provenance {
    fn new(command: &str) -> Self {
        let mut p = Self { text: String::new() };
        p.set("command", command);
        p.set("version", env!("CARGO_PKG_VERSION"));
        p
    }

    fn set(&mut self, key: &str, value: impl std::fmt::Display) {
        let _ = writeln!(self.text, "{key}={value}");
    }

    fn write(mut self, out: &Path, started: Instant) -> CliResult<()> {
        self.set("wall_seconds", format!("{:.3}", started.elapsed().as_secs_f64()));
        let mut path = out.as_os_str().to_owned();
        path.push(".provenance.txt");
        std::fs::write(&path, self.text)
            .map_err(|e| CliError::Runtime(format!("writing provenance {}: {e}", Path::new(&path).display())))
    }
}

fn add_noise_provenance(prov: &mut Provenance, args: &NoiseArgs, field: &NoiseField) {
    prov.set("coils", args.coils);
    match &args.sigma {
        Some(p) => prov.set("sigma_file", p.display()),
        None => prov.set("noise_method", args.method.as_str()),
    }
    if let Some(p) = &args.noise_map {
        prov.set("noise_map", p.display());
    }
    prov.set("sigma_provenance", field.provenance().as_str());
    prov.set("sigma_median", median_sigma(field));
}

fn cmd_denoise(args: &DenoiseArgs, threads: usize) -> CliResult<()> {
    let started = Instant::now();
    let table = load_gradients(&args.bval, &args.bvec, args.b0_threshold)?;
    let vol = load_volume(&args.input)?;
    input("checking gradients", table.check_matches(&vol))?;
    let mask = load_mask(args.mask.as_ref(), &vol)?;
    let block = input("block configuration", BlockConfig::new(args.ps, args.an, args.stride))?;
    let field = obtain_noise(&vol, &args.noise)?;
    let mut cfg = DenoiseConfig {
        block,
        mode: if args.mode == ModeArg::Fast { Mode::Fast } else { Mode::Full },
        stabilize: !args.no_stabilize,
        weighting: if args.eq5_literal { Eq5Weighting::Literal } else { Eq5Weighting::Inverse },
        dictionary: if args.global_dict { DictionaryScope::Global } else { DictionaryScope::PerSubset },
        mask,
        seed: args.seed,
        ..DenoiseConfig::default()
    };
    cfg.penalty.lambda_scale = args.lambda_scale;
    if args.half_residual_bound {
        cfg.penalty.residual_bound = ResidualBound::HalfSquared;
    }
    cfg.train.epochs = args.epochs;
    cfg.train.max_train_columns = args.max_train_columns;
    let (out, report) = runtime("denoising", nlsam_denoise_with_report(&vol, &table, &field, &cfg))?;
    info!("processed {} of {} subsets", report.subset_targets.len(), report.subsets_total);
    save_volume(&out, &args.out)?;

    let mut prov = Provenance::new("denoise");
    prov.set("input", args.input.display());
    prov.set("bval", args.bval.display());
    prov.set("bvec", args.bvec.display());
    prov.set("mask", args.mask.as_ref().map_or("none".to_string(), |p| p.display().to_string()));
    prov.set("output", args.out.display());
    add_noise_provenance(&mut prov, &args.noise, &field);
    prov.set("patch_size", args.ps);
    prov.set("angular_neighbors", args.an);
    prov.set("stride", args.stride);
    prov.set("mode", cfg.mode.as_str());
    prov.set("stabilize", cfg.stabilize);
    prov.set("eq5_weighting", cfg.weighting.as_str());
    prov.set("dictionary", cfg.dictionary.as_str());
    prov.set("epochs", args.epochs);
    prov.set("max_train_columns", args.max_train_columns);
    prov.set("lambda_scale", args.lambda_scale);
    prov.set("residual_bound", cfg.penalty.residual_bound.as_str());
    prov.set("reweight_tol", cfg.encode.reweight_tol);
    prov.set("max_reweight", cfg.encode.max_reweight);
    prov.set("b0_threshold", args.b0_threshold);
    prov.set("seed", args.seed);
    prov.set("threads", threads);
    prov.set("subsets_processed", report.subset_targets.len());
    prov.set("subsets_total", report.subsets_total);
    prov.set("blocks_encoded", report.columns_encoded);
    prov.set("bound_failures", report.bound_failures);
    prov.set("mean_l0", format!("{:.4}", report.mean_l0));
    prov.write(&args.out, started)
}

fn cmd_stabilize(args: &StabilizeArgs) -> CliResult<()> {
    let started = Instant::now();
    let vol = load_volume(&args.input)?;
    let field = obtain_noise(&vol, &args.noise)?;
    let opts = StabilizeOptions::default();
    let out = runtime("stabilization", stabilize_volume(&vol, &field, &opts))?;
    save_volume(&out, &args.out)?;
    let mut prov = Provenance::new("stabilize");
    prov.set("input", args.input.display());
    prov.set("output", args.out.display());
    add_noise_provenance(&mut prov, &args.noise, &field);
    prov.set("eta_source", format!("{:?}", opts.eta_source));
    prov.set("noise_floor", format!("{:?}", opts.floor));
    prov.write(&args.out, started)
}

fn cmd_estimate_noise(args: &EstimateArgs) -> CliResult<()> {
    let started = Instant::now();
    if args.coils == 0 {
        return Err(CliError::Input("--coils must be at least 1".into()));
    }
    let vol = load_volume(&args.input)?;
    let field = estimate(&vol, args.method, args.coils, args.noise_map.as_deref())?;
    let sigma = median_sigma(&field);
    info!("median sigma {sigma:.6}");
    println!("sigma_median={sigma}");
    save_volume(&runtime("exporting sigma field", field.to_volume(vol.spacing()))?, &args.out)?;
    let mut prov = Provenance::new("estimate-noise");
    prov.set("input", args.input.display());
    prov.set("output", args.out.display());
    prov.set("method", args.method.as_str());
    prov.set("coils", args.coils);
    prov.set("sigma_median", sigma);
    prov.write(&args.out, started)
}

fn cmd_simulate(args: &SimulateArgs) -> CliResult<()> {
    let started = Instant::now();
    if !(args.snr > 0.0) {
        return Err(CliError::Input("--snr must be positive".into()));
    }
    if args.coils == 0 {
        return Err(CliError::Input("--coils must be at least 1".into()));
    }
    let prefix = &args.out_prefix;
    let (clean, table, mask) = match &args.input {
        Some(p) => {
            let (Some(bval), Some(bvec)) = (&args.bval, &args.bvec) else {
                return Err(CliError::Input("--in needs --bval and --bvec".into()));
            };
            let table = load_gradients(bval, bvec, DEFAULT_B0_THRESHOLD)?;
            let clean = load_volume(p)?;
            input("checking gradients", table.check_matches(&clean))?;
            let mask = load_mask(args.mask.as_ref(), &clean)?;
            (clean, table, mask)
        }
        None => {
            let table = runtime("phantom gradients", phantom_gradient_table(1, args.directions, 1000.0))?;
            let (clean, mask) = runtime("phantom", crossing_phantom([args.size; 3], &table))?;
            save_volume(&clean, Path::new(&format!("{prefix}_clean.nii")))?;
            runtime("writing gradients", write_gradients(&table, format!("{prefix}.bval"), format!("{prefix}.bvec")))?;
            runtime("writing mask", write_mask(&mask, clean.spacing(), format!("{prefix}_mask.nii")))?;
            (clean, table, Some(mask))
        }
    };
    let spec = NoiseSpec {
        snr: args.snr,
        n_coils: args.coils,
        beta: if args.beta == BetaArg::Sphere { BetaProfile::Sphere } else { BetaProfile::Constant },
        seed: args.seed,
    };
    let (noisy, field) = runtime("noise simulation", add_noise(&clean, &table, mask.as_ref(), &spec))?;
    let noisy_path = PathBuf::from(format!("{prefix}_noisy.nii"));
    save_volume(&noisy, &noisy_path)?;
    save_volume(
        &runtime("exporting sigma field", field.to_volume(clean.spacing()))?,
        Path::new(&format!("{prefix}_sigma.nii")),
    )?;
    let mut prov = Provenance::new("simulate");
    prov.set("input", args.input.as_ref().map_or("phantom".to_string(), |p| p.display().to_string()));
    prov.set("snr", args.snr);
    prov.set("coils", args.coils);
    prov.set("beta", spec.beta.as_str());
    prov.set("seed", args.seed);
    if args.input.is_none() {
        prov.set("size", args.size);
        prov.set("directions", args.directions);
    }
    prov.write(&noisy_path, started)
}

fn cmd_evaluate(args: &EvaluateArgs) -> CliResult<()> {
    let reference = load_volume(&args.reference)?;
    let test = load_volume(&args.test)?;
    if reference.dims() != test.dims() {
        return Err(CliError::Input(format!(
            "reference {:?} and test {:?} differ in shape",
            reference.dims(),
            test.dims()
        )));
    }
    let mask = match load_mask(args.mask.as_ref(), &reference)? {
        Some(m) => m,
        None => Mask3D::nonzero(&reference),
    };
    let report = runtime("evaluation", quality_report(&reference, &test, &mask))?;
    println!("psnr={}", report.psnr_db);
    println!("psnr_infinite={}", report.psnr_infinite);
    println!("ssim={}", report.ssim);
    println!("mask_voxels={}", report.mask_voxels);
    if args.per_volume {
        for (v, (p, s)) in report.psnr_per_volume.iter().zip(&report.ssim_per_volume).enumerate() {
            println!("volume={v} psnr={p} ssim={s}");
        }
    }
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let threads = cli.threads.unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()));
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(threads.max(1)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: thread pool: {e}");
            return 1;
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Denoise(a) => cmd_denoise(a, threads),
        Command::Stabilize(a) => cmd_stabilize(a),
        Command::EstimateNoise(a) => cmd_estimate_noise(a),
        Command::Simulate(a) => cmd_simulate(a),
        Command::Evaluate(a) => cmd_evaluate(a),
    });
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
