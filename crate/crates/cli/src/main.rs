mod dataset;

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use bayescount::config::{DEFAULT_MARGIN_FRACTION, DEFAULT_SIGMA};
use bayescount::io::{read_grid, read_scene, write_density, write_pgm};
use bayescount::sweep::{format_csv, run_sweep, SweepConfig, SweepKind};
use bayescount::{
    baseline_density, entropy_map, evaluate, train, BenchmarkSpec, DensityGrid, Error, Kernel, LossConfig,
    LossKind, Margin, ToyModel, TrainConfig,
};
use clap::{Args, Parser, Subcommand, ValueEnum};

const THREADS_VAR: &str = "BAYESCOUNT_THREADS";

/// Density estimation from point annotations with the expected-count loss.
#[derive(Parser, Debug)]
#[command(name = "bayescount", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic benchmark as scene/input pairs plus a manifest
    Gen(GenArgs),
    /// Train the toy model on a generated dataset
    Train(TrainArgs),
    /// Report count MAE/MSE of a checkpoint on a dataset split
    Eval(EvalArgs),
    /// Render the per-pixel label entropy of a scene as a PGM
    Entropy(EntropyArgs),
    /// Write an estimated or ground-truth density map (PDENS + PGM)
    Density(DensityArgs),
    /// Run a sigma, noise, or loss-comparison sweep and write a CSV
    Sweep(SweepArgs),
}

#[derive(Args, Debug)]
struct GenArgs {
    /// Benchmark name
    #[arg(long, default_value = "synth-v1")]
    spec: String,
    /// Output directory
    #[arg(long)]
    out: PathBuf,
    /// Override the benchmark seed
    #[arg(long)]
    seed: Option<u64>,
}

/// Options shared by every command that builds a loss configuration.
#[derive(Args, Debug, Clone)]
struct LossArgs {
    /// Gaussian likelihood width, in cells
    #[arg(long, default_value_t = DEFAULT_SIGMA)]
    sigma: f64,
    /// Background margin in cells; takes precedence over --d-frac
    #[arg(long)]
    d: Option<f64>,
    /// Background margin as a fraction of the shorter grid side [default: 0.15]
    #[arg(long)]
    d_frac: Option<f64>,
}

impl LossArgs {
    fn margin(&self) -> Margin {
        match (self.d, self.d_frac) {
            (Some(d), frac) => {
                if frac.is_some() {
                    eprintln!("warning: both --d and --d-frac given; using --d {d}");
                }
                Margin::Absolute(d)
            }
            (None, frac) => Margin::Fraction(frac.unwrap_or(DEFAULT_MARGIN_FRACTION)),
        }
    }

    fn config(&self, background: bool) -> LossConfig {
        let mut cfg = LossConfig::new(self.sigma);
        cfg.margin = self.margin();
        cfg.background = background;
        cfg
    }
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum LossArg {
    Baseline,
    Bayes,
    #[value(name = "bayes+", alias = "bayes-plus")]
    BayesPlus,
}

impl From<LossArg> for LossKind {
    fn from(l: LossArg) -> Self {
        match l {
            LossArg::Baseline => LossKind::Baseline,
            LossArg::Bayes => LossKind::Bayes,
            LossArg::BayesPlus => LossKind::BayesPlus,
        }
    }
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Dataset directory written by `gen`
    #[arg(long)]
    data: PathBuf,
    /// Checkpoint output path
    #[arg(long)]
    out: PathBuf,
    /// Per-epoch loss trace CSV (default: <out>.trace.csv)
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Training objective
    #[arg(long, value_enum, default_value = "bayes+")]
    loss: LossArg,
    #[command(flatten)]
    loss_args: LossArgs,
    /// Passes over the training split
    #[arg(long, default_value_t = 50)]
    epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Images per optimizer step
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    /// Seed for initialization and shuffling
    #[arg(long, default_value_t = 7)]
    seed: u64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    /// Checkpoint written by `train`
    #[arg(long)]
    checkpoint: PathBuf,
    /// Dataset directory written by `gen`
    #[arg(long)]
    data: PathBuf,
    /// Dataset split to evaluate
    #[arg(long, value_enum, default_value = "test")]
    split: Split,
    /// Per-image CSV output
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum Split {
    Train,
    Test,
}

impl Split {
    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "test",
        }
    }
}

#[derive(Args, Debug)]
struct EntropyArgs {
    /// Scene JSON file
    #[arg(long)]
    scene: PathBuf,
    /// Output PGM path; bounds go to <out>.bounds.txt
    #[arg(long)]
    out: PathBuf,
    /// Add the background label
    #[arg(long)]
    background: bool,
    #[command(flatten)]
    loss_args: LossArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum DensityMode {
    /// Run a checkpoint on an input grid
    Estimate,
    /// Gaussian target density from a scene's annotations
    BaselineGt,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum KernelArg {
    Fixed,
    Adaptive,
}

#[derive(Args, Debug)]
struct DensityArgs {
    /// What to compute
    #[arg(long, value_enum)]
    mode: DensityMode,
    /// Checkpoint (estimate mode)
    #[arg(long, required_if_eq("mode", "estimate"))]
    checkpoint: Option<PathBuf>,
    /// Input grid in PDENS format (estimate mode)
    #[arg(long, required_if_eq("mode", "estimate"))]
    input: Option<PathBuf>,
    /// Scene JSON (baseline-gt mode)
    #[arg(long, required_if_eq("mode", "baseline-gt"))]
    scene: Option<PathBuf>,
    /// Target kernel (baseline-gt mode)
    #[arg(long, value_enum, default_value = "fixed")]
    kernel: KernelArg,
    /// Fixed kernel width, in cells
    #[arg(long, default_value_t = 8.0)]
    sigma: f64,
    /// Adaptive kernel scale on the mean nearest-neighbour distance
    #[arg(long, default_value_t = 0.3)]
    beta: f64,
    /// Density output path; a PGM preview is written next to it
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SweepArgs {
    /// Which study to run
    #[arg(long, value_enum)]
    kind: SweepArg,
    /// CSV output path
    #[arg(long)]
    out: PathBuf,
    /// Benchmark name
    #[arg(long, default_value = "synth-v1")]
    spec: String,
    /// Sigma grid for the sigma sweep
    #[arg(long, value_delimiter = ',', default_value = "1,2,4,8,16")]
    sigmas: Vec<f64>,
    /// Annotation noise grid (fractions of grid height) for the noise sweep
    #[arg(long, value_delimiter = ',', default_value = "0,0.02,0.04")]
    deviations: Vec<f64>,
    /// Losses to compare (default depends on --kind)
    #[arg(long, value_delimiter = ',', value_enum)]
    losses: Vec<LossArg>,
    /// Training seeds per grid point
    #[arg(long, value_delimiter = ',', default_value = "7,8,9")]
    seeds: Vec<u64>,
    /// Epochs per training run
    #[arg(long, default_value_t = 15)]
    epochs: usize,
    /// Adam learning rate
    #[arg(long, default_value_t = 1e-3)]
    lr: f64,
    /// Images per optimizer step
    #[arg(long, default_value_t = 4)]
    batch_size: usize,
    #[command(flatten)]
    loss_args: LossArgs,
}

#[derive(Copy, Clone, Debug, ValueEnum)]
enum SweepArg {
    Sigma,
    Noise,
    LossCompare,
}

fn print_config(pairs: &[(&str, String)]) {
    let body: Vec<String> = pairs.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("config: {}", body.join(" "));
}

fn margin_text(cfg: &LossConfig) -> String {
    match cfg.margin {
        Margin::Absolute(d) => format!("{d}"),
        Margin::Fraction(f) => format!("{f}*shorter-side"),
    }
}

fn cmd_gen(a: GenArgs) -> Result<()> {
    let mut spec = BenchmarkSpec::by_name(&a.spec)?;
    if let Some(seed) = a.seed {
        spec.scene.seed = seed;
    }
    let s = &spec.scene;
    print_config(&[
        ("spec", spec.name.clone()),
        ("grid", format!("{}x{}", s.height, s.width)),
        ("counts", format!("{}-{}", s.count_min, s.count_max)),
        ("separation", s.min_separation.to_string()),
        ("blob-radius", format!("{}-{}", s.blob_radius_min, s.blob_radius_max)),
        ("noise", s.noise.to_string()),
        ("train", spec.train.to_string()),
        ("test", spec.test.to_string()),
        ("seed", s.seed.to_string()),
        ("out", a.out.display().to_string()),
    ]);
    let bench = spec.generate()?;
    let n = dataset::write(&bench, &spec.name, &a.out)?;
    println!("wrote {n} scene/input pairs and {} to {}", dataset::MANIFEST, a.out.display());
    Ok(())
}

fn cmd_train(a: TrainArgs) -> Result<()> {
    let loss: LossKind = a.loss.into();
    let cfg = TrainConfig {
        lr: a.lr,
        epochs: a.epochs,
        batch_size: a.batch_size,
        seed: a.seed,
        loss,
        loss_cfg: a.loss_args.config(loss == LossKind::BayesPlus),
    };
    let trace_path = a.trace.unwrap_or_else(|| a.out.with_extension("trace.csv"));
    print_config(&[
        ("data", a.data.display().to_string()),
        ("loss", loss.to_string()),
        ("sigma", cfg.loss_cfg.sigma.to_string()),
        ("d", margin_text(&cfg.loss_cfg)),
        ("epochs", cfg.epochs.to_string()),
        ("lr", cfg.lr.to_string()),
        ("batch-size", cfg.batch_size.to_string()),
        ("seed", cfg.seed.to_string()),
        ("out", a.out.display().to_string()),
        ("trace", trace_path.display().to_string()),
    ]);
    let train_set = dataset::read_split(&a.data, "train")?;
    let test_set = dataset::read_split(&a.data, "test")?;
    let outcome = train(&train_set, &cfg)?;
    outcome.model.save(&a.out)?;

    let mut csv = String::from("epoch,loss\n");
    for (e, v) in outcome.trace.iter().enumerate() {
        csv.push_str(&format!("{},{v}\n", e + 1));
    }
    write_text(&trace_path, &csv)?;

    let report = evaluate(&outcome.model, &test_set)?;
    println!(
        "held-out ({} images): mae={} mse={}",
        report.images(),
        report.mae,
        report.mse
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<()> {
    print_config(&[
        ("checkpoint", a.checkpoint.display().to_string()),
        ("data", a.data.display().to_string()),
        ("split", a.split.name().to_string()),
        ("out", a.out.as_ref().map_or("-".into(), |p| p.display().to_string())),
    ]);
    let model = ToyModel::load(&a.checkpoint)?;
    let samples = dataset::read_split(&a.data, a.split.name())?;
    let report = evaluate(&model, &samples)?;
    if let Some(out) = &a.out {
        let mut csv = String::from("image,count,estimate\n");
        for (k, (n, c)) in report.per_image.iter().enumerate() {
            csv.push_str(&format!("{k},{n},{c}\n"));
        }
        write_text(out, &csv)?;
    }
    println!(
        "{} ({} images): mae={} mse={}",
        a.split.name(),
        report.images(),
        report.mae,
        report.mse
    );
    Ok(())
}

fn cmd_entropy(a: EntropyArgs) -> Result<()> {
    let cfg = a.loss_args.config(a.background);
    print_config(&[
        ("scene", a.scene.display().to_string()),
        ("sigma", cfg.sigma.to_string()),
        ("background", cfg.background.to_string()),
        ("d", if cfg.background { margin_text(&cfg) } else { "-".into() }),
        ("out", a.out.display().to_string()),
    ]);
    let scene = read_scene(&a.scene)?;
    let map = entropy_map(&scene, &cfg)?;
    let b = write_pgm(&map, &a.out)?;
    println!(
        "entropy range [{}, {}] (ceiling ln {} = {})",
        b.min,
        b.max,
        cfg.label_count(&scene),
        (cfg.label_count(&scene) as f64).ln()
    );
    Ok(())
}

fn cmd_density(a: DensityArgs) -> Result<()> {
    let kernel = match a.kernel {
        KernelArg::Fixed => Kernel::Fixed { sigma: a.sigma },
        KernelArg::Adaptive => Kernel::Adaptive { beta: a.beta },
    };
    let pgm = a.out.with_extension("pgm");
    let density: DensityGrid = match a.mode {
        DensityMode::Estimate => {
            let (ckpt, input) = (a.checkpoint.expect("required by clap"), a.input.expect("required by clap"));
            print_config(&[
                ("mode", "estimate".into()),
                ("checkpoint", ckpt.display().to_string()),
                ("input", input.display().to_string()),
                ("out", a.out.display().to_string()),
                ("pgm", pgm.display().to_string()),
            ]);
            let model = ToyModel::load(&ckpt)?;
            model.forward(&read_grid(&input)?)?
        }
        DensityMode::BaselineGt => {
            let scene_path = a.scene.expect("required by clap");
            print_config(&[
                ("mode", "baseline-gt".into()),
                ("scene", scene_path.display().to_string()),
                ("kernel", format!("{kernel:?}")),
                ("out", a.out.display().to_string()),
                ("pgm", pgm.display().to_string()),
            ]);
            baseline_density(&read_scene(&scene_path)?, kernel)?
        }
    };
    write_density(&density, &a.out)?;
    write_pgm(density.grid(), &pgm)?;
    println!("total count {}", bayescount::total_count(&density));
    Ok(())
}

fn cmd_sweep(a: SweepArgs) -> Result<()> {
    let kind = match a.kind {
        SweepArg::Sigma => SweepKind::Sigma,
        SweepArg::Noise => SweepKind::Noise,
        SweepArg::LossCompare => SweepKind::LossCompare,
    };
    let mut cfg = SweepConfig::new(kind);
    cfg.benchmark = BenchmarkSpec::by_name(&a.spec)?;
    cfg.sigmas = a.sigmas;
    cfg.deviations = a.deviations;
    if !a.losses.is_empty() {
        cfg.losses = a.losses.into_iter().map(LossKind::from).collect();
    }
    cfg.seeds = a.seeds;
    cfg.train.epochs = a.epochs;
    cfg.train.lr = a.lr;
    cfg.train.batch_size = a.batch_size;
    cfg.train.loss_cfg = a.loss_args.config(false);
    let list = |v: Vec<String>| v.join(",");
    print_config(&[
        ("kind", kind.to_string()),
        ("spec", cfg.benchmark.name.clone()),
        ("sigmas", list(cfg.sigmas.iter().map(f64::to_string).collect())),
        ("deviations", list(cfg.deviations.iter().map(f64::to_string).collect())),
        ("losses", list(cfg.losses.iter().map(LossKind::to_string).collect())),
        ("seeds", list(cfg.seeds.iter().map(u64::to_string).collect())),
        ("epochs", cfg.train.epochs.to_string()),
        ("lr", cfg.train.lr.to_string()),
        ("batch-size", cfg.train.batch_size.to_string()),
        ("sigma", cfg.train.loss_cfg.sigma.to_string()),
        ("d", margin_text(&cfg.train.loss_cfg)),
        ("out", a.out.display().to_string()),
    ]);
    let rows = run_sweep(&cfg)?;
    write_text(&a.out, &format_csv(&rows))?;
    println!("wrote {} rows to {}", rows.len(), a.out.display());
    Ok(())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::Io { path: path.to_path_buf(), source: e })?;
    Ok(())
}

fn configure_threads() -> Result<()> {
    let Ok(raw) = std::env::var(THREADS_VAR) else {
        return Ok(());
    };
    let n: usize = match raw.trim().parse() {
        Ok(n) if n > 0 => n,
        _ => bail!(Error::Invalid(format!("{THREADS_VAR} must be a positive integer, got '{raw}'"))),
    };
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .context("configuring the worker pool")?;
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    configure_threads()?;
    match cli.command {
        Command::Gen(a) => cmd_gen(a),
        Command::Train(a) => cmd_train(a),
        Command::Eval(a) => cmd_eval(a),
        Command::Entropy(a) => cmd_entropy(a),
        Command::Density(a) => cmd_density(a),
        Command::Sweep(a) => cmd_sweep(a),
    }
}

/// Exit status for a failed run: 3 i/o, 4 bad input, 5 shape mismatch, 1 otherwise.
/// Clap uses 2 for invalid flags.
fn exit_code(err: &anyhow::Error) -> u8 {
    match err.chain().find_map(|e| e.downcast_ref::<Error>()) {
        Some(Error::Io { .. }) => 3,
        Some(Error::Parse(_) | Error::Invalid(_) | Error::EmptyScene | Error::EmptyDataset) => 4,
        Some(Error::Shape { .. }) => 5,
        _ => 1,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            let msg: Vec<String> = err.chain().map(|e| e.to_string()).collect();
            eprintln!("error: {}", msg.join(": "));
            ExitCode::from(exit_code(&err))
        }
    }
}
