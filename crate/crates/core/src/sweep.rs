//! Experiment grids over sigma, annotation noise, or loss choice on a
//! synthetic benchmark. Rows always come back in grid order:
//! setting, then loss, then seed.

use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss::LossKind;
use crate::synth::{perturb_annotations, Benchmark, BenchmarkSpec};
use crate::train::{evaluate_with, train_with, Sample, TrainConfig};

pub const CSV_HEADER: &str = "setting,loss,seed,mae,mse";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepKind {
    Sigma,
    Noise,
    LossCompare,
}

impl FromStr for SweepKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sigma" => Ok(SweepKind::Sigma),
            "noise" => Ok(SweepKind::Noise),
            "loss-compare" => Ok(SweepKind::LossCompare),
            other => Err(Error::Parse(format!("unknown sweep kind '{other}'"))),
        }
    }
}

impl fmt::Display for SweepKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SweepKind::Sigma => "sigma",
            SweepKind::Noise => "noise",
            SweepKind::LossCompare => "loss-compare",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub kind: SweepKind,
    pub benchmark: BenchmarkSpec,
    /// Used by [`SweepKind::Sigma`].
    pub sigmas: Vec<f64>,
    /// Fractions of the grid height, used by [`SweepKind::Noise`].
    pub deviations: Vec<f64>,
    pub losses: Vec<LossKind>,
    pub seeds: Vec<u64>,
    /// Template for every run; `seed`, `loss`, and (for sigma sweeps) sigma are overridden.
    pub train: TrainConfig,
}

impl SweepConfig {
    pub fn new(kind: SweepKind) -> Self {
        let losses = match kind {
            SweepKind::LossCompare => LossKind::ALL.to_vec(),
            _ => vec![LossKind::Baseline, LossKind::Bayes],
        };
        Self {
            kind,
            benchmark: BenchmarkSpec::synth_v1(),
            sigmas: vec![1.0, 2.0, 4.0, 8.0, 16.0],
            deviations: vec![0.0, 0.02, 0.04],
            losses,
            seeds: vec![7, 8, 9],
            train: TrainConfig {
                epochs: 15,
                ..TrainConfig::default()
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.losses.is_empty() || self.seeds.is_empty() {
            return Err(Error::Invalid("sweep needs at least one loss and one seed".into()));
        }
        match self.kind {
            SweepKind::Sigma if self.sigmas.is_empty() => {
                Err(Error::Invalid("sigma sweep needs at least one sigma".into()))
            }
            SweepKind::Noise if self.deviations.is_empty() => {
                Err(Error::Invalid("noise sweep needs at least one deviation".into()))
            }
            _ => self.train.validate(),
        }
    }

    fn settings(&self) -> Vec<Setting> {
        match self.kind {
            SweepKind::Sigma => self.sigmas.iter().map(|&s| Setting::Sigma(s)).collect(),
            SweepKind::Noise => self.deviations.iter().map(|&d| Setting::Deviation(d)).collect(),
            SweepKind::LossCompare => vec![Setting::Default],
        }
    }
}

#[derive(Debug, Clone, Copy)]
enum Setting {
    Sigma(f64),
    Deviation(f64),
    Default,
}

impl Setting {
    fn label(&self, base_sigma: f64) -> String {
        match *self {
            Setting::Sigma(s) => format!("sigma={}", format_sig6(s)),
            Setting::Deviation(d) => format!("deviation={}", format_sig6(d)),
            Setting::Default => format!("sigma={}", format_sig6(base_sigma)),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepRow {
    pub setting: String,
    pub loss: LossKind,
    pub seed: u64,
    pub mae: f64,
    pub mse: f64,
}

/// Seed for perturbing training scene `index` in a run seeded with `seed`.
fn perturb_seed(seed: u64, index: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ (index as u64).wrapping_add(0x5851_F42D_4C95_7F2D)
}

/// Trains and evaluates one grid point.
pub fn run_point(
    bench: &Benchmark,
    train_cfg: &TrainConfig,
    deviation: f64,
) -> Result<(f64, f64)> {
    let train_set: Vec<Sample> = if deviation == 0.0 {
        bench.train.clone()
    } else {
        bench
            .train
            .iter()
            .enumerate()
            .map(|(k, s)| {
                perturb_annotations(&s.scene, deviation, perturb_seed(train_cfg.seed, k)).map(|scene| Sample {
                    input: s.input.clone(),
                    scene,
                })
            })
            .collect::<Result<_>>()?
    };
    let outcome = train_with(Exec::Sequential, &train_set, train_cfg)?;
    let report = evaluate_with(Exec::Sequential, &outcome.model, &bench.test)?;
    Ok((report.mae, report.mse))
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    run_sweep_with(Exec::default(), cfg)
}

/// Grid points run through `exec`; each point trains sequentially.
pub fn run_sweep_with(exec: Exec, cfg: &SweepConfig) -> Result<Vec<SweepRow>> {
    cfg.validate()?;
    let bench = cfg.benchmark.generate()?;
    let mut jobs = Vec::new();
    for setting in cfg.settings() {
        for &loss in &cfg.losses {
            for &seed in &cfg.seeds {
                jobs.push((setting, loss, seed));
            }
        }
    }
    let base_sigma = cfg.train.loss_cfg.sigma;
    exec.map(&jobs, |&(setting, loss, seed)| {
        let mut tc = cfg.train.clone();
        tc.loss = loss;
        tc.seed = seed;
        let deviation = match setting {
            Setting::Sigma(s) => {
                tc.loss_cfg.sigma = s;
                0.0
            }
            Setting::Deviation(d) => d,
            Setting::Default => 0.0,
        };
        run_point(&bench, &tc, deviation).map(|(mae, mse)| SweepRow {
            setting: setting.label(base_sigma),
            loss,
            seed,
            mae,
            mse,
        })
    })
    .into_iter()
    .collect()
}

/// Decimal rendering with at most six significant digits.
pub fn format_sig6(v: f64) -> String {
    let rounded: f64 = format!("{v:.5e}").parse().expect("valid float literal");
    format!("{rounded}")
}

pub fn format_csv(rows: &[SweepRow]) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.setting,
            r.loss,
            r.seed,
            format_sig6(r.mae),
            format_sig6(r.mse)
        ));
    }
    out
}

pub fn parse_csv(text: &str) -> Result<Vec<SweepRow>> {
    let mut lines = text.lines();
    match lines.next() {
        Some(h) if h == CSV_HEADER => {}
        other => {
            return Err(Error::Parse(format!("expected CSV header '{CSV_HEADER}', got {other:?}")))
        }
    }
    lines
        .filter(|l| !l.is_empty())
        .map(|line| {
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 5 {
                return Err(Error::Parse(format!("bad sweep row '{line}'")));
            }
            let num = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| Error::Parse(format!("bad number '{s}'")))
            };
            Ok(SweepRow {
                setting: f[0].to_string(),
                loss: f[1].parse()?,
                seed: f[2]
                    .parse()
                    .map_err(|_| Error::Parse(format!("bad seed '{}'", f[2])))?,
                mae: num(f[3])?,
                mse: num(f[4])?,
            })
        })
        .collect()
}

/// Mean MAE over seeds for each `(setting, loss)`, in first-seen order.
pub fn mean_mae(rows: &[SweepRow]) -> Vec<(String, LossKind, f64)> {
    let mut acc: Vec<(String, LossKind, f64, usize)> = Vec::new();
    for r in rows {
        match acc.iter_mut().find(|(s, l, _, _)| *s == r.setting && *l == r.loss) {
            Some(e) => {
                e.2 += r.mae;
                e.3 += 1;
            }
            None => acc.push((r.setting.clone(), r.loss, r.mae, 1)),
        }
    }
    acc.into_iter()
        .map(|(s, l, total, n)| (s, l, total / n as f64))
        .collect()
}

/// `(max - min) / min` of the given values.
pub fn relative_spread(values: &[f64]) -> f64 {
    let (lo, hi) = values
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| (lo.min(v), hi.max(v)));
    (hi - lo) / lo
}
