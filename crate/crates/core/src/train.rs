//! Mini-batch training and evaluation of [`ToyModel`].
//!
//! Each image's loss is summed over its heads (or cells, for the baseline);
//! a batch step averages the per-image gradients.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::LossConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::loss::{baseline_density, baseline_loss, bayes_loss_with, total_count, Kernel, LossKind, LossValue};
use crate::metrics::{metrics, MetricsReport};
use crate::model::{Layout, ToyModel};
use crate::optim::Adam;
use crate::scene::{DensityGrid, Grid, Scene};

/// One training or test image with its annotations.
#[derive(Debug, Clone, PartialEq)]
pub struct Sample {
    pub input: Grid,
    pub scene: Scene,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub loss: LossKind,
    pub loss_cfg: LossConfig,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch_size: 4,
            seed: 7,
            loss: LossKind::BayesPlus,
            loss_cfg: LossConfig::default(),
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr.is_finite() && self.lr > 0.0) {
            return Err(Error::Invalid(format!("learning rate must be > 0, got {}", self.lr)));
        }
        if self.batch_size == 0 {
            return Err(Error::Invalid("batch size must be positive".into()));
        }
        self.loss_cfg.validate()
    }

    /// Loss configuration with the background flag implied by the loss kind.
    pub fn effective_loss_cfg(&self) -> LossConfig {
        let mut cfg = self.loss_cfg.clone();
        cfg.background = self.loss == LossKind::BayesPlus;
        cfg
    }
}

/// Evaluates one loss kind on a predicted density.
///
/// `target` must hold the baseline density when `kind` is [`LossKind::Baseline`].
pub fn evaluate_loss(
    kind: LossKind,
    scene: &Scene,
    density: &DensityGrid,
    target: Option<&DensityGrid>,
    cfg: &LossConfig,
) -> Result<LossValue> {
    match kind {
        LossKind::Baseline => {
            let owned;
            let gt = match target {
                Some(t) => t,
                None => {
                    owned = baseline_density(scene, Kernel::Fixed { sigma: cfg.sigma })?;
                    &owned
                }
            };
            baseline_loss(gt, density)
        }
        LossKind::Bayes | LossKind::BayesPlus => {
            let mut cfg = cfg.clone();
            cfg.background = kind == LossKind::BayesPlus;
            bayes_loss_with(Exec::Sequential, scene, density, &cfg)
        }
    }
}

/// Loss value and parameter gradient of one sample.
pub fn sample_gradient(
    model: &ToyModel,
    sample: &Sample,
    kind: LossKind,
    target: Option<&DensityGrid>,
    cfg: &LossConfig,
) -> Result<(f64, Vec<f64>)> {
    let (density, cache) = model.forward_cached(&sample.input)?;
    let loss = evaluate_loss(kind, &sample.scene, &density, target, cfg)?;
    let grad = model.backward_cached(&cache, &sample.input, &loss.gradient)?;
    Ok((loss.value, grad))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: ToyModel,
    /// Mean per-image training loss of each epoch.
    pub trace: Vec<f64>,
}

pub fn train(dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_with(Exec::default(), dataset, cfg)
}

pub fn train_with(exec: Exec, dataset: &[Sample], cfg: &TrainConfig) -> Result<TrainOutcome> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    cfg.validate()?;
    for s in dataset {
        s.input.check_shape(s.scene.shape())?;
    }
    let loss_cfg = cfg.effective_loss_cfg();
    let targets: Vec<Option<DensityGrid>> = if cfg.loss == LossKind::Baseline {
        exec.map(dataset, |s| {
            baseline_density(&s.scene, Kernel::Fixed { sigma: loss_cfg.sigma }).map(Some)
        })
        .into_iter()
        .collect::<Result<_>>()?
    } else {
        vec![None; dataset.len()]
    };

    let mut model = ToyModel::init(cfg.seed);
    let mut opt = Adam::new(Layout::LEN, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(1);
    let mut order: Vec<usize> = (0..dataset.len()).collect();
    let mut trace = Vec::with_capacity(cfg.epochs);

    for _ in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let results = exec.map(batch, |&k| {
                sample_gradient(&model, &dataset[k], cfg.loss, targets[k].as_ref(), &loss_cfg)
            });
            let mut grad = vec![0.0; Layout::LEN];
            for r in results {
                let (value, g) = r?;
                epoch_loss += value;
                for (a, b) in grad.iter_mut().zip(&g) {
                    *a += b;
                }
            }
            let scale = 1.0 / batch.len() as f64;
            grad.iter_mut().for_each(|g| *g *= scale);
            opt.step(model.params_mut(), &grad);
        }
        trace.push(epoch_loss / dataset.len() as f64);
        if model.params().iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("training diverged to non-finite parameters".into()));
        }
    }
    Ok(TrainOutcome { model, trace })
}

/// Count accuracy of `model` on `samples`.
pub fn evaluate(model: &ToyModel, samples: &[Sample]) -> Result<MetricsReport> {
    evaluate_with(Exec::default(), model, samples)
}

pub fn evaluate_with(exec: Exec, model: &ToyModel, samples: &[Sample]) -> Result<MetricsReport> {
    let pairs = exec
        .map(samples, |s| {
            model
                .forward(&s.input)
                .map(|d| (s.scene.count() as f64, total_count(&d)))
        })
        .into_iter()
        .collect::<Result<Vec<_>>>()?;
    metrics(pairs)
}
