//! Expected-count ("Bayesian") loss for density estimation from point
//! annotations, with the Gaussian-target baseline, a small trainable
//! estimator, and a synthetic benchmark.

pub mod config;
pub mod error;
pub mod exec;
pub mod gradcheck;
pub mod io;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod posterior;
pub mod scene;
pub mod sum;
pub mod sweep;
pub mod synth;
pub mod train;

pub use config::{Distance, LossConfig, Margin};
pub use error::{Error, Result};
pub use exec::Exec;
pub use loss::{
    baseline_density, baseline_loss, bayes_loss, expected_counts, total_count, ExpectedCounts,
    Kernel, LossKind, LossValue,
};
pub use posterior::{dummy_background_point, entropy_map, label_logits, posterior, PosteriorBlock};
pub use scene::{cell_center, DensityGrid, Grid, Point2, Scene};
pub use metrics::{metrics, MetricsReport};
pub use model::ToyModel;
pub use synth::{generate_scene, perturb_annotations, Benchmark, BenchmarkSpec, SynthSpec};
pub use train::{evaluate, train, Sample, TrainConfig, TrainOutcome};
pub use sweep::{run_sweep, SweepConfig, SweepKind, SweepRow};
