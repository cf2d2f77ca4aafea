//! Expected counts, the Bayesian losses, and the Gaussian-target baseline.
//!
//! Every loss returns its value together with the gradient with respect to
//! the estimated density, so a model only needs to backpropagate that grid.

use std::fmt;
use std::str::FromStr;

use crate::config::LossConfig;
use crate::error::{Error, Result};
use crate::exec::Exec;
use crate::posterior::PosteriorEngine;
use crate::scene::{cell_center, DensityGrid, Grid, Scene};
use crate::sum::compensated_sum;

/// Expected number of people attributed to each head, plus the background.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpectedCounts {
    pub per_head: Vec<f64>,
    /// Zero when background modelling is off.
    pub background: f64,
}

impl ExpectedCounts {
    pub fn total(&self) -> f64 {
        compensated_sum(&self.per_head) + self.background
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossValue {
    pub value: f64,
    /// d(loss) / d(density), one entry per cell.
    pub gradient: Grid,
}

/// Which training objective to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum LossKind {
    /// Pixel-wise squared error against a Gaussian-smoothed target.
    Baseline,
    /// Expected-count loss over head labels.
    Bayes,
    /// Expected-count loss with the background label.
    BayesPlus,
}

impl LossKind {
    pub const ALL: [LossKind; 3] = [LossKind::Baseline, LossKind::Bayes, LossKind::BayesPlus];

    pub fn name(&self) -> &'static str {
        match self {
            LossKind::Baseline => "baseline",
            LossKind::Bayes => "bayes",
            LossKind::BayesPlus => "bayes+",
        }
    }
}

impl fmt::Display for LossKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for LossKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "baseline" => Ok(LossKind::Baseline),
            "bayes" => Ok(LossKind::Bayes),
            "bayes+" | "bayes-plus" => Ok(LossKind::BayesPlus),
            other => Err(Error::Parse(format!("unknown loss '{other}'"))),
        }
    }
}

fn check_shape(scene: &Scene, density: &DensityGrid) -> Result<()> {
    density.check_shape(scene.shape())
}

/// Per-label sums of `posterior * density`, accumulated tile by tile.
fn label_sums(exec: Exec, engine: &PosteriorEngine<'_>, density: &[f64]) -> Vec<f64> {
    let labels = engine.labels();
    let partials = exec.map(&engine.tiles(), |tile| {
        let mut acc = vec![0.0; labels];
        let mut col = vec![0.0; labels];
        for m in tile.clone() {
            let dm = density[m];
            if dm == 0.0 {
                continue;
            }
            engine.column_into(m, &mut col);
            for (a, p) in acc.iter_mut().zip(&col) {
                *a += p * dm;
            }
        }
        acc
    });
    let mut totals = vec![0.0; labels];
    for part in &partials {
        for (t, p) in totals.iter_mut().zip(part) {
            *t += p;
        }
    }
    totals
}

pub fn expected_counts(scene: &Scene, density: &DensityGrid, cfg: &LossConfig) -> Result<ExpectedCounts> {
    expected_counts_with(Exec::default(), scene, density, cfg)
}

pub fn expected_counts_with(
    exec: Exec,
    scene: &Scene,
    density: &DensityGrid,
    cfg: &LossConfig,
) -> Result<ExpectedCounts> {
    check_shape(scene, density)?;
    let engine = PosteriorEngine::new(scene, cfg)?;
    Ok(split_counts(&engine, label_sums(exec, &engine, density.values())))
}

fn split_counts(engine: &PosteriorEngine<'_>, mut sums: Vec<f64>) -> ExpectedCounts {
    let background = if engine.has_background() {
        sums.pop().unwrap_or(0.0)
    } else {
        0.0
    };
    ExpectedCounts {
        per_head: sums,
        background,
    }
}

/// Expected-count loss. Background modelling follows `cfg.background`.
///
/// For a scene without annotations the whole density is pushed to zero.
pub fn bayes_loss(scene: &Scene, density: &DensityGrid, cfg: &LossConfig) -> Result<LossValue> {
    bayes_loss_with(Exec::default(), scene, density, cfg)
}

pub fn bayes_loss_with(
    exec: Exec,
    scene: &Scene,
    density: &DensityGrid,
    cfg: &LossConfig,
) -> Result<LossValue> {
    check_shape(scene, density)?;
    cfg.validate()?;
    let f = cfg.distance;
    let (h, w) = scene.shape();

    if scene.count() == 0 {
        let total = total_count(density);
        let slope = -f.slope(-total);
        return Ok(LossValue {
            value: f.eval(-total),
            gradient: Grid::filled(h, w, slope),
        });
    }

    let engine = PosteriorEngine::new(scene, cfg)?;
    let sums = label_sums(exec, &engine, density.values());

    // Residual per label: target minus expected count (target 1 per head, 0 for background).
    let heads = scene.count();
    let residuals: Vec<f64> = sums
        .iter()
        .enumerate()
        .map(|(l, e)| if l < heads { 1.0 - e } else { -e })
        .collect();
    let value: f64 = residuals.iter().map(|&r| f.eval(r)).sum();
    let coef: Vec<f64> = residuals.iter().map(|&r| -f.slope(r)).collect();

    let labels = engine.labels();
    let mut grad = vec![0.0; engine.cells()];
    exec.for_each_chunk(&mut grad, crate::exec::MAX_TILE, |start, out| {
        let mut col = vec![0.0; labels];
        for (k, g) in out.iter_mut().enumerate() {
            engine.column_into(start + k, &mut col);
            *g = col.iter().zip(&coef).map(|(p, c)| p * c).sum();
        }
    });

    Ok(LossValue {
        value,
        gradient: Grid::new(h, w, grad)?,
    })
}

/// Sum of the density map, compensated.
pub fn total_count(density: &DensityGrid) -> f64 {
    compensated_sum(density.values())
}

/// Kernel used to spread each head into a target density.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Kernel {
    Fixed { sigma: f64 },
    /// `sigma_n = beta * mean distance to the nearest ADAPTIVE_NEIGHBORS other heads`.
    Adaptive { beta: f64 },
}

pub const ADAPTIVE_NEIGHBORS: usize = 3;
pub const ADAPTIVE_MIN_SIGMA: f64 = 0.5;

impl Kernel {
    fn widths(&self, scene: &Scene) -> Result<Vec<f64>> {
        match *self {
            Kernel::Fixed { sigma } => {
                if !(sigma.is_finite() && sigma > 0.0) {
                    return Err(Error::Invalid(format!("sigma must be > 0, got {sigma}")));
                }
                Ok(vec![sigma; scene.count()])
            }
            Kernel::Adaptive { beta } => {
                if !(beta.is_finite() && beta > 0.0) {
                    return Err(Error::Invalid(format!("beta must be > 0, got {beta}")));
                }
                let upper = (scene.shorter_side() as f64 / 4.0).max(ADAPTIVE_MIN_SIGMA);
                let pts = scene.points();
                Ok(pts
                    .iter()
                    .enumerate()
                    .map(|(n, p)| {
                        let mut d: Vec<f64> = pts
                            .iter()
                            .enumerate()
                            .filter(|&(k, _)| k != n)
                            .map(|(_, q)| p.dist(q))
                            .collect();
                        if d.is_empty() {
                            return upper;
                        }
                        d.sort_by(f64::total_cmp);
                        d.truncate(ADAPTIVE_NEIGHBORS);
                        let mean = d.iter().sum::<f64>() / d.len() as f64;
                        (beta * mean).clamp(ADAPTIVE_MIN_SIGMA, upper)
                    })
                    .collect())
            }
        }
    }
}

/// Gaussian target density; each head's discrete kernel carries unit mass.
pub fn baseline_density(scene: &Scene, kernel: Kernel) -> Result<DensityGrid> {
    let (h, w) = scene.shape();
    let widths = kernel.widths(scene)?;
    let mut values = vec![0.0; h * w];
    let mut bump = vec![0.0; h * w];
    for (z, sigma) in scene.points().iter().zip(widths) {
        let inv = 1.0 / (2.0 * sigma * sigma);
        let mut peak = f64::NEG_INFINITY;
        for (m, b) in bump.iter_mut().enumerate() {
            *b = -cell_center(m / w, m % w).dist_sq(z) * inv;
            peak = peak.max(*b);
        }
        for b in bump.iter_mut() {
            *b = (*b - peak).exp();
        }
        let mass = compensated_sum(&bump);
        for (v, b) in values.iter_mut().zip(&bump) {
            *v += b / mass;
        }
    }
    DensityGrid::new(h, w, values)?.with_stride(scene.stride())
}

/// Sum of squared per-cell differences.
pub fn baseline_loss(density_gt: &DensityGrid, density_est: &DensityGrid) -> Result<LossValue> {
    density_est.check_shape(density_gt.shape())?;
    let (h, w) = density_gt.shape();
    let diff: Vec<f64> = density_est
        .values()
        .iter()
        .zip(density_gt.values())
        .map(|(e, g)| e - g)
        .collect();
    let value = diff.iter().map(|d| d * d).sum();
    let gradient = diff.iter().map(|d| 2.0 * d).collect();
    Ok(LossValue {
        value,
        gradient: Grid::new(h, w, gradient)?,
    })
}
