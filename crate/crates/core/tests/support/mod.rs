//! Naive reference implementations and random instance generators.
//!
//! The oracle keeps the full Gaussian normalizer, builds the dummy
//! background point explicitly, and materializes every posterior column.

#![allow(dead_code)]

use bayescount::{DensityGrid, Grid, LossConfig, Margin, Point2, Scene};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn gauss_log_pdf(x: (f64, f64), mu: (f64, f64), sigma: f64) -> f64 {
    let d2 = (x.0 - mu.0).powi(2) + (x.1 - mu.1).powi(2);
    -d2 / (2.0 * sigma * sigma) - (2.0 * std::f64::consts::PI * sigma * sigma).ln()
}

/// Posterior columns for every cell, `[cell][label]`, heads first.
pub fn oracle_posterior(scene: &Scene, sigma: f64, margin: Option<f64>) -> Vec<Vec<f64>> {
    let heads: Vec<(f64, f64)> = scene.points().iter().map(|p| (p.row, p.col)).collect();
    let mut out = Vec::with_capacity(scene.cells());
    for i in 0..scene.height() {
        for j in 0..scene.width() {
            let x = (i as f64 + 0.5, j as f64 + 0.5);
            let mut ll: Vec<f64> = heads.iter().map(|&z| gauss_log_pdf(x, z, sigma)).collect();
            if let Some(d) = margin {
                let mut best = 0;
                for n in 1..heads.len() {
                    let dn = (x.0 - heads[n].0).hypot(x.1 - heads[n].1);
                    let db = (x.0 - heads[best].0).hypot(x.1 - heads[best].1);
                    if dn < db {
                        best = n;
                    }
                }
                let z = heads[best];
                let r = (x.0 - z.0).hypot(x.1 - z.1);
                // On a head every direction is equally good; only |x - dummy| = d matters.
                let (u0, u1) = if r > 0.0 { ((x.0 - z.0) / r, (x.1 - z.1) / r) } else { (1.0, 0.0) };
                let dummy = (z.0 + d * u0, z.1 + d * u1);
                ll.push(gauss_log_pdf(x, dummy, sigma));
            }
            let top = ll.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let norm: f64 = ll.iter().map(|l| (l - top).exp()).sum();
            out.push(ll.iter().map(|l| (l - top).exp() / norm).collect());
        }
    }
    out
}

/// Per-label expected counts, heads first.
pub fn oracle_counts(scene: &Scene, density: &[f64], sigma: f64, margin: Option<f64>) -> Vec<f64> {
    let post = oracle_posterior(scene, sigma, margin);
    let labels = post[0].len();
    (0..labels)
        .map(|l| post.iter().zip(density).map(|(col, d)| col[l] * d).sum())
        .collect()
}

/// Expected-count loss with absolute residuals.
pub fn oracle_bayes_loss(scene: &Scene, density: &[f64], sigma: f64, margin: Option<f64>) -> f64 {
    if scene.count() == 0 {
        return density.iter().sum::<f64>().abs();
    }
    let counts = oracle_counts(scene, density, sigma, margin);
    counts
        .iter()
        .enumerate()
        .map(|(l, e)| if l < scene.count() { (1.0 - e).abs() } else { e.abs() })
        .sum()
}

pub fn random_scene(rng: &mut ChaCha8Rng, max_side: usize, max_heads: usize, min_heads: usize) -> Scene {
    let h = rng.gen_range(1..=max_side);
    let w = rng.gen_range(1..=max_side);
    let n = rng.gen_range(min_heads..=max_heads);
    let pts = (0..n)
        .map(|_| Point2::new(rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64)))
        .collect();
    Scene::new(h, w, 1, pts).unwrap()
}

pub fn random_values(rng: &mut ChaCha8Rng, len: usize, hi: f64) -> Vec<f64> {
    (0..len).map(|_| rng.gen_range(0.0..hi)).collect()
}

pub fn random_density(rng: &mut ChaCha8Rng, scene: &Scene, hi: f64) -> DensityGrid {
    let v = random_values(rng, scene.cells(), hi);
    DensityGrid::new(scene.height(), scene.width(), v).unwrap()
}

pub fn random_grid(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Grid {
    Grid::new(h, w, random_values(rng, h * w, 1.0)).unwrap()
}

/// A sigma spanning sharp to very flat posteriors.
pub fn random_sigma(rng: &mut ChaCha8Rng) -> f64 {
    10f64.powf(rng.gen_range(-0.5..1.5))
}

pub fn random_cfg(rng: &mut ChaCha8Rng, background: bool) -> LossConfig {
    let cfg = LossConfig::new(random_sigma(rng));
    if background {
        cfg.with_background(Margin::Fraction(rng.gen_range(0.05..0.5)))
    } else {
        cfg
    }
}

pub fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

use bayescount::gradcheck::{central_differences, relative_error};
use bayescount::train::evaluate_loss;
use bayescount::{expected_counts, LossKind, ToyModel};

#[derive(Debug, Default, Clone, Copy)]
pub struct CheckStats {
    pub worst: f64,
    pub checked: usize,
    pub skipped: usize,
}

impl CheckStats {
    fn merge(&mut self, err: Option<f64>) {
        match err {
            Some(e) => {
                self.worst = self.worst.max(e);
                self.checked += 1;
            }
            None => self.skipped += 1,
        }
    }
}

/// Residual signs of the expected-count loss; a change marks an l1 kink.
fn residual_signs(kind: LossKind, scene: &Scene, density: &DensityGrid, cfg: &LossConfig) -> Vec<i8> {
    if kind == LossKind::Baseline {
        return Vec::new();
    }
    if scene.count() == 0 {
        return vec![(-bayescount::total_count(density)).signum() as i8];
    }
    let mut cfg = cfg.clone();
    cfg.background = kind == LossKind::BayesPlus;
    let e = expected_counts(scene, density, &cfg).unwrap();
    let mut signs: Vec<i8> = e.per_head.iter().map(|c| sign(1.0 - c)).collect();
    if cfg.background {
        signs.push(sign(-e.background));
    }
    signs
}

fn sign(v: f64) -> i8 {
    if v > 0.0 {
        1
    } else if v < 0.0 {
        -1
    } else {
        0
    }
}

fn density_of(scene: &Scene, v: &[f64]) -> DensityGrid {
    DensityGrid::new(scene.height(), scene.width(), v.to_vec()).unwrap()
}

/// Analytic d(loss)/d(density) against central differences on random instances.
pub fn density_gradcheck(kind: LossKind, squared: bool, seed: u64, instances: usize) -> CheckStats {
    const STEP: f64 = 1e-4;
    const FLOOR: f64 = 1e-3;
    let mut r = rng(seed);
    let mut stats = CheckStats::default();
    for _ in 0..instances {
        let scene = random_scene(&mut r, 10, 6, 0);
        let mut cfg = random_cfg(&mut r, kind == LossKind::BayesPlus);
        if squared {
            cfg = cfg.with_distance(bayescount::Distance::Squared);
        }
        let x: Vec<f64> = (0..scene.cells()).map(|_| r.gen_range(0.01..0.5)).collect();
        let eval = |v: &[f64]| evaluate_loss(kind, &scene, &density_of(&scene, v), None, &cfg).unwrap().value;
        let analytic = evaluate_loss(kind, &scene, &density_of(&scene, &x), None, &cfg).unwrap();
        let coords: Vec<usize> = (0..x.len()).collect();
        let numeric = central_differences(eval, &x, &coords, STEP);
        for &k in &coords {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo[k] -= STEP;
            hi[k] += STEP;
            let s_lo = residual_signs(kind, &scene, &density_of(&scene, &lo), &cfg);
            let s_hi = residual_signs(kind, &scene, &density_of(&scene, &hi), &cfg);
            let smooth = s_lo == s_hi && !s_lo.contains(&0);
            stats.merge(smooth.then(|| relative_error(analytic.gradient.values()[k], numeric[k], FLOOR)));
        }
    }
    stats
}

/// A model with random weights whose output is not stuck near zero.
pub fn random_model(r: &mut ChaCha8Rng) -> ToyModel {
    let mut m = ToyModel::init(r.gen());
    let bias = bayescount::model::Layout::HEAD_B.start;
    m.params_mut()[bias] = r.gen_range(-3.0..0.5);
    m
}

/// Analytic d(loss(forward(params)))/d(params) against central differences.
pub fn model_gradcheck(kind: LossKind, seed: u64, instances: usize) -> CheckStats {
    const STEP: f64 = 1e-6;
    const FLOOR: f64 = 1e-3;
    let mut r = rng(seed);
    let mut stats = CheckStats::default();
    for _ in 0..instances {
        let scene = {
            let n = r.gen_range(0..=5);
            let pts = (0..n).map(|_| Point2::new(r.gen_range(0.0..8.0), r.gen_range(0.0..8.0))).collect();
            Scene::new(8, 8, 1, pts).unwrap()
        };
        let cfg = random_cfg(&mut r, kind == LossKind::BayesPlus);
        let input = random_grid(&mut r, 8, 8);
        let model = random_model(&mut r);
        let loss_at = |p: &[f64]| -> (f64, Vec<bool>, Vec<i8>) {
            let m = ToyModel::from_params(p.to_vec()).unwrap();
            let (d, cache) = m.forward_cached(&input).unwrap();
            let v = evaluate_loss(kind, &scene, &d, None, &cfg).unwrap().value;
            (v, cache.active_mask(), residual_signs(kind, &scene, &d, &cfg))
        };
        let (density, cache) = model.forward_cached(&input).unwrap();
        let upstream = evaluate_loss(kind, &scene, &density, None, &cfg).unwrap().gradient;
        let analytic = model.backward_cached(&cache, &input, &upstream).unwrap();

        let x = model.params().to_vec();
        let coords: Vec<usize> = (0..x.len()).collect();
        let numeric = central_differences(|p| loss_at(p).0, &x, &coords, STEP);
        for &k in &coords {
            let mut lo = x.clone();
            let mut hi = x.clone();
            lo[k] -= STEP;
            hi[k] += STEP;
            let (_, mask_lo, sign_lo) = loss_at(&lo);
            let (_, mask_hi, sign_hi) = loss_at(&hi);
            let smooth = mask_lo == mask_hi && sign_lo == sign_hi && !sign_lo.contains(&0);
            stats.merge(smooth.then(|| relative_error(analytic[k], numeric[k], FLOOR)));
        }
    }
    stats
}
