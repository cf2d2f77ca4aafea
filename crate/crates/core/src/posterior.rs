//! Label likelihoods and posteriors for every grid cell.
//!
//! Each head contributes a Gaussian log-likelihood `-|x - z|^2 / (2 sigma^2)`.
//! With background modelling an extra label is appended whose log-likelihood
//! is `-(d - r)^2 / (2 sigma^2)`, `r` being the distance to the nearest head.
//! The Gaussian normalizer is shared by all labels and is left out.
//!
//! Posteriors are produced one tile of pixels at a time; nothing of size
//! `labels x cells` is ever held in memory.

use std::ops::Range;

use crate::config::{LossConfig, TRUNCATION_LOGIT};
use crate::error::{Error, Result};
use crate::exec::{tiles, Exec, MAX_TILE};
use crate::scene::{flat_cell_center, Grid, Point2, Scene};

/// Dummy background point for `pixel`: the nearest head pushed out by `d`
/// along the head-to-pixel direction.
pub fn dummy_background_point(pixel: Point2, scene: &Scene, d: f64) -> Result<Point2> {
    let (n, r) = scene.nearest_head(&pixel).ok_or(Error::EmptyScene)?;
    if r == 0.0 {
        return Err(Error::DegenerateDirection);
    }
    let z = scene.points()[n];
    Ok(Point2::new(
        z.row + d * (pixel.row - z.row) / r,
        z.col + d * (pixel.col - z.col) / r,
    ))
}

/// Unnormalized log-likelihoods of `pixel` under each label (heads, then background).
pub fn label_logits(pixel: Point2, scene: &Scene, cfg: &LossConfig) -> Result<Vec<f64>> {
    let engine = PosteriorEngine::new(scene, cfg)?;
    let mut out = vec![0.0; engine.labels()];
    engine.logits_into(&pixel, &mut out);
    Ok(out)
}

/// Posterior probabilities for a contiguous run of pixels.
#[derive(Debug, Clone, PartialEq)]
pub struct PosteriorBlock {
    pixels: Range<usize>,
    labels: usize,
    /// Pixel-major: the column for pixel `m` is `probs[(m - start) * labels..][..labels]`.
    probs: Vec<f64>,
}

impl PosteriorBlock {
    pub fn pixels(&self) -> Range<usize> {
        self.pixels.clone()
    }

    pub fn labels(&self) -> usize {
        self.labels
    }

    /// Label distribution at grid pixel `m`.
    pub fn column(&self, m: usize) -> &[f64] {
        let k = m - self.pixels.start;
        &self.probs[k * self.labels..(k + 1) * self.labels]
    }

    pub fn prob(&self, label: usize, m: usize) -> f64 {
        self.column(m)[label]
    }

    pub fn columns(&self) -> impl Iterator<Item = (usize, &[f64])> {
        self.pixels.clone().zip(self.probs.chunks_exact(self.labels))
    }
}

/// Posterior block for pixels `tile` (row-major flat indices).
pub fn posterior(scene: &Scene, cfg: &LossConfig, tile: Range<usize>) -> Result<PosteriorBlock> {
    if tile.end > scene.cells() || tile.start > tile.end {
        return Err(Error::Invalid(format!(
            "tile {tile:?} outside grid of {} cells",
            scene.cells()
        )));
    }
    PosteriorEngine::new(scene, cfg).map(|e| e.block(tile))
}

/// Per-pixel Shannon entropy of the label posterior (natural log).
pub fn entropy_map(scene: &Scene, cfg: &LossConfig) -> Result<Grid> {
    entropy_map_with(Exec::default(), scene, cfg)
}

pub fn entropy_map_with(exec: Exec, scene: &Scene, cfg: &LossConfig) -> Result<Grid> {
    let engine = PosteriorEngine::new(scene, cfg)?;
    let ceiling = (engine.labels() as f64).ln();
    let mut values = vec![0.0; scene.cells()];
    exec.for_each_chunk(&mut values, MAX_TILE, |start, out| {
        let block = engine.block(start..start + out.len());
        for ((_, col), slot) in block.columns().zip(out.iter_mut()) {
            let h: f64 = col
                .iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| -p * p.ln())
                .sum();
            // Rounding can leave a few ulps outside the exact bounds.
            *slot = h.clamp(0.0, ceiling);
        }
    });
    Grid::new(scene.height(), scene.width(), values)
}

/// Precomputed per-scene state for evaluating posteriors.
pub(crate) struct PosteriorEngine<'a> {
    heads: &'a [Point2],
    width: usize,
    cells: usize,
    inv_two_var: f64,
    margin: Option<f64>,
    log_priors: Option<Vec<f64>>,
    truncate: bool,
}

impl<'a> PosteriorEngine<'a> {
    pub(crate) fn new(scene: &'a Scene, cfg: &LossConfig) -> Result<Self> {
        cfg.validate()?;
        if scene.count() == 0 {
            return Err(Error::EmptyScene);
        }
        Ok(Self {
            heads: scene.points(),
            width: scene.width(),
            cells: scene.cells(),
            inv_two_var: 1.0 / (2.0 * cfg.sigma * cfg.sigma),
            margin: cfg.background.then(|| cfg.margin.resolve(scene)),
            log_priors: cfg.log_priors(scene)?,
            truncate: cfg.truncate,
        })
    }

    pub(crate) fn labels(&self) -> usize {
        self.heads.len() + usize::from(self.margin.is_some())
    }

    pub(crate) fn cells(&self) -> usize {
        self.cells
    }

    pub(crate) fn has_background(&self) -> bool {
        self.margin.is_some()
    }

    fn logits_into(&self, x: &Point2, out: &mut [f64]) {
        let mut nearest_sq = f64::INFINITY;
        for (slot, z) in out.iter_mut().zip(self.heads) {
            let d2 = x.dist_sq(z);
            nearest_sq = nearest_sq.min(d2);
            *slot = -d2 * self.inv_two_var;
        }
        if let Some(d) = self.margin {
            let gap = d - nearest_sq.sqrt();
            out[self.heads.len()] = -gap * gap * self.inv_two_var;
        }
    }

    /// Writes the posterior column of pixel `m` into `out`.
    pub(crate) fn column_into(&self, m: usize, out: &mut [f64]) {
        self.logits_into(&flat_cell_center(m, self.width), out);
        if let Some(lp) = &self.log_priors {
            for (l, p) in out.iter_mut().zip(lp) {
                *l += p;
            }
        }
        let max = out.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut total = 0.0;
        for l in out.iter_mut() {
            let shifted = *l - max;
            *l = if self.truncate && shifted < TRUNCATION_LOGIT {
                0.0
            } else {
                shifted.exp()
            };
            total += *l;
        }
        let inv = 1.0 / total;
        for p in out.iter_mut() {
            *p *= inv;
        }
    }

    pub(crate) fn block(&self, tile: Range<usize>) -> PosteriorBlock {
        let labels = self.labels();
        let mut probs = vec![0.0; tile.len() * labels];
        for (m, col) in tile.clone().zip(probs.chunks_exact_mut(labels)) {
            self.column_into(m, col);
        }
        PosteriorBlock {
            pixels: tile,
            labels,
            probs,
        }
    }

    pub(crate) fn tiles(&self) -> Vec<Range<usize>> {
        tiles(self.cells, MAX_TILE)
    }
}
