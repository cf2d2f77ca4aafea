//! A three-layer convolutional density estimator with hand-written backprop.
//!
//! `input -> conv3x3(1->8) -> relu -> conv3x3(8->8) -> relu -> conv1x1(8->1) -> softplus`
//!
//! Convolutions use zero "same" padding and stride 1, so the output grid has
//! the input's shape. Parameters live in one flat vector; [`Layout`] names
//! the slices.

use std::io::{BufRead, BufReader, Read};
use std::ops::Range;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::{DensityGrid, Grid};

pub const HIDDEN: usize = 8;
const K: usize = 3;
const TAPS: usize = K * K;

/// Initial head bias; puts the untrained output near softplus(-4) ~ 0.018 per cell.
pub const HEAD_BIAS_INIT: f64 = -4.0;

/// Offsets of each parameter tensor inside the flat vector.
pub struct Layout;

impl Layout {
    pub const CONV1_W: Range<usize> = 0..HIDDEN * TAPS;
    pub const CONV1_B: Range<usize> = Self::CONV1_W.end..Self::CONV1_W.end + HIDDEN;
    pub const CONV2_W: Range<usize> = Self::CONV1_B.end..Self::CONV1_B.end + HIDDEN * HIDDEN * TAPS;
    pub const CONV2_B: Range<usize> = Self::CONV2_W.end..Self::CONV2_W.end + HIDDEN;
    pub const HEAD_W: Range<usize> = Self::CONV2_B.end..Self::CONV2_B.end + HIDDEN;
    pub const HEAD_B: Range<usize> = Self::HEAD_W.end..Self::HEAD_W.end + 1;
    pub const LEN: usize = Self::HEAD_B.end;

    /// Name, shape, and range of every tensor in storage order.
    pub fn tensors() -> [(&'static str, &'static [usize], Range<usize>); 6] {
        [
            ("conv1.weight", &[HIDDEN, 1, K, K], Self::CONV1_W),
            ("conv1.bias", &[HIDDEN], Self::CONV1_B),
            ("conv2.weight", &[HIDDEN, HIDDEN, K, K], Self::CONV2_W),
            ("conv2.bias", &[HIDDEN], Self::CONV2_B),
            ("head.weight", &[1, HIDDEN, 1, 1], Self::HEAD_W),
            ("head.bias", &[1], Self::HEAD_B),
        ]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ToyModel {
    params: Vec<f64>,
}

/// Intermediate activations kept for the backward pass.
#[derive(Debug, Clone)]
pub struct ForwardCache {
    height: usize,
    width: usize,
    h1: Vec<f64>,
    h2: Vec<f64>,
    logits: Vec<f64>,
}

impl ForwardCache {
    /// Which hidden units are on; equal masks mean the same linear region.
    pub fn active_mask(&self) -> Vec<bool> {
        self.h1.iter().chain(&self.h2).map(|&v| v > 0.0).collect()
    }
}

fn softplus(z: f64) -> f64 {
    z.max(0.0) + (-z.abs()).exp().ln_1p()
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Valid index span `[lo, hi)` for an axis of length `n` shifted by `d` in {-1, 0, 1}.
#[inline]
fn span(n: usize, d: isize) -> (usize, usize) {
    match d {
        -1 => (1, n),
        1 => (0, n - 1),
        _ => (0, n),
    }
}

/// `out[oc] = bias[oc] + sum_ic w[oc, ic] * input[ic]`, 3x3 same padding.
fn conv3x3(input: &[f64], cin: usize, h: usize, w: usize, weights: &[f64], bias: &[f64], out: &mut [f64]) {
    let plane = h * w;
    for (oc, (dst, &b)) in out.chunks_exact_mut(plane).zip(bias).enumerate() {
        dst.fill(b);
        for ic in 0..cin {
            let src = &input[ic * plane..(ic + 1) * plane];
            let taps = &weights[(oc * cin + ic) * TAPS..][..TAPS];
            for (t, &wt) in taps.iter().enumerate() {
                let dy = (t / K) as isize - 1;
                let dx = (t % K) as isize - 1;
                let (y0, y1) = span(h, dy);
                let (x0, x1) = span(w, dx);
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let o = &mut dst[y * w + x0..y * w + x1];
                    let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    for (a, &v) in o.iter_mut().zip(s) {
                        *a += wt * v;
                    }
                }
            }
        }
    }
}

/// Accumulates weight, bias, and (optionally) input gradients of `conv3x3`.
#[allow(clippy::too_many_arguments)]
fn conv3x3_backward(
    input: &[f64],
    cin: usize,
    h: usize,
    w: usize,
    weights: &[f64],
    dout: &[f64],
    dweights: &mut [f64],
    dbias: &mut [f64],
    mut dinput: Option<&mut [f64]>,
) {
    let plane = h * w;
    for (oc, g) in dout.chunks_exact(plane).enumerate() {
        dbias[oc] += g.iter().sum::<f64>();
        for ic in 0..cin {
            let src = &input[ic * plane..(ic + 1) * plane];
            let base = (oc * cin + ic) * TAPS;
            for t in 0..TAPS {
                let dy = (t / K) as isize - 1;
                let dx = (t % K) as isize - 1;
                let (y0, y1) = span(h, dy);
                let (x0, x1) = span(w, dx);
                let wt = weights[base + t];
                let mut acc = 0.0;
                for y in y0..y1 {
                    let sy = (y as isize + dy) as usize;
                    let sx0 = (x0 as isize + dx) as usize;
                    let go = &g[y * w + x0..y * w + x1];
                    let s = &src[sy * w + sx0..sy * w + sx0 + (x1 - x0)];
                    acc += go.iter().zip(s).map(|(a, b)| a * b).sum::<f64>();
                    if let Some(din) = dinput.as_deref_mut() {
                        let d = &mut din[ic * plane + sy * w + sx0..][..x1 - x0];
                        for (di, &gv) in d.iter_mut().zip(go) {
                            *di += wt * gv;
                        }
                    }
                }
                dweights[base + t] += acc;
            }
        }
    }
}

impl ToyModel {
    /// Weights uniform in `±sqrt(6 / fan_in)`, biases zero except the head bias.
    pub fn init(seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = vec![0.0; Layout::LEN];
        for (range, fan_in) in [
            (Layout::CONV1_W, TAPS),
            (Layout::CONV2_W, HIDDEN * TAPS),
            (Layout::HEAD_W, HIDDEN),
        ] {
            let limit = (6.0 / fan_in as f64).sqrt();
            for p in &mut params[range] {
                *p = rng.gen_range(-limit..limit);
            }
        }
        params[Layout::HEAD_B.start] = HEAD_BIAS_INIT;
        Self { params }
    }

    pub fn from_params(params: Vec<f64>) -> Result<Self> {
        if params.len() != Layout::LEN {
            return Err(Error::Invalid(format!(
                "model needs {} parameters, got {}",
                Layout::LEN,
                params.len()
            )));
        }
        if params.iter().any(|p| !p.is_finite()) {
            return Err(Error::Invalid("model parameters must be finite".into()));
        }
        Ok(Self { params })
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn forward(&self, input: &Grid) -> Result<DensityGrid> {
        self.forward_cached(input).map(|(d, _)| d)
    }

    pub fn forward_cached(&self, input: &Grid) -> Result<(DensityGrid, ForwardCache)> {
        let (h, w) = input.shape();
        if h < K || w < K {
            return Err(Error::Invalid(format!("input must be at least 3x3, got {h}x{w}")));
        }
        let plane = h * w;
        let p = &self.params;

        let mut h1 = vec![0.0; HIDDEN * plane];
        conv3x3(input.values(), 1, h, w, &p[Layout::CONV1_W], &p[Layout::CONV1_B], &mut h1);
        h1.iter_mut().for_each(|v| *v = v.max(0.0));

        let mut h2 = vec![0.0; HIDDEN * plane];
        conv3x3(&h1, HIDDEN, h, w, &p[Layout::CONV2_W], &p[Layout::CONV2_B], &mut h2);
        h2.iter_mut().for_each(|v| *v = v.max(0.0));

        let mut logits = vec![p[Layout::HEAD_B.start]; plane];
        for (c, &wc) in p[Layout::HEAD_W].iter().enumerate() {
            for (z, &a) in logits.iter_mut().zip(&h2[c * plane..(c + 1) * plane]) {
                *z += wc * a;
            }
        }
        let out: Vec<f64> = logits.iter().map(|&z| softplus(z)).collect();
        let density = DensityGrid::new(h, w, out)?;
        Ok((
            density,
            ForwardCache {
                height: h,
                width: w,
                h1,
                h2,
                logits,
            },
        ))
    }

    /// Gradient of `sum(upstream * forward(input))` with respect to every parameter.
    pub fn backward(&self, input: &Grid, upstream: &Grid) -> Result<Vec<f64>> {
        let (_, cache) = self.forward_cached(input)?;
        self.backward_cached(&cache, input, upstream)
    }

    pub fn backward_cached(&self, cache: &ForwardCache, input: &Grid, upstream: &Grid) -> Result<Vec<f64>> {
        let (h, w) = (cache.height, cache.width);
        input.check_shape((h, w))?;
        upstream.check_shape((h, w))?;
        let plane = h * w;
        let p = &self.params;
        let mut grad = vec![0.0; Layout::LEN];

        let dz: Vec<f64> = upstream
            .values()
            .iter()
            .zip(&cache.logits)
            .map(|(&g, &z)| g * sigmoid(z))
            .collect();
        grad[Layout::HEAD_B.start] = dz.iter().sum();

        let mut dh2 = vec![0.0; HIDDEN * plane];
        for c in 0..HIDDEN {
            let wc = p[Layout::HEAD_W.start + c];
            let a = &cache.h2[c * plane..(c + 1) * plane];
            let d = &mut dh2[c * plane..(c + 1) * plane];
            let mut acc = 0.0;
            for ((di, &ai), &g) in d.iter_mut().zip(a).zip(&dz) {
                acc += g * ai;
                *di = if ai > 0.0 { g * wc } else { 0.0 };
            }
            grad[Layout::HEAD_W.start + c] = acc;
        }

        let mut dh1 = vec![0.0; HIDDEN * plane];
        {
            let (lo, hi) = grad.split_at_mut(Layout::CONV2_B.start);
            conv3x3_backward(
                &cache.h1,
                HIDDEN,
                h,
                w,
                &p[Layout::CONV2_W],
                &dh2,
                &mut lo[Layout::CONV2_W],
                &mut hi[..HIDDEN],
                Some(&mut dh1),
            );
        }
        for (d, &a) in dh1.iter_mut().zip(&cache.h1) {
            if a <= 0.0 {
                *d = 0.0;
            }
        }
        let (lo, hi) = grad.split_at_mut(Layout::CONV1_B.start);
        conv3x3_backward(
            input.values(),
            1,
            h,
            w,
            &p[Layout::CONV1_W],
            &dh1,
            &mut lo[Layout::CONV1_W],
            &mut hi[..HIDDEN],
            None,
        );
        Ok(grad)
    }

    /// Text manifest followed by the parameters as little-endian `f64`.
    pub fn to_checkpoint(&self) -> Vec<u8> {
        let mut out = checkpoint_header().into_bytes();
        for p in &self.params {
            out.extend_from_slice(&p.to_le_bytes());
        }
        out
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let mut reader = BufReader::new(bytes);
        let expected = checkpoint_header();
        let mut header = String::new();
        for want in expected.lines() {
            let mut line = String::new();
            reader
                .read_line(&mut line)
                .map_err(|e| Error::Parse(e.to_string()))?;
            if line.trim_end_matches('\n') != want {
                return Err(Error::Parse(format!(
                    "checkpoint manifest mismatch: expected '{want}', found '{}'",
                    line.trim_end()
                )));
            }
            header.push_str(&line);
        }
        let mut raw = Vec::new();
        reader
            .read_to_end(&mut raw)
            .map_err(|e| Error::Parse(e.to_string()))?;
        if raw.len() != Layout::LEN * 8 {
            return Err(Error::Parse(format!(
                "checkpoint payload has {} bytes, expected {}",
                raw.len(),
                Layout::LEN * 8
            )));
        }
        let params = raw
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Self::from_params(params)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        crate::io::write_bytes(path.as_ref(), &self.to_checkpoint())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&bytes)
    }
}

const CHECKPOINT_MAGIC: &str = "BAYESCOUNT-CKPT 1";

fn checkpoint_header() -> String {
    let mut s = format!("{CHECKPOINT_MAGIC}\n");
    for (name, shape, _) in Layout::tensors() {
        let dims: Vec<String> = shape.iter().map(|d| d.to_string()).collect();
        s.push_str(&format!("{name} f64le {}\n", dims.join(" ")));
    }
    s.push_str("end\n");
    s
}
