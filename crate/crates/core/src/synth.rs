//! Synthetic crowd scenes: Gaussian blobs at random head positions over
//! uniform noise, with the exact head list as ground truth.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::scene::{cell_center, Grid, Point2, Scene};
use crate::train::Sample;

pub const MAX_REJECTIONS: usize = 10_000;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSpec {
    pub height: usize,
    pub width: usize,
    pub count_min: usize,
    pub count_max: usize,
    pub min_separation: f64,
    pub blob_radius_min: f64,
    pub blob_radius_max: f64,
    /// Upper bound of the additive uniform noise.
    pub noise: f64,
    pub seed: u64,
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        if self.height == 0 || self.width == 0 {
            return Err(Error::Invalid("synthetic grid must be nonempty".into()));
        }
        if self.count_min > self.count_max {
            return Err(Error::Invalid(format!(
                "count range [{}, {}] is empty",
                self.count_min, self.count_max
            )));
        }
        if !(self.blob_radius_min > 0.0 && self.blob_radius_min <= self.blob_radius_max) {
            return Err(Error::Invalid("blob radius range must be positive and nonempty".into()));
        }
        if !(self.min_separation >= 0.0 && self.noise >= 0.0) {
            return Err(Error::Invalid("separation and noise must be nonnegative".into()));
        }
        Ok(())
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self { seed, ..self.clone() }
    }
}

/// Frozen desk-scale benchmark definition.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchmarkSpec {
    pub name: String,
    pub scene: SynthSpec,
    pub train: usize,
    pub test: usize,
}

impl BenchmarkSpec {
    /// "synth-v1": 64x64 grids, 1-30 heads, separation 3, 200 train / 50 test, seed 7.
    pub fn synth_v1() -> Self {
        Self {
            name: "synth-v1".into(),
            scene: SynthSpec {
                height: 64,
                width: 64,
                count_min: 1,
                count_max: 30,
                min_separation: 3.0,
                blob_radius_min: 1.0,
                blob_radius_max: 1.5,
                noise: 0.1,
                seed: 7,
            },
            train: 200,
            test: 50,
        }
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "synth-v1" => Ok(Self::synth_v1()),
            other => Err(Error::Invalid(format!("unknown benchmark '{other}'"))),
        }
    }

    /// Seed of the `index`-th scene (train scenes first, then test).
    pub fn scene_seed(&self, index: usize) -> u64 {
        splitmix64(self.scene.seed ^ splitmix64(index as u64))
    }

    pub fn generate(&self) -> Result<Benchmark> {
        let mut samples = (0..self.train + self.test)
            .map(|k| {
                generate_scene(&self.scene.with_seed(self.scene_seed(k)))
                    .map(|(input, scene)| Sample { input, scene })
            })
            .collect::<Result<Vec<_>>>()?;
        let test = samples.split_off(self.train);
        Ok(Benchmark {
            train: samples,
            test,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Benchmark {
    pub train: Vec<Sample>,
    pub test: Vec<Sample>,
}

fn splitmix64(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9E37_79B9_7F4A_7C15);
    x = (x ^ (x >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    x ^ (x >> 31)
}

/// Draws one synthetic image and its head annotations.
pub fn generate_scene(spec: &SynthSpec) -> Result<(Grid, Scene)> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (h, w) = (spec.height, spec.width);
    let count = rng.gen_range(spec.count_min..=spec.count_max);

    let mut points: Vec<Point2> = Vec::with_capacity(count);
    let mut rejections = 0;
    let min_sq = spec.min_separation * spec.min_separation;
    while points.len() < count {
        let p = Point2::new(rng.gen_range(0.0..h as f64), rng.gen_range(0.0..w as f64));
        if points.iter().all(|q| q.dist_sq(&p) >= min_sq) {
            points.push(p);
        } else {
            rejections += 1;
            if rejections >= MAX_REJECTIONS {
                return Err(Error::SamplingFailed(rejections));
            }
        }
    }
    let radii: Vec<f64> = points
        .iter()
        .map(|_| rng.gen_range(spec.blob_radius_min..=spec.blob_radius_max))
        .collect();

    let mut values = Vec::with_capacity(h * w);
    for i in 0..h {
        for j in 0..w {
            let x = cell_center(i, j);
            let blobs: f64 = points
                .iter()
                .zip(&radii)
                .map(|(z, r)| (-x.dist_sq(z) / (2.0 * r * r)).exp())
                .sum();
            let noise = if spec.noise > 0.0 {
                rng.gen_range(0.0..spec.noise)
            } else {
                0.0
            };
            values.push((blobs + noise).clamp(0.0, 1.0));
        }
    }
    let input = Grid::new(h, w, values)?;
    let scene = Scene::new(h, w, 1, points)?;
    Ok((input, scene))
}

/// Moves each head by independent uniform offsets in `±deviation * height` per axis.
pub fn perturb_annotations(scene: &Scene, deviation: f64, seed: u64) -> Result<Scene> {
    if !(deviation.is_finite() && deviation >= 0.0) {
        return Err(Error::Invalid(format!("deviation must be >= 0, got {deviation}")));
    }
    if deviation == 0.0 {
        return Ok(scene.clone());
    }
    let amp = deviation * scene.height() as f64;
    let (h, w) = (scene.height() as f64, scene.width() as f64);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let moved = scene
        .points()
        .iter()
        .map(|p| {
            let dr = rng.gen_range(-amp..=amp);
            let dc = rng.gen_range(-amp..=amp);
            Point2::new((p.row + dr).clamp(0.0, h), (p.col + dc).clamp(0.0, w))
        })
        .collect();
    scene.with_points(moved)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthSpec {
        SynthSpec {
            height: 32,
            width: 32,
            count_min: 3,
            count_max: 8,
            min_separation: 3.0,
            blob_radius_min: 1.0,
            blob_radius_max: 2.0,
            noise: 0.1,
            seed: 1,
        }
    }

    #[test]
    fn empty_count_range_gives_noise() {
        let spec = SynthSpec {
            count_min: 0,
            count_max: 0,
            ..small()
        };
        let (input, scene) = generate_scene(&spec).unwrap();
        assert_eq!(scene.count(), 0);
        assert!(input.values().iter().all(|&v| (0.0..0.1).contains(&v)));
    }

    #[test]
    fn deterministic() {
        assert_eq!(generate_scene(&small()).unwrap(), generate_scene(&small()).unwrap());
        assert_ne!(
            generate_scene(&small()).unwrap(),
            generate_scene(&small().with_seed(2)).unwrap()
        );
    }

    #[test]
    fn infeasible_separation() {
        let spec = SynthSpec {
            height: 64,
            width: 64,
            count_min: 2,
            count_max: 5,
            min_separation: 1000.0,
            ..small()
        };
        assert!(matches!(generate_scene(&spec), Err(Error::SamplingFailed(_))));
    }

    #[test]
    fn respects_separation_and_range() {
        for seed in 0..20 {
            let (input, scene) = generate_scene(&small().with_seed(seed)).unwrap();
            assert!((3..=8).contains(&scene.count()));
            assert!(input.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
            let p = scene.points();
            for a in 0..p.len() {
                for b in a + 1..p.len() {
                    assert!(p[a].dist(&p[b]) >= 3.0);
                }
            }
        }
    }

    #[test]
    fn invalid_spec() {
        let spec = SynthSpec {
            count_min: 5,
            count_max: 4,
            ..small()
        };
        assert!(generate_scene(&spec).is_err());
    }

    #[test]
    fn zero_deviation_is_identity() {
        let (_, scene) = generate_scene(&small()).unwrap();
        assert_eq!(perturb_annotations(&scene, 0.0, 3).unwrap(), scene);
        assert!(perturb_annotations(&scene, -0.1, 3).is_err());
    }

    #[test]
    fn offsets_bounded() {
        let scene = Scene::new(50, 50, 1, vec![Point2::new(25.0, 25.0); 200]).unwrap();
        let moved = perturb_annotations(&scene, 0.04, 9).unwrap();
        for p in moved.points() {
            assert!((p.row - 25.0).abs() <= 2.0 && (p.col - 25.0).abs() <= 2.0);
        }
        let corner = Scene::new(50, 50, 1, vec![Point2::new(0.0, 50.0); 50]).unwrap();
        let moved = perturb_annotations(&corner, 0.1, 1).unwrap();
        assert!(moved.points().iter().all(|p| p.row >= 0.0 && p.col <= 50.0));
    }

    #[test]
    fn benchmark_split() {
        let spec = BenchmarkSpec {
            train: 3,
            test: 2,
            ..BenchmarkSpec::synth_v1()
        };
        let b = spec.generate().unwrap();
        assert_eq!((b.train.len(), b.test.len()), (3, 2));
        assert_eq!(b, spec.generate().unwrap());
        assert!(BenchmarkSpec::by_name("synth-v2").is_err());
    }
}
