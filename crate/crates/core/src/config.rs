use crate::error::{Error, Result};
use crate::scene::Scene;

pub const DEFAULT_SIGMA: f64 = 8.0;
pub const DEFAULT_MARGIN_FRACTION: f64 = 0.15;

/// Logits this far below the per-pixel maximum are dropped when truncation is on.
pub const TRUNCATION_LOGIT: f64 = -700.0;

/// Margin between a head and its dummy background point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Margin {
    /// Cells.
    Absolute(f64),
    /// Fraction of the scene's shorter side.
    Fraction(f64),
}

impl Margin {
    pub fn resolve(&self, scene: &Scene) -> f64 {
        match *self {
            Margin::Absolute(d) => d,
            Margin::Fraction(f) => f * scene.shorter_side() as f64,
        }
    }

    fn is_positive(&self) -> bool {
        let v = match *self {
            Margin::Absolute(d) => d,
            Margin::Fraction(f) => f,
        };
        v.is_finite() && v > 0.0
    }
}

/// Distance function applied to count residuals.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Distance {
    #[default]
    Abs,
    Squared,
}

impl Distance {
    pub fn eval(&self, r: f64) -> f64 {
        match self {
            Distance::Abs => r.abs(),
            Distance::Squared => r * r,
        }
    }

    /// Derivative with respect to the residual; `sign(0) = 0` for the ℓ1 case.
    pub fn slope(&self, r: f64) -> f64 {
        match self {
            Distance::Abs => {
                if r > 0.0 {
                    1.0
                } else if r < 0.0 {
                    -1.0
                } else {
                    0.0
                }
            }
            Distance::Squared => 2.0 * r,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LossConfig {
    pub sigma: f64,
    pub background: bool,
    pub margin: Margin,
    /// Label priors, heads first and background last. `None` means uniform.
    pub priors: Option<Vec<f64>>,
    pub distance: Distance,
    pub truncate: bool,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            sigma: DEFAULT_SIGMA,
            background: false,
            margin: Margin::Fraction(DEFAULT_MARGIN_FRACTION),
            priors: None,
            distance: Distance::Abs,
            truncate: false,
        }
    }
}

impl LossConfig {
    pub fn new(sigma: f64) -> Self {
        Self {
            sigma,
            ..Self::default()
        }
    }

    pub fn with_background(mut self, margin: Margin) -> Self {
        self.background = true;
        self.margin = margin;
        self
    }

    pub fn with_priors(mut self, priors: Vec<f64>) -> Self {
        self.priors = Some(priors);
        self
    }

    pub fn with_distance(mut self, distance: Distance) -> Self {
        self.distance = distance;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma.is_finite() && self.sigma > 0.0) {
            return Err(Error::Invalid(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if self.background && !self.margin.is_positive() {
            return Err(Error::Invalid(format!(
                "margin must be > 0 with background modelling, got {:?}",
                self.margin
            )));
        }
        if let Some(p) = &self.priors {
            if p.iter().any(|&w| !(w.is_finite() && w >= 0.0)) {
                return Err(Error::Invalid("priors must be finite and nonnegative".into()));
            }
            let total: f64 = p.iter().sum();
            if (total - 1.0).abs() > 1e-12 {
                return Err(Error::Invalid(format!("priors sum to {total}, not 1")));
            }
        }
        Ok(())
    }

    /// Number of labels for `scene`: one per head plus the background label.
    pub fn label_count(&self, scene: &Scene) -> usize {
        scene.count() + usize::from(self.background)
    }

    /// Log-priors aligned with the label order, or `None` when uniform.
    pub(crate) fn log_priors(&self, scene: &Scene) -> Result<Option<Vec<f64>>> {
        match &self.priors {
            None => Ok(None),
            Some(p) => {
                let labels = self.label_count(scene);
                if p.len() != labels {
                    return Err(Error::Invalid(format!(
                        "expected {labels} priors for this scene, got {}",
                        p.len()
                    )));
                }
                Ok(Some(p.iter().map(|w| w.ln()).collect()))
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_match_reference_setup() {
        let cfg = LossConfig::default();
        assert_eq!(cfg.sigma, 8.0);
        assert_eq!(cfg.margin, Margin::Fraction(0.15));
        assert_eq!(cfg.distance, Distance::Abs);
        assert!(!cfg.truncate);
    }

    #[test]
    fn validation() {
        assert!(LossConfig::new(0.0).validate().is_err());
        assert!(LossConfig::new(1.0)
            .with_background(Margin::Absolute(0.0))
            .validate()
            .is_err());
        assert!(LossConfig::new(1.0).with_priors(vec![0.5, 0.25]).validate().is_err());
        assert!(LossConfig::new(1.0).with_priors(vec![0.5, 0.5]).validate().is_ok());
        assert!(LossConfig::new(1.0).with_priors(vec![1.5, -0.5]).validate().is_err());
    }

    #[test]
    fn margin_fraction_uses_shorter_side() {
        let s = Scene::new(40, 100, 1, vec![]).unwrap();
        assert_eq!(Margin::Fraction(0.15).resolve(&s), 6.0);
        assert_eq!(Margin::Absolute(3.0).resolve(&s), 3.0);
    }

    #[test]
    fn l1_slope_at_zero_is_zero() {
        assert_eq!(Distance::Abs.slope(0.0), 0.0);
        assert_eq!(Distance::Abs.slope(-2.0), -1.0);
        assert_eq!(Distance::Squared.slope(-2.0), -4.0);
    }
}
