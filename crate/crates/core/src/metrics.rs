use crate::error::{Error, Result};

/// Counting accuracy over a set of test images.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsReport {
    /// `(ground-truth count, estimated count)` per image.
    pub per_image: Vec<(f64, f64)>,
    pub mae: f64,
    /// Root of the mean squared count error.
    pub mse: f64,
}

impl MetricsReport {
    pub fn images(&self) -> usize {
        self.per_image.len()
    }
}

pub fn metrics(per_image: Vec<(f64, f64)>) -> Result<MetricsReport> {
    if per_image.is_empty() {
        return Err(Error::Invalid("metrics need at least one image".into()));
    }
    let k = per_image.len() as f64;
    let mae = per_image.iter().map(|(n, c)| (n - c).abs()).sum::<f64>() / k;
    let mean_sq = per_image.iter().map(|(n, c)| (n - c) * (n - c)).sum::<f64>() / k;
    // RMS >= mean absolute value; rounding may leave the computed root an ulp short.
    let mse = mean_sq.sqrt().max(mae);
    Ok(MetricsReport { per_image, mae, mse })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_images() {
        let r = metrics(vec![(10.0, 8.0), (5.0, 9.0)]).unwrap();
        assert_eq!(r.mae, 3.0);
        assert!((r.mse - 10f64.sqrt()).abs() < 1e-15);
        assert_eq!(r.images(), 2);
    }

    #[test]
    fn perfect_and_single() {
        let r = metrics(vec![(3.0, 3.0), (7.0, 7.0)]).unwrap();
        assert_eq!((r.mae, r.mse), (0.0, 0.0));
        let r = metrics(vec![(4.0, 1.75)]).unwrap();
        assert_eq!(r.mae, 2.25);
        assert_eq!(r.mse, 2.25);
    }

    #[test]
    fn empty_is_error() {
        assert!(metrics(vec![]).is_err());
    }
}
