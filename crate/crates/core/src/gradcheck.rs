//! Central finite differences for checking analytic gradients.

/// Step used by the gradient checks.
pub const DEFAULT_STEP: f64 = 1e-6;

/// `(f(x + h e_k) - f(x - h e_k)) / 2h` for every coordinate `k` in `coords`.
pub fn central_differences<F>(mut f: F, x: &[f64], coords: &[usize], h: f64) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut probe = x.to_vec();
    coords
        .iter()
        .map(|&k| {
            probe[k] = x[k] + h;
            let up = f(&probe);
            probe[k] = x[k] - h;
            let down = f(&probe);
            probe[k] = x[k];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// `|a - b| / max(|a|, |b|, floor)`; `floor` keeps near-zero entries from
/// turning rounding noise into large relative errors.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cubic() {
        let f = |v: &[f64]| v[0] * v[0] * v[0] + 2.0 * v[1];
        let g = central_differences(f, &[2.0, -1.0], &[0, 1], 1e-5);
        assert!(relative_error(g[0], 12.0, 1.0) < 1e-9);
        assert!(relative_error(g[1], 2.0, 1.0) < 1e-9);
    }

    #[test]
    fn floor_applies() {
        assert_eq!(relative_error(0.0, 1e-9, 1.0), 1e-9);
        assert_eq!(relative_error(2.0, 1.0, 1.0), 0.5);
    }
}
