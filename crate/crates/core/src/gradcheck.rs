//! Central finite-difference checking of analytic gradients.

use alloc::vec::Vec;

/// Central-difference estimate of the gradient of `f` at `params`.
pub fn numerical_gradient(mut f: impl FnMut(&[f64]) -> f64, params: &[f64], step: f64) -> Vec<f64> {
    let mut probe = params.to_vec();
    (0..params.len())
        .map(|i| {
            let orig = probe[i];
            probe[i] = orig + step;
            let plus = f(&probe);
            probe[i] = orig - step;
            let minus = f(&probe);
            probe[i] = orig;
            (plus - minus) / (2.0 * step)
        })
        .collect()
}

/// Largest `|analytic - numeric| / max(1, |analytic|)` over all coordinates.
///
/// `f` must be deterministic: any random draws it makes have to be fixed
/// across calls.
pub fn finite_difference_check(
    f: impl FnMut(&[f64]) -> f64,
    params: &[f64],
    analytic: &[f64],
    step: f64,
) -> f64 {
    assert!(step > 0.0, "finite-difference step must be positive");
    assert_eq!(params.len(), analytic.len());
    let numeric = numerical_gradient(f, params, step);
    max_relative_error(analytic, &numeric)
}

pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / a.abs().max(1.0))
        .fold(0.0, f64::max)
}
