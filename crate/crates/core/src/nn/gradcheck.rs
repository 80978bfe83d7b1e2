//! Central finite-difference gradient oracle.
//!
//! Independent of every analytic backward pass: it only re-evaluates a loss
//! closure under parameter perturbations. Used by the unit and acceptance
//! tests to certify the hand-derived gradients.

/// Default perturbation for the central difference.
pub const FD_EPSILON: f64 = 1e-5;

/// Central finite-difference gradient of `loss` with respect to `values`.
///
/// `loss` must be a pure function of the slice contents. The slice is
/// restored to its original contents before returning.
pub fn finite_difference<F>(values: &mut [f64], eps: f64, mut loss: F) -> Vec<f64>
where
    F: FnMut(&[f64]) -> f64,
{
    let mut grad = vec![0.0; values.len()];
    for i in 0..values.len() {
        let orig = values[i];
        values[i] = orig + eps;
        let up = loss(values);
        values[i] = orig - eps;
        let down = loss(values);
        values[i] = orig;
        grad[i] = (up - down) / (2.0 * eps);
    }
    grad
}

/// Largest relative error between analytic and numeric gradients,
/// with an absolute floor so near-zero pairs do not blow up the ratio.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    let mut worst = 0.0_f64;
    for (&a, &n) in analytic.iter().zip(numeric) {
        let denom = a.abs().max(n.abs()).max(1e-7);
        worst = worst.max((a - n).abs() / denom);
    }
    worst
}
