//! Reconstruction losses: mean squared error and binary cross-entropy.

use super::matrix::Matrix;
use super::NnError;

/// Clip bound keeping log() away from zero on saturated reconstructions.
pub const BCE_CLIP: f64 = 1e-7;

/// Mean over all elements of (x - x_hat)^2, plus dL/dx_hat.
pub fn mse_loss(x: &Matrix, x_hat: &Matrix) -> Result<(f64, Matrix), NnError> {
    x_hat.require_shape(x.rows(), x.cols(), "mse target/reconstruction")?;
    let n = x.len() as f64;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut sum = 0.0;
    for ((&a, &b), g) in x.as_slice().iter().zip(x_hat.as_slice()).zip(grad.as_mut_slice()) {
        let d = a - b;
        sum += d * d;
        *g = -2.0 * d / n;
    }
    Ok((sum / n, grad))
}

/// Binary cross-entropy, -mean[x ln x_hat + (1-x) ln(1-x_hat)], with x_hat
/// clipped to [BCE_CLIP, 1-BCE_CLIP]. The gradient is zero where the clip
/// is active, matching the piecewise-constant clipped forward.
pub fn bce_loss(x: &Matrix, x_hat: &Matrix) -> Result<(f64, Matrix), NnError> {
    x_hat.require_shape(x.rows(), x.cols(), "bce target/reconstruction")?;
    let n = x.len() as f64;
    let mut grad = Matrix::zeros(x.rows(), x.cols());
    let mut sum = 0.0;
    for ((&t, &p), g) in x.as_slice().iter().zip(x_hat.as_slice()).zip(grad.as_mut_slice()) {
        let clipped = p < BCE_CLIP || p > 1.0 - BCE_CLIP;
        let pc = p.clamp(BCE_CLIP, 1.0 - BCE_CLIP);
        sum -= t * pc.ln() + (1.0 - t) * (1.0 - pc).ln();
        *g = if clipped { 0.0 } else { (-t / pc + (1.0 - t) / (1.0 - pc)) / n };
    }
    Ok((sum / n, grad))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mse_zero_when_equal() {
        let x = Matrix::from_vec(2, 2, vec![0.1, 0.2, 0.3, 0.4]);
        let (l, _) = mse_loss(&x, &x).unwrap();
        assert_eq!(l, 0.0);
    }

    #[test]
    fn mse_hand_example() {
        let x = Matrix::from_vec(1, 2, vec![0.0, 0.0]);
        let y = Matrix::from_vec(1, 2, vec![1.0, 1.0]);
        let (l, g) = mse_loss(&x, &y).unwrap();
        assert_eq!(l, 1.0);
        // -2(x - x_hat)/N = -2(0-1)/2 = 1
        assert_eq!(g.as_slice(), &[1.0, 1.0]);
    }

    #[test]
    fn mse_shape_mismatch() {
        let x = Matrix::zeros(1, 2);
        let y = Matrix::zeros(2, 1);
        assert!(mse_loss(&x, &y).is_err());
    }

    #[test]
    fn bce_half_half_is_ln2() {
        let x = Matrix::from_vec(1, 1, vec![0.5]);
        let y = Matrix::from_vec(1, 1, vec![0.5]);
        let (l, _) = bce_loss(&x, &y).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn bce_confident_correct_near_zero() {
        let x = Matrix::from_vec(1, 1, vec![1.0]);
        let y = Matrix::from_vec(1, 1, vec![1.0 - 1e-9]);
        let (l, _) = bce_loss(&x, &y).unwrap();
        assert!(l < 1e-6);
    }

    #[test]
    fn bce_nonnegative_on_unit_interval() {
        let x = Matrix::from_vec(1, 3, vec![0.0, 0.3, 1.0]);
        let y = Matrix::from_vec(1, 3, vec![0.2, 0.9, 0.4]);
        let (l, _) = bce_loss(&x, &y).unwrap();
        assert!(l >= 0.0);
    }
}
