//! Gradient checks: every analytic backward pass against the
//! finite-difference oracle on small random instances.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::gradcheck::{finite_difference, max_relative_error, FD_EPSILON};
use super::layer::{Conv1d, Dense, Lstm};
use super::loss::{bce_loss, mse_loss};
use super::matrix::Matrix;

const TOL: f64 = 1e-4;

fn random_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.random_range(-1.0..1.0);
    }
    m
}

fn unit_matrix(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.random_range(0.05..0.95);
    }
    m
}

#[test]
fn dense_gradients_match_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (t, d, u) = (
            rng.random_range(1..=4usize),
            rng.random_range(1..=3usize),
            rng.random_range(1..=3usize),
        );
        let layer = Dense::new("d", d, u, &mut rng);
        let x = random_matrix(t, d, &mut rng);
        let target = random_matrix(t, u, &mut rng);

        let (y, cache) = layer.forward(&x).unwrap();
        let (_, dl_dy) = mse_loss(&target, &y).unwrap();
        let mut grads = layer.zero_grads();
        let dx = layer.backward(&cache, &dl_dy, &mut grads);

        // Weight gradient.
        let mut w = layer.w.value.as_slice().to_vec();
        let numeric = finite_difference(&mut w, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.w.value = Matrix::from_vec(d, u, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.w.as_slice(), &numeric) < TOL, "dense w seed {seed}");

        // Bias gradient.
        let mut b = layer.b.value.as_slice().to_vec();
        let numeric = finite_difference(&mut b, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.b.value = Matrix::from_vec(1, u, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.b.as_slice(), &numeric) < TOL, "dense b seed {seed}");

        // Input gradient.
        let mut xv = x.as_slice().to_vec();
        let numeric = finite_difference(&mut xv, FD_EPSILON, |vals| {
            let (y, _) = layer.forward(&Matrix::from_vec(t, d, vals.to_vec())).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(dx.as_slice(), &numeric) < TOL, "dense x seed {seed}");
    }
}

#[test]
fn lstm_gradients_match_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(100 + seed);
        let (t, d, u) = (
            rng.random_range(2..=4usize),
            rng.random_range(1..=3usize),
            rng.random_range(1..=3usize),
        );
        let return_sequence = seed % 2 == 0;
        let layer = Lstm::new("l", d, u, return_sequence, &mut rng);
        let x = random_matrix(t, d, &mut rng);
        let out_rows = if return_sequence { t } else { 1 };
        let target = random_matrix(out_rows, u, &mut rng);

        let (y, cache) = layer.forward(&x).unwrap();
        let (_, dl_dy) = mse_loss(&target, &y).unwrap();
        let mut grads = layer.zero_grads();
        let dx = layer.backward(&cache, &dl_dy, &mut grads);

        let mut w = layer.w.value.as_slice().to_vec();
        let numeric = finite_difference(&mut w, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.w.value = Matrix::from_vec(d + u, 4 * u, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.w.as_slice(), &numeric) < TOL, "lstm w seed {seed}");

        let mut b = layer.b.value.as_slice().to_vec();
        let numeric = finite_difference(&mut b, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.b.value = Matrix::from_vec(1, 4 * u, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.b.as_slice(), &numeric) < TOL, "lstm b seed {seed}");

        let mut xv = x.as_slice().to_vec();
        let numeric = finite_difference(&mut xv, FD_EPSILON, |vals| {
            let (y, _) = layer.forward(&Matrix::from_vec(t, d, vals.to_vec())).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(dx.as_slice(), &numeric) < TOL, "lstm x seed {seed}");
    }
}

#[test]
fn conv1d_gradients_match_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(200 + seed);
        let (t, c, k) = (
            rng.random_range(2..=4usize),
            rng.random_range(1..=3usize),
            rng.random_range(1..=3usize),
        );
        let relu = seed % 2 == 0;
        let layer = Conv1d::new("c", c, k, relu, &mut rng);
        let x = random_matrix(t, c, &mut rng);
        let target = random_matrix(t, k, &mut rng);

        let (y, cache) = layer.forward(&x).unwrap();
        let (_, dl_dy) = mse_loss(&target, &y).unwrap();
        let mut grads = layer.zero_grads();
        let dx = layer.backward(&cache, &dl_dy, &mut grads);

        let mut w = layer.w.value.as_slice().to_vec();
        let numeric = finite_difference(&mut w, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.w.value = Matrix::from_vec(2 * c, k, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.w.as_slice(), &numeric) < TOL, "conv w seed {seed}");

        let mut b = layer.b.value.as_slice().to_vec();
        let numeric = finite_difference(&mut b, FD_EPSILON, |vals| {
            let mut l2 = layer.clone();
            l2.b.value = Matrix::from_vec(1, k, vals.to_vec());
            let (y, _) = l2.forward(&x).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(grads.b.as_slice(), &numeric) < TOL, "conv b seed {seed}");

        let mut xv = x.as_slice().to_vec();
        let numeric = finite_difference(&mut xv, FD_EPSILON, |vals| {
            let (y, _) = layer.forward(&Matrix::from_vec(t, c, vals.to_vec())).unwrap();
            mse_loss(&target, &y).unwrap().0
        });
        assert!(max_relative_error(dx.as_slice(), &numeric) < TOL, "conv x seed {seed}");
    }
}

#[test]
fn loss_gradients_match_oracle() {
    for seed in 0..20 {
        let mut rng = ChaCha8Rng::seed_from_u64(300 + seed);
        let (r, c) = (rng.random_range(1..=4usize), rng.random_range(1..=4usize));

        let x = random_matrix(r, c, &mut rng);
        let y = random_matrix(r, c, &mut rng);
        let (_, grad) = mse_loss(&x, &y).unwrap();
        let mut yv = y.as_slice().to_vec();
        let numeric = finite_difference(&mut yv, FD_EPSILON, |vals| {
            mse_loss(&x, &Matrix::from_vec(r, c, vals.to_vec())).unwrap().0
        });
        assert!(max_relative_error(grad.as_slice(), &numeric) < 1e-6, "mse seed {seed}");

        let x = unit_matrix(r, c, &mut rng);
        let y = unit_matrix(r, c, &mut rng);
        let (_, grad) = bce_loss(&x, &y).unwrap();
        let mut yv = y.as_slice().to_vec();
        let numeric = finite_difference(&mut yv, FD_EPSILON, |vals| {
            bce_loss(&x, &Matrix::from_vec(r, c, vals.to_vec())).unwrap().0
        });
        assert!(max_relative_error(grad.as_slice(), &numeric) < 1e-6, "bce seed {seed}");
    }
}

#[test]
fn zero_upstream_gradient_gives_zero_param_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let layer = Lstm::new("l", 2, 3, true, &mut rng);
    let x = random_matrix(4, 2, &mut rng);
    let (_, cache) = layer.forward(&x).unwrap();
    let mut grads = layer.zero_grads();
    let dx = layer.backward(&cache, &Matrix::zeros(4, 3), &mut grads);
    assert!(grads.w.as_slice().iter().all(|&v| v == 0.0));
    assert!(grads.b.as_slice().iter().all(|&v| v == 0.0));
    assert!(dx.as_slice().iter().all(|&v| v == 0.0));
}

#[test]
fn forward_backward_is_deterministic() {
    let run = || {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let layer = Lstm::new("l", 2, 4, true, &mut rng);
        let x = random_matrix(5, 2, &mut rng);
        let target = random_matrix(5, 4, &mut rng);
        let (y, cache) = layer.forward(&x).unwrap();
        let (loss, dl_dy) = mse_loss(&target, &y).unwrap();
        let mut grads = layer.zero_grads();
        layer.backward(&cache, &dl_dy, &mut grads);
        (loss, y, grads.w)
    };
    let (l1, y1, g1) = run();
    let (l2, y2, g2) = run();
    assert_eq!(l1.to_bits(), l2.to_bits());
    assert_eq!(y1, y2);
    assert_eq!(g1, g2);
}
