//! AdaGrad and Adam, both as plain descent updates over a flat parameter list.

use super::layer::Param;
use super::matrix::Matrix;

pub const EPSILON: f64 = 1e-8;
pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;

/// Optimizer with per-parameter state, addressed by position in the model's
/// parameter list. State buffers are created on the first step.
#[derive(Debug, Clone)]
pub enum Optimizer {
    AdaGrad {
        lr: f64,
        accum: Vec<Matrix>,
    },
    Adam {
        lr: f64,
        step: u64,
        m: Vec<Matrix>,
        v: Vec<Matrix>,
    },
}

impl Optimizer {
    pub fn adagrad(lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Optimizer::AdaGrad { lr, accum: Vec::new() }
    }

    pub fn adam(lr: f64) -> Self {
        assert!(lr > 0.0, "learning rate must be positive");
        Optimizer::Adam { lr, step: 0, m: Vec::new(), v: Vec::new() }
    }

    /// Apply one descent step using the gradients stored in each parameter.
    pub fn step(&mut self, params: &mut [&mut Param]) {
        match self {
            Optimizer::AdaGrad { lr, accum } => {
                if accum.is_empty() {
                    *accum = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
                }
                for (p, acc) in params.iter_mut().zip(accum.iter_mut()) {
                    let g = p.grad.as_slice().to_vec();
                    for ((w, a), gi) in
                        p.value.as_mut_slice().iter_mut().zip(acc.as_mut_slice()).zip(&g)
                    {
                        *a += gi * gi;
                        *w -= *lr * gi / (a.sqrt() + EPSILON);
                    }
                }
            }
            Optimizer::Adam { lr, step, m, v } => {
                if m.is_empty() {
                    *m = params.iter().map(|p| Matrix::zeros(p.value.rows(), p.value.cols())).collect();
                    *v = m.clone();
                }
                *step += 1;
                let t = *step as f64;
                let bc1 = 1.0 - ADAM_BETA1.powf(t);
                let bc2 = 1.0 - ADAM_BETA2.powf(t);
                for ((p, mi), vi) in params.iter_mut().zip(m.iter_mut()).zip(v.iter_mut()) {
                    let g = p.grad.as_slice().to_vec();
                    for (((w, mj), vj), gi) in p
                        .value
                        .as_mut_slice()
                        .iter_mut()
                        .zip(mi.as_mut_slice())
                        .zip(vi.as_mut_slice())
                        .zip(&g)
                    {
                        *mj = ADAM_BETA1 * *mj + (1.0 - ADAM_BETA1) * gi;
                        *vj = ADAM_BETA2 * *vj + (1.0 - ADAM_BETA2) * gi * gi;
                        let m_hat = *mj / bc1;
                        let v_hat = *vj / bc2;
                        *w -= *lr * m_hat / (v_hat.sqrt() + EPSILON);
                    }
                }
            }
        }
    }
}
