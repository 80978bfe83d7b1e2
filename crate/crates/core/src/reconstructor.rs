//! The two reconstruction models scored against their own inputs.
//!
//! Time domain: an LSTM autoencoder 2 -> 32 -> 8, a channel-enhancement
//! layer replicating the 1x8 latent state across all 16 time steps, then
//! the mirrored decoder 8 -> 32 and a per-step dense map back to 2
//! features. Scored with MSE.
//!
//! Frequency domain: five width-2 causal conv blocks with kernel counts
//! 32, 26, 8, 4, 2 forming the residual branch F(x); the reconstruction is
//! sigmoid(x + F(x)) and is scored with binary cross-entropy. The last
//! block is linear so the residual sum can move in both directions.

use rand_chacha::ChaCha8Rng;

use crate::ingest::FEATURE_STEPS;
use crate::nn::layer::{Conv1dCache, Conv1dGrads, DenseCache, DenseGrads, LstmCache, LstmGrads};
use crate::nn::{bce_loss, mse_loss, Conv1d, Dense, Lstm, Matrix, NnError, Optimizer, Param};
use crate::seed::stream_rng;

/// Feature count per time step (inter-arrival, size).
pub const FEATURES: usize = 2;

/// Encoder/decoder widths of the time-domain autoencoder.
pub const TIME_UNITS_OUTER: usize = 32;
pub const TIME_UNITS_INNER: usize = 8;

/// Kernel counts of the five frequency-domain conv blocks.
pub const FREQ_KERNELS: [usize; 5] = [32, 26, 8, 4, 2];

/// Common training/scoring interface for the two reconstructors.
pub trait ReconstructorModel: Send + Sync {
    /// Reconstruction loss for one normalized sample plus the gradient of
    /// that loss for every parameter, in `params()` order.
    fn loss_and_grads(&self, x: &Matrix) -> Result<(f64, Vec<Matrix>), NnError>;
    /// Reconstruction error of one sample (the model's scoring loss).
    fn score(&self, x: &Matrix) -> Result<f64, NnError>;
    fn params(&self) -> Vec<&Param>;
    fn params_mut(&mut self) -> Vec<&mut Param>;
    /// The optimizer this model trains with.
    fn new_optimizer(&self, lr: f64) -> Optimizer;
}

// ---------------------------------------------------------------------------
// Time-domain reconstructor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct TimeReconstructor {
    pub enc1: Lstm,
    pub enc2: Lstm,
    pub dec1: Lstm,
    pub dec2: Lstm,
    pub out: Dense,
}

pub struct TimeCache {
    enc1: LstmCache,
    enc2: LstmCache,
    /// The 1x8 latent state and its replication across time steps.
    pub latent: Matrix,
    pub replicated: Matrix,
    dec1: LstmCache,
    dec2: LstmCache,
    out: DenseCache,
}

/// Seed-deterministic Glorot init of the full time-domain stack.
pub fn init_time(seed: u64) -> TimeReconstructor {
    let mut rng: ChaCha8Rng = stream_rng(seed, "init-time");
    TimeReconstructor {
        enc1: Lstm::new("time.enc1", FEATURES, TIME_UNITS_OUTER, true, &mut rng),
        enc2: Lstm::new("time.enc2", TIME_UNITS_OUTER, TIME_UNITS_INNER, false, &mut rng),
        dec1: Lstm::new("time.dec1", TIME_UNITS_INNER, TIME_UNITS_INNER, true, &mut rng),
        dec2: Lstm::new("time.dec2", TIME_UNITS_INNER, TIME_UNITS_OUTER, true, &mut rng),
        out: Dense::new("time.out", TIME_UNITS_OUTER, FEATURES, &mut rng),
    }
}

impl TimeReconstructor {
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, TimeCache), NnError> {
        x.require_shape(FEATURE_STEPS, FEATURES, "time reconstructor input")?;
        let (h1, enc1) = self.enc1.forward(x)?;
        let (latent, enc2) = self.enc2.forward(&h1)?;
        // Channel enhancement: copy the 1x8 state into every time step.
        let mut replicated = Matrix::zeros(FEATURE_STEPS, TIME_UNITS_INNER);
        for t in 0..FEATURE_STEPS {
            replicated.row_mut(t).copy_from_slice(latent.row(0));
        }
        let (h3, dec1) = self.dec1.forward(&replicated)?;
        let (h4, dec2) = self.dec2.forward(&h3)?;
        let (y, out) = self.out.forward(&h4)?;
        Ok((y, TimeCache { enc1, enc2, latent, replicated, dec1, dec2, out }))
    }

    /// Reconstruction only, cache discarded.
    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward(x)?.0)
    }

    pub fn backward(&self, cache: &TimeCache, dl_dy: &Matrix) -> TimeGrads {
        let mut g = TimeGrads {
            enc1: self.enc1.zero_grads(),
            enc2: self.enc2.zero_grads(),
            dec1: self.dec1.zero_grads(),
            dec2: self.dec2.zero_grads(),
            out: self.out.zero_grads(),
        };
        let dh4 = self.out.backward(&cache.out, dl_dy, &mut g.out);
        let dh3 = self.dec2.backward(&cache.dec2, &dh4, &mut g.dec2);
        let drep = self.dec1.backward(&cache.dec1, &dh3, &mut g.dec1);
        // Replication backward: sum the per-step gradients into the latent.
        let mut dlatent = Matrix::zeros(1, TIME_UNITS_INNER);
        for t in 0..FEATURE_STEPS {
            for (a, b) in dlatent.row_mut(0).iter_mut().zip(drep.row(t)) {
                *a += b;
            }
        }
        let dh1 = self.enc2.backward(&cache.enc2, &dlatent, &mut g.enc2);
        self.enc1.backward(&cache.enc1, &dh1, &mut g.enc1);
        g
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

pub struct TimeGrads {
    pub enc1: LstmGrads,
    pub enc2: LstmGrads,
    pub dec1: LstmGrads,
    pub dec2: LstmGrads,
    pub out: DenseGrads,
}

impl TimeGrads {
    fn into_vec(self) -> Vec<Matrix> {
        vec![
            self.enc1.w, self.enc1.b, self.enc2.w, self.enc2.b, self.dec1.w, self.dec1.b,
            self.dec2.w, self.dec2.b, self.out.w, self.out.b,
        ]
    }
}

impl ReconstructorModel for TimeReconstructor {
    fn loss_and_grads(&self, x: &Matrix) -> Result<(f64, Vec<Matrix>), NnError> {
        let (y, cache) = self.forward(x)?;
        let (loss, dl_dy) = mse_loss(x, &y)?;
        Ok((loss, self.backward(&cache, &dl_dy).into_vec()))
    }

    fn score(&self, x: &Matrix) -> Result<f64, NnError> {
        let y = self.reconstruct(x)?;
        Ok(mse_loss(x, &y)?.0)
    }

    fn params(&self) -> Vec<&Param> {
        vec![
            &self.enc1.w, &self.enc1.b, &self.enc2.w, &self.enc2.b, &self.dec1.w, &self.dec1.b,
            &self.dec2.w, &self.dec2.b, &self.out.w, &self.out.b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.enc1.w, &mut self.enc1.b, &mut self.enc2.w, &mut self.enc2.b,
            &mut self.dec1.w, &mut self.dec1.b, &mut self.dec2.w, &mut self.dec2.b,
            &mut self.out.w, &mut self.out.b,
        ]
    }

    fn new_optimizer(&self, lr: f64) -> Optimizer {
        Optimizer::adagrad(lr)
    }
}

/// Per-segment time-domain reconstruction error (MSE).
pub fn score_time(model: &TimeReconstructor, x: &Matrix) -> Result<f64, NnError> {
    model.score(x)
}

// ---------------------------------------------------------------------------
// Frequency-domain reconstructor
// ---------------------------------------------------------------------------

#[derive(Debug, Clone)]
pub struct FreqReconstructor {
    pub conv1: Conv1d,
    pub conv2: Conv1d,
    pub conv3: Conv1d,
    pub conv4: Conv1d,
    pub conv5: Conv1d,
}

pub struct FreqCache {
    conv: [Conv1dCache; 5],
    /// Residual sum before the logistic squash.
    pub presquash: Matrix,
    /// sigmoid(presquash), the reconstruction used for BCE.
    pub output: Matrix,
}

/// Seed-deterministic Glorot init of the conv residual stack. Kernel counts
/// follow [`FREQ_KERNELS`]; pass `None` for the recorded defaults.
pub fn init_freq_with(seed: u64, kernels: Option<[usize; 5]>) -> FreqReconstructor {
    let k = kernels.unwrap_or(FREQ_KERNELS);
    assert_eq!(k[4], FEATURES, "last block must emit one kernel per feature");
    let mut rng: ChaCha8Rng = stream_rng(seed, "init-freq");
    FreqReconstructor {
        conv1: Conv1d::new("freq.conv1", FEATURES, k[0], true, &mut rng),
        conv2: Conv1d::new("freq.conv2", k[0], k[1], true, &mut rng),
        conv3: Conv1d::new("freq.conv3", k[1], k[2], true, &mut rng),
        conv4: Conv1d::new("freq.conv4", k[2], k[3], true, &mut rng),
        conv5: Conv1d::new("freq.conv5", k[3], k[4], false, &mut rng),
    }
}

pub fn init_freq(seed: u64) -> FreqReconstructor {
    init_freq_with(seed, None)
}

impl FreqReconstructor {
    /// Full forward: returns sigmoid(x + F(x)) plus the cache.
    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, FreqCache), NnError> {
        if x.cols() != FEATURES {
            return Err(NnError::ShapeMismatch(format!(
                "freq reconstructor input must have {FEATURES} features, got {}",
                x.cols()
            )));
        }
        let (h1, c1) = self.conv1.forward(x)?;
        let (h2, c2) = self.conv2.forward(&h1)?;
        let (h3, c3) = self.conv3.forward(&h2)?;
        let (h4, c4) = self.conv4.forward(&h3)?;
        let (f, c5) = self.conv5.forward(&h4)?;
        let mut presquash = x.clone();
        presquash.add_assign(&f);
        let mut output = presquash.clone();
        for v in output.as_mut_slice() {
            *v = crate::nn::sigmoid(*v);
        }
        Ok((output.clone(), FreqCache { conv: [c1, c2, c3, c4, c5], presquash, output }))
    }

    pub fn reconstruct(&self, x: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward(x)?.0)
    }

    /// Residual sum before the squash; with all parameters zero this is the
    /// input itself, elementwise exact.
    pub fn forward_presquash(&self, x: &Matrix) -> Result<Matrix, NnError> {
        Ok(self.forward(x)?.1.presquash.clone())
    }

    /// Backward from dL/d(output). The identity branch of the residual sum
    /// carries no parameters, so parameter gradients flow only through the
    /// conv stack.
    pub fn backward(&self, cache: &FreqCache, dl_dout: &Matrix) -> FreqGrads {
        let mut g = FreqGrads {
            conv: [
                self.conv1.zero_grads(),
                self.conv2.zero_grads(),
                self.conv3.zero_grads(),
                self.conv4.zero_grads(),
                self.conv5.zero_grads(),
            ],
        };
        // Through the logistic squash.
        let mut dpre = dl_dout.clone();
        for (d, y) in dpre.as_mut_slice().iter_mut().zip(cache.output.as_slice()) {
            *d *= y * (1.0 - y);
        }
        let d4 = self.conv5.backward(&cache.conv[4], &dpre, &mut g.conv[4]);
        let d3 = self.conv4.backward(&cache.conv[3], &d4, &mut g.conv[3]);
        let d2 = self.conv3.backward(&cache.conv[2], &d3, &mut g.conv[2]);
        let d1 = self.conv2.backward(&cache.conv[1], &d2, &mut g.conv[1]);
        self.conv1.backward(&cache.conv[0], &d1, &mut g.conv[0]);
        g
    }

    pub fn param_count(&self) -> usize {
        self.params().iter().map(|p| p.value.len()).sum()
    }
}

pub struct FreqGrads {
    pub conv: [Conv1dGrads; 5],
}

impl FreqGrads {
    fn into_vec(self) -> Vec<Matrix> {
        self.conv.into_iter().flat_map(|c| [c.w, c.b]).collect()
    }
}

impl ReconstructorModel for FreqReconstructor {
    fn loss_and_grads(&self, x: &Matrix) -> Result<(f64, Vec<Matrix>), NnError> {
        let (y, cache) = self.forward(x)?;
        let (loss, dl_dy) = bce_loss(x, &y)?;
        Ok((loss, self.backward(&cache, &dl_dy).into_vec()))
    }

    fn score(&self, x: &Matrix) -> Result<f64, NnError> {
        let y = self.reconstruct(x)?;
        Ok(bce_loss(x, &y)?.0)
    }

    fn params(&self) -> Vec<&Param> {
        vec![
            &self.conv1.w, &self.conv1.b, &self.conv2.w, &self.conv2.b, &self.conv3.w,
            &self.conv3.b, &self.conv4.w, &self.conv4.b, &self.conv5.w, &self.conv5.b,
        ]
    }

    fn params_mut(&mut self) -> Vec<&mut Param> {
        vec![
            &mut self.conv1.w, &mut self.conv1.b, &mut self.conv2.w, &mut self.conv2.b,
            &mut self.conv3.w, &mut self.conv3.b, &mut self.conv4.w, &mut self.conv4.b,
            &mut self.conv5.w, &mut self.conv5.b,
        ]
    }

    fn new_optimizer(&self, lr: f64) -> Optimizer {
        Optimizer::adam(lr)
    }
}

/// Per-segment frequency-domain reconstruction error (BCE).
pub fn score_freq(model: &FreqReconstructor, x: &Matrix) -> Result<f64, NnError> {
    model.score(x)
}
