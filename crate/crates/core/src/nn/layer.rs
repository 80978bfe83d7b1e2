//! Dense, LSTM and 1-D convolution layers with analytic backward passes.
//!
//! Layers own their parameters; forward passes are pure and return a cache
//! value that the matching backward pass consumes. Gradients are written
//! into caller-supplied buffers so independent samples can run concurrently
//! and be reduced in a fixed order.

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use super::matrix::{add_outer, addmv, mv_transposed, Matrix};
use super::NnError;

/// A named parameter matrix with its gradient accumulator.
#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub value: Matrix,
    pub grad: Matrix,
}

impl Param {
    pub fn new(name: impl Into<String>, value: Matrix) -> Self {
        let grad = Matrix::zeros(value.rows(), value.cols());
        Param { name: name.into(), value, grad }
    }

    pub fn zero_grad(&mut self) {
        self.grad.fill(0.0);
    }
}

/// Glorot-uniform init: U(-lim, lim) with lim = sqrt(6 / (fan_in + fan_out)),
/// fans taken as the stored matrix dimensions.
pub fn glorot_uniform(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let lim = (6.0 / (rows + cols) as f64).sqrt();
    let mut m = Matrix::zeros(rows, cols);
    for v in m.as_mut_slice() {
        *v = rng.random_range(-lim..lim);
    }
    m
}

#[inline]
pub fn sigmoid(v: f64) -> f64 {
    1.0 / (1.0 + (-v).exp())
}

/// softsign(v) = v / (1 + |v|), the squash used in place of tanh.
#[inline]
pub fn softsign(v: f64) -> f64 {
    v / (1.0 + v.abs())
}

/// d softsign / dv expressed through the output: (1 - |softsign(v)|)^2.
#[inline]
fn softsign_deriv_from_out(s: f64) -> f64 {
    let t = 1.0 - s.abs();
    t * t
}

// ---------------------------------------------------------------------------
// Dense
// ---------------------------------------------------------------------------

/// Per-timestep affine map: y[t] = x[t] . W + b, no activation.
#[derive(Debug, Clone)]
pub struct Dense {
    pub w: Param, // in_dim x out_dim
    pub b: Param, // 1 x out_dim
}

pub struct DenseCache {
    input: Matrix,
}

#[derive(Debug, Clone)]
pub struct DenseGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl Dense {
    pub fn new(prefix: &str, in_dim: usize, out_dim: usize, rng: &mut ChaCha8Rng) -> Self {
        Dense {
            w: Param::new(format!("{prefix}.w"), glorot_uniform(in_dim, out_dim, rng)),
            b: Param::new(format!("{prefix}.b"), Matrix::zeros(1, out_dim)),
        }
    }

    pub fn in_dim(&self) -> usize {
        self.w.value.rows()
    }

    pub fn out_dim(&self) -> usize {
        self.w.value.cols()
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, DenseCache), NnError> {
        if x.cols() != self.in_dim() {
            return Err(NnError::ShapeMismatch(format!(
                "dense: input has {} features, weight expects {}",
                x.cols(),
                self.in_dim()
            )));
        }
        let mut y = Matrix::zeros(x.rows(), self.out_dim());
        for t in 0..x.rows() {
            let yr = y.row_mut(t);
            yr.copy_from_slice(self.b.value.row(0));
            addmv(yr, x.row(t), &self.w.value);
        }
        Ok((y, DenseCache { input: x.clone() }))
    }

    pub fn zero_grads(&self) -> DenseGrads {
        DenseGrads {
            w: Matrix::zeros(self.w.value.rows(), self.w.value.cols()),
            b: Matrix::zeros(1, self.out_dim()),
        }
    }

    /// Accumulates parameter gradients into `g` and returns dL/dx.
    pub fn backward(&self, cache: &DenseCache, dy: &Matrix, g: &mut DenseGrads) -> Matrix {
        let x = &cache.input;
        let mut dx = Matrix::zeros(x.rows(), x.cols());
        for t in 0..x.rows() {
            let dyr = dy.row(t);
            add_outer(&mut g.w, x.row(t), dyr);
            for (bj, dj) in g.b.row_mut(0).iter_mut().zip(dyr) {
                *bj += dj;
            }
            mv_transposed(dx.row_mut(t), dyr, &self.w.value);
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// LSTM
// ---------------------------------------------------------------------------

/// LSTM with sigmoid gates and softsign in place of tanh for the candidate
/// and the cell-output squash. Gate weights are one (D+U) x 4U matrix with
/// column blocks ordered [input, forget, candidate, output].
#[derive(Debug, Clone)]
pub struct Lstm {
    pub w: Param, // (in_dim + units) x 4*units
    pub b: Param, // 1 x 4*units
    in_dim: usize,
    units: usize,
    return_sequence: bool,
}

pub struct LstmCache {
    input: Matrix,
    gates: Matrix,   // T x 4U, post-activation [i f g o]
    cells: Matrix,   // T x U, c_t
    squash: Matrix,  // T x U, softsign(c_t)
    hidden: Matrix,  // T x U, h_t
}

#[derive(Debug, Clone)]
pub struct LstmGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl Lstm {
    pub fn new(
        prefix: &str,
        in_dim: usize,
        units: usize,
        return_sequence: bool,
        rng: &mut ChaCha8Rng,
    ) -> Self {
        let w = glorot_uniform(in_dim + units, 4 * units, rng);
        // Forget-gate bias starts at 1 so early training keeps cell memory.
        let mut b = Matrix::zeros(1, 4 * units);
        for u in 0..units {
            b.set(0, units + u, 1.0);
        }
        Lstm {
            w: Param::new(format!("{prefix}.w"), w),
            b: Param::new(format!("{prefix}.b"), b),
            in_dim,
            units,
            return_sequence,
        }
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn in_dim(&self) -> usize {
        self.in_dim
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, LstmCache), NnError> {
        if x.cols() != self.in_dim {
            return Err(NnError::ShapeMismatch(format!(
                "lstm: input has {} features, expected {}",
                x.cols(),
                self.in_dim
            )));
        }
        let steps = x.rows();
        let u = self.units;
        let mut gates = Matrix::zeros(steps, 4 * u);
        let mut cells = Matrix::zeros(steps, u);
        let mut squash = Matrix::zeros(steps, u);
        let mut hidden = Matrix::zeros(steps, u);
        let mut concat = vec![0.0; self.in_dim + u];
        let mut c_prev = vec![0.0; u];

        for t in 0..steps {
            concat[..self.in_dim].copy_from_slice(x.row(t));
            if t == 0 {
                concat[self.in_dim..].fill(0.0);
            } else {
                concat[self.in_dim..].copy_from_slice(hidden.row(t - 1));
            }
            let z = gates.row_mut(t);
            z.copy_from_slice(self.b.value.row(0));
            addmv(z, &concat, &self.w.value);
            for j in 0..u {
                z[j] = sigmoid(z[j]); // input gate
                z[u + j] = sigmoid(z[u + j]); // forget gate
                z[2 * u + j] = softsign(z[2 * u + j]); // candidate
                z[3 * u + j] = sigmoid(z[3 * u + j]); // output gate
            }
            let c_row = cells.row_mut(t);
            for j in 0..u {
                c_row[j] = z[u + j] * c_prev[j] + z[j] * z[2 * u + j];
            }
            c_prev.copy_from_slice(c_row);
            let s_row = squash.row_mut(t);
            for j in 0..u {
                s_row[j] = softsign(cells.get(t, j));
            }
            let h_row = hidden.row_mut(t);
            for j in 0..u {
                h_row[j] = gates.get(t, 3 * u + j) * squash.get(t, j);
            }
        }

        let out = if self.return_sequence {
            hidden.clone()
        } else {
            Matrix::from_vec(1, u, hidden.row(steps - 1).to_vec())
        };
        Ok((out, LstmCache { input: x.clone(), gates, cells, squash, hidden }))
    }

    pub fn zero_grads(&self) -> LstmGrads {
        LstmGrads {
            w: Matrix::zeros(self.w.value.rows(), self.w.value.cols()),
            b: Matrix::zeros(1, 4 * self.units),
        }
    }

    /// Backpropagation through time. `dy` is T x U when the layer returned a
    /// sequence, 1 x U otherwise. Returns dL/dx (T x D).
    pub fn backward(&self, cache: &LstmCache, dy: &Matrix, g: &mut LstmGrads) -> Matrix {
        let steps = cache.input.rows();
        let u = self.units;
        let d = self.in_dim;
        let mut dx = Matrix::zeros(steps, d);
        let mut dh_next = vec![0.0; u];
        let mut dc_next = vec![0.0; u];
        // Pre-activation gate gradients for every step; the weight gradient
        // is accumulated from them in one pass after the recurrence.
        let mut dzs = Matrix::zeros(steps, 4 * u);
        let mut da = vec![0.0; d + u];

        for t in (0..steps).rev() {
            let z = cache.gates.row(t);
            // Upstream gradient reaching h_t.
            let mut dh = dh_next.clone();
            if self.return_sequence {
                for (a, b) in dh.iter_mut().zip(dy.row(t)) {
                    *a += b;
                }
            } else if t == steps - 1 {
                for (a, b) in dh.iter_mut().zip(dy.row(0)) {
                    *a += b;
                }
            }

            let dz = dzs.row_mut(t);
            for j in 0..u {
                let i = z[j];
                let f = z[u + j];
                let gc = z[2 * u + j];
                let o = z[3 * u + j];
                let s = cache.squash.get(t, j);
                let c_prev = if t == 0 { 0.0 } else { cache.cells.get(t - 1, j) };

                let d_o = dh[j] * s;
                let d_s = dh[j] * o;
                let d_c = dc_next[j] + d_s * softsign_deriv_from_out(s);
                let d_i = d_c * gc;
                let d_g = d_c * i;
                let d_f = d_c * c_prev;
                dc_next[j] = d_c * f;

                dz[j] = d_i * i * (1.0 - i);
                dz[u + j] = d_f * f * (1.0 - f);
                dz[2 * u + j] = d_g * softsign_deriv_from_out(gc);
                dz[3 * u + j] = d_o * o * (1.0 - o);
            }

            mv_transposed(&mut da, dzs.row(t), &self.w.value);
            dx.row_mut(t).copy_from_slice(&da[..d]);
            dh_next.copy_from_slice(&da[d..]);
        }

        // dW[i][j] = sum_t concat[t][i] * dz[t][j], concat = [x_t, h_{t-1}].
        for i in 0..d {
            let row = g.w.row_mut(i);
            for t in 0..steps {
                let xi = cache.input.get(t, i);
                if xi == 0.0 {
                    continue;
                }
                for (wj, dj) in row.iter_mut().zip(dzs.row(t)) {
                    *wj += xi * dj;
                }
            }
        }
        for i in 0..u {
            let row = g.w.row_mut(d + i);
            for t in 1..steps {
                let hi = cache.hidden.get(t - 1, i);
                if hi == 0.0 {
                    continue;
                }
                for (wj, dj) in row.iter_mut().zip(dzs.row(t)) {
                    *wj += hi * dj;
                }
            }
        }
        let db = g.b.row_mut(0);
        for t in 0..steps {
            for (bj, dj) in db.iter_mut().zip(dzs.row(t)) {
                *bj += dj;
            }
        }
        dx
    }
}

// ---------------------------------------------------------------------------
// Conv1d
// ---------------------------------------------------------------------------

/// Width-2, stride-1 temporal convolution with causal zero padding (one zero
/// row prepended), so output length equals input length:
/// y[t,k] = act(sum_c x[t-1,c] w0[c,k] + x[t,c] w1[c,k] + b[k]).
/// The kernel is stored as a (2*in_ch) x kernels matrix, tap-major.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: Param, // (2*in_ch) x kernels
    pub b: Param, // 1 x kernels
    in_ch: usize,
    kernels: usize,
    relu: bool,
}

pub struct Conv1dCache {
    input: Matrix,
    output: Matrix,
}

#[derive(Debug, Clone)]
pub struct Conv1dGrads {
    pub w: Matrix,
    pub b: Matrix,
}

impl Conv1d {
    pub fn new(prefix: &str, in_ch: usize, kernels: usize, relu: bool, rng: &mut ChaCha8Rng) -> Self {
        Conv1d {
            w: Param::new(format!("{prefix}.w"), glorot_uniform(2 * in_ch, kernels, rng)),
            b: Param::new(format!("{prefix}.b"), Matrix::zeros(1, kernels)),
            in_ch,
            kernels,
            relu,
        }
    }

    pub fn in_ch(&self) -> usize {
        self.in_ch
    }

    pub fn kernels(&self) -> usize {
        self.kernels
    }

    pub fn forward(&self, x: &Matrix) -> Result<(Matrix, Conv1dCache), NnError> {
        if x.cols() != self.in_ch {
            return Err(NnError::ShapeMismatch(format!(
                "conv1d: input has {} channels, expected {}",
                x.cols(),
                self.in_ch
            )));
        }
        let steps = x.rows();
        let k = self.kernels;
        let (w0, w1) = self.taps();
        let mut y = Matrix::zeros(steps, k);
        for t in 0..steps {
            let yr = y.row_mut(t);
            yr.copy_from_slice(self.b.value.row(0));
            if t > 0 {
                addmv(yr, x.row(t - 1), &w0);
            }
            addmv(yr, x.row(t), &w1);
            if self.relu {
                for v in yr.iter_mut() {
                    if *v < 0.0 {
                        *v = 0.0;
                    }
                }
            }
        }
        let cache = Conv1dCache { input: x.clone(), output: y.clone() };
        Ok((y, cache))
    }

    /// Split the stored kernel into its two taps (previous row, current row).
    fn taps(&self) -> (Matrix, Matrix) {
        let c = self.in_ch;
        let k = self.kernels;
        let mut w0 = Matrix::zeros(c, k);
        let mut w1 = Matrix::zeros(c, k);
        for ch in 0..c {
            w0.row_mut(ch).copy_from_slice(self.w.value.row(ch));
            w1.row_mut(ch).copy_from_slice(self.w.value.row(c + ch));
        }
        (w0, w1)
    }

    pub fn zero_grads(&self) -> Conv1dGrads {
        Conv1dGrads {
            w: Matrix::zeros(2 * self.in_ch, self.kernels),
            b: Matrix::zeros(1, self.kernels),
        }
    }

    pub fn backward(&self, cache: &Conv1dCache, dy: &Matrix, g: &mut Conv1dGrads) -> Matrix {
        let steps = cache.input.rows();
        let c = self.in_ch;
        let k = self.kernels;
        let (w0, w1) = self.taps();

        // dv = dy gated by the activation.
        let mut dv = Matrix::zeros(steps, k);
        for t in 0..steps {
            let dvr = dv.row_mut(t);
            dvr.copy_from_slice(dy.row(t));
            if self.relu {
                for (vj, yj) in dvr.iter_mut().zip(cache.output.row(t)) {
                    if *yj <= 0.0 {
                        *vj = 0.0;
                    }
                }
            }
        }

        let mut dx = Matrix::zeros(steps, c);
        for t in 0..steps {
            let dvr = dv.row(t);
            if t > 0 {
                // Gradient for tap 0 and its contribution to dx[t-1].
                for ch in 0..c {
                    let xi = cache.input.get(t - 1, ch);
                    let row = g.w.row_mut(ch);
                    for (wj, dj) in row.iter_mut().zip(dvr) {
                        *wj += xi * dj;
                    }
                }
            }
            for ch in 0..c {
                let xi = cache.input.get(t, ch);
                let row = g.w.row_mut(c + ch);
                for (wj, dj) in row.iter_mut().zip(dvr) {
                    *wj += xi * dj;
                }
            }
            for (bj, dj) in g.b.row_mut(0).iter_mut().zip(dvr) {
                *bj += dj;
            }
            // dx[t] gets tap-1 flow now and tap-0 flow from t+1 below.
            let mut row = vec![0.0; c];
            mv_transposed(&mut row, dvr, &w1);
            for (a, b) in dx.row_mut(t).iter_mut().zip(&row) {
                *a += b;
            }
            if t + 1 < steps {
                mv_transposed(&mut row, dv.row(t + 1), &w0);
                for (a, b) in dx.row_mut(t).iter_mut().zip(&row) {
                    *a += b;
                }
            }
        }
        dx
    }
}
