//! Single-layer LSTM with a linear scalar readout, trained by full
//! backpropagation through time.
//!
//! Per step, with `z = [h_{t-1}, x_t]`:
//!
//! ```text
//! f = sigmoid(W_f z + b_f)      i = sigmoid(W_i z + b_i)
//! g = tanh(W_C z + b_C)         o = sigmoid(W_o z + b_o)
//! C_t = f * C_{t-1} + i * g     h_t = o * tanh(C_t)
//! ```
//!
//! and the prediction is `W_out h_T + b_out`.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::EstrusError;

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// Weights, biases and readout. Gate matrices are `hidden x (hidden + input)`,
/// row-major, acting on `[h_{t-1}, x_t]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input_size: usize,
    pub hidden_size: usize,
    pub w_forget: Vec<f64>,
    pub w_input: Vec<f64>,
    pub w_cell: Vec<f64>,
    pub w_output: Vec<f64>,
    pub b_forget: Vec<f64>,
    pub b_input: Vec<f64>,
    pub b_cell: Vec<f64>,
    pub b_output: Vec<f64>,
    pub w_out: Vec<f64>,
    pub b_out: Vec<f64>,
}

/// Gradient buffers share the model's layout.
pub type LstmGradients = LstmModel;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmModel {
    pub fn zeros(input_size: usize, hidden_size: usize) -> Self {
        let m = hidden_size * (hidden_size + input_size);
        let h = hidden_size;
        Self {
            input_size,
            hidden_size,
            w_forget: vec![0.0; m],
            w_input: vec![0.0; m],
            w_cell: vec![0.0; m],
            w_output: vec![0.0; m],
            b_forget: vec![0.0; h],
            b_input: vec![0.0; h],
            b_cell: vec![0.0; h],
            b_output: vec![0.0; h],
            w_out: vec![0.0; h],
            b_out: vec![0.0],
        }
    }

    /// Uniform `(-1/sqrt(H), 1/sqrt(H))` weights, forget bias 1, zero readout bias.
    pub fn random(input_size: usize, hidden_size: usize, rng: &mut impl Rng) -> Self {
        let mut m = Self::zeros(input_size, hidden_size);
        let k = 1.0 / (hidden_size as f64).sqrt();
        for t in m.tensors_mut() {
            t.iter_mut().for_each(|v| *v = rng.gen_range(-k..k));
        }
        m.b_forget.fill(1.0);
        m.b_out.fill(0.0);
        m
    }

    pub fn tensors(&self) -> [&Vec<f64>; 10] {
        [
            &self.w_forget,
            &self.w_input,
            &self.w_cell,
            &self.w_output,
            &self.b_forget,
            &self.b_input,
            &self.b_cell,
            &self.b_output,
            &self.w_out,
            &self.b_out,
        ]
    }

    pub fn tensors_mut(&mut self) -> [&mut Vec<f64>; 10] {
        [
            &mut self.w_forget,
            &mut self.w_input,
            &mut self.w_cell,
            &mut self.w_output,
            &mut self.b_forget,
            &mut self.b_input,
            &mut self.b_cell,
            &mut self.b_output,
            &mut self.w_out,
            &mut self.b_out,
        ]
    }

    pub fn n_params(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.tensors().iter().all(|t| t.iter().all(|v| v.is_finite()))
    }

    pub fn check_shapes(&self) -> bool {
        let h = self.hidden_size;
        let m = h * (h + self.input_size);
        let t = self.tensors();
        t[..4].iter().all(|w| w.len() == m) && t[4..9].iter().all(|b| b.len() == h) && self.b_out.len() == 1
    }

    fn zeroed_like(&self) -> Self {
        Self::zeros(self.input_size, self.hidden_size)
    }

    fn check_sequence(&self, sequence: &[Vec<f64>]) -> Result<(), EstrusError> {
        match sequence.iter().find(|x| x.len() != self.input_size) {
            Some(x) => Err(EstrusError::ShapeMismatch {
                expected: self.input_size,
                found: x.len(),
            }),
            None if sequence.is_empty() => Err(EstrusError::ShapeMismatch {
                expected: self.input_size,
                found: 0,
            }),
            None => Ok(()),
        }
    }
}

struct Step {
    z: Vec<f64>,
    f: Vec<f64>,
    i: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c_prev: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// `out[r] = b[r] + sum_j w[r, j] z[j]`
fn affine(w: &[f64], b: &[f64], z: &[f64], out: &mut [f64]) {
    let cols = z.len();
    for (r, o) in out.iter_mut().enumerate() {
        let row = &w[r * cols..(r + 1) * cols];
        *o = b[r] + row.iter().zip(z).map(|(a, b)| a * b).sum::<f64>();
    }
}

fn run(model: &LstmModel, sequence: &[Vec<f64>], mut cache: Option<&mut Vec<Step>>) -> (f64, LstmState) {
    let hsz = model.hidden_size;
    let mut h = vec![0.0; hsz];
    let mut c = vec![0.0; hsz];
    let mut f = vec![0.0; hsz];
    let mut i = vec![0.0; hsz];
    let mut g = vec![0.0; hsz];
    let mut o = vec![0.0; hsz];
    let mut z = vec![0.0; hsz + model.input_size];
    for x in sequence {
        z[..hsz].copy_from_slice(&h);
        z[hsz..].copy_from_slice(x);
        affine(&model.w_forget, &model.b_forget, &z, &mut f);
        affine(&model.w_input, &model.b_input, &z, &mut i);
        affine(&model.w_cell, &model.b_cell, &z, &mut g);
        affine(&model.w_output, &model.b_output, &z, &mut o);
        f.iter_mut().for_each(|v| *v = sigmoid(*v));
        i.iter_mut().for_each(|v| *v = sigmoid(*v));
        g.iter_mut().for_each(|v| *v = v.tanh());
        o.iter_mut().for_each(|v| *v = sigmoid(*v));
        let c_prev = cache.as_ref().map(|_| c.clone());
        let mut tanh_c = vec![0.0; hsz];
        for k in 0..hsz {
            c[k] = f[k] * c[k] + i[k] * g[k];
            tanh_c[k] = c[k].tanh();
            h[k] = o[k] * tanh_c[k];
        }
        if let Some(steps) = cache.as_deref_mut() {
            steps.push(Step {
                z: z.clone(),
                f: f.clone(),
                i: i.clone(),
                g: g.clone(),
                o: o.clone(),
                c_prev: c_prev.expect("cached"),
                tanh_c,
            });
        }
    }
    let y = model.b_out[0] + model.w_out.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>();
    (y, LstmState { h, c })
}

/// Runs the recurrence from zero state and returns the readout and final state.
pub fn lstm_forward(model: &LstmModel, sequence: &[Vec<f64>]) -> Result<(f64, LstmState), EstrusError> {
    model.check_sequence(sequence)?;
    Ok(run(model, sequence, None))
}

/// Accumulates `d loss / d params` into `grads` for loss `(y - target)^2 * scale`.
/// Returns the unscaled squared error.
fn backprop(model: &LstmModel, sequence: &[Vec<f64>], target: f64, scale: f64, grads: &mut LstmGradients) -> f64 {
    let hsz = model.hidden_size;
    let cols = hsz + model.input_size;
    let mut steps = Vec::with_capacity(sequence.len());
    let (y, state) = run(model, sequence, Some(&mut steps));
    let err = y - target;
    let dy = 2.0 * err * scale;

    grads.b_out[0] += dy;
    for k in 0..hsz {
        grads.w_out[k] += dy * state.h[k];
    }
    let mut dh: Vec<f64> = model.w_out.iter().map(|w| w * dy).collect();
    let mut dc = vec![0.0; hsz];
    let mut da = [vec![0.0; hsz], vec![0.0; hsz], vec![0.0; hsz], vec![0.0; hsz]];

    for step in steps.iter().rev() {
        for k in 0..hsz {
            let do_ = dh[k] * step.tanh_c[k];
            dc[k] += dh[k] * step.o[k] * (1.0 - step.tanh_c[k] * step.tanh_c[k]);
            let df = dc[k] * step.c_prev[k];
            let di = dc[k] * step.g[k];
            let dg = dc[k] * step.i[k];
            da[0][k] = df * step.f[k] * (1.0 - step.f[k]);
            da[1][k] = di * step.i[k] * (1.0 - step.i[k]);
            da[2][k] = dg * (1.0 - step.g[k] * step.g[k]);
            da[3][k] = do_ * step.o[k] * (1.0 - step.o[k]);
            dc[k] *= step.f[k];
        }
        let mut dz = vec![0.0; cols];
        let gate_grads = [
            (&mut grads.w_forget, &mut grads.b_forget, &model.w_forget),
            (&mut grads.w_input, &mut grads.b_input, &model.w_input),
            (&mut grads.w_cell, &mut grads.b_cell, &model.w_cell),
            (&mut grads.w_output, &mut grads.b_output, &model.w_output),
        ];
        for ((gw, gb, w), a) in gate_grads.into_iter().zip(&da) {
            for r in 0..hsz {
                let ar = a[r];
                if ar == 0.0 {
                    continue;
                }
                gb[r] += ar;
                let grow = &mut gw[r * cols..(r + 1) * cols];
                let wrow = &w[r * cols..(r + 1) * cols];
                for j in 0..cols {
                    grow[j] += ar * step.z[j];
                    dz[j] += ar * wrow[j];
                }
            }
        }
        dh.copy_from_slice(&dz[..hsz]);
    }
    err * err
}

/// Analytic gradient of `(y - target)^2` for one sequence.
pub fn lstm_gradient(
    model: &LstmModel,
    sequence: &[Vec<f64>],
    target: f64,
) -> Result<(f64, LstmGradients), EstrusError> {
    model.check_sequence(sequence)?;
    let mut grads = model.zeroed_like();
    let loss = backprop(model, sequence, target, 1.0, &mut grads);
    Ok((loss, grads))
}

/// Max relative error between the analytic gradient and a five-point central
/// difference with step `epsilon`, over every parameter. A step near `1e-3`
/// balances truncation against rounding.
pub fn gradient_check(model: &LstmModel, sequence: &[Vec<f64>], target: f64, epsilon: f64) -> Result<f64, EstrusError> {
    gradient_check_with(model, sequence, target, epsilon, |_| {})
}

/// [`gradient_check`] with a hook that may alter the analytic gradient before
/// comparison (for mutation testing).
pub fn gradient_check_with(
    model: &LstmModel,
    sequence: &[Vec<f64>],
    target: f64,
    epsilon: f64,
    tamper: impl FnOnce(&mut LstmGradients),
) -> Result<f64, EstrusError> {
    let (_, mut analytic) = lstm_gradient(model, sequence, target)?;
    tamper(&mut analytic);
    let loss = |m: &LstmModel| {
        let (y, _) = run(m, sequence, None);
        (y - target) * (y - target)
    };
    let mut probe = model.clone();
    let mut worst: f64 = 0.0;
    for t in 0..10 {
        for j in 0..model.tensors()[t].len() {
            let orig = model.tensors()[t][j];
            let mut at = |step: f64| {
                probe.tensors_mut()[t][j] = orig + step * epsilon;
                let l = loss(&probe);
                probe.tensors_mut()[t][j] = orig;
                l
            };
            let numeric = (at(-2.0) - 8.0 * at(-1.0) + 8.0 * at(1.0) - at(2.0)) / (12.0 * epsilon);
            let a = analytic.tensors()[t][j];
            let rel = (a - numeric).abs() / a.abs().max(numeric.abs()).max(1e-8);
            worst = worst.max(rel);
        }
    }
    Ok(worst)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LstmConfig {
    pub hidden_size: usize,
    /// Upper bound on epochs; training stops earlier on a plateau.
    pub epochs: usize,
    pub learning_rate: f64,
    /// Global gradient-norm clip.
    pub clip_norm: f64,
    pub batch_size: usize,
    /// Epochs without improvement before stopping.
    pub patience: usize,
    /// Improvement smaller than this does not reset patience.
    pub min_delta: f64,
    pub seed: u64,
}

impl Default for LstmConfig {
    fn default() -> Self {
        Self {
            hidden_size: 32,
            epochs: 2000,
            learning_rate: 1e-3,
            clip_norm: 5.0,
            batch_size: 32,
            patience: 50,
            min_delta: 1e-6,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: LstmModel,
    /// Mean squared error of the final model over all training sequences.
    pub final_loss: f64,
    pub epochs_run: usize,
}

struct Adam {
    m: LstmModel,
    v: LstmModel,
    t: i32,
}

impl Adam {
    const BETA1: f64 = 0.9;
    const BETA2: f64 = 0.999;
    const EPS: f64 = 1e-8;

    fn step(&mut self, model: &mut LstmModel, grads: &LstmGradients, lr: f64) {
        self.t += 1;
        let c1 = 1.0 - Self::BETA1.powi(self.t);
        let c2 = 1.0 - Self::BETA2.powi(self.t);
        let params = model.tensors_mut();
        let ms = self.m.tensors_mut();
        let vs = self.v.tensors_mut();
        for (((p, g), m), v) in params.into_iter().zip(grads.tensors()).zip(ms).zip(vs) {
            for j in 0..p.len() {
                m[j] = Self::BETA1 * m[j] + (1.0 - Self::BETA1) * g[j];
                v[j] = Self::BETA2 * v[j] + (1.0 - Self::BETA2) * g[j] * g[j];
                p[j] -= lr * (m[j] / c1) / ((v[j] / c2).sqrt() + Self::EPS);
            }
        }
    }
}

fn add_into(acc: &mut LstmModel, other: &LstmModel) {
    for (a, b) in acc.tensors_mut().into_iter().zip(other.tensors()) {
        a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
    }
}

fn clip(grads: &mut LstmGradients, max_norm: f64) {
    let norm = grads
        .tensors()
        .iter()
        .flat_map(|t| t.iter())
        .map(|v| v * v)
        .sum::<f64>()
        .sqrt();
    if max_norm > 0.0 && norm > max_norm {
        let s = max_norm / norm;
        for t in grads.tensors_mut() {
            t.iter_mut().for_each(|v| *v *= s);
        }
    }
}

/// Mean squared error of `model` over the given sequences.
pub fn mean_squared_error(model: &LstmModel, inputs: &[Vec<Vec<f64>>], targets: &[f64]) -> f64 {
    let errs: Vec<f64> = inputs
        .par_iter()
        .zip(targets)
        .map(|(x, t)| {
            let (y, _) = run(model, x, None);
            (y - t) * (y - t)
        })
        .collect();
    errs.iter().sum::<f64>() / errs.len().max(1) as f64
}

/// Mini-batch Adam on the mean squared error. Per-sequence gradients may be
/// computed in parallel but are summed in a fixed order, so the result
/// depends only on `(inputs, targets, config)`.
pub fn lstm_train(inputs: &[Vec<Vec<f64>>], targets: &[f64], config: &LstmConfig) -> Result<TrainOutcome, EstrusError> {
    if inputs.is_empty() || inputs.len() != targets.len() {
        return Err(EstrusError::NoSequences);
    }
    let input_size = inputs[0].first().map_or(0, Vec::len);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut model = LstmModel::random(input_size, config.hidden_size, &mut rng);
    for x in inputs {
        model.check_sequence(x)?;
    }
    let mut adam = Adam {
        m: model.zeroed_like(),
        v: model.zeroed_like(),
        t: 0,
    };
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let batch = config.batch_size.max(1);

    let mut best = f64::INFINITY;
    let mut since_best = 0;
    let mut epochs_run = 0;
    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for chunk in order.chunks(batch) {
            let scale = 1.0 / chunk.len() as f64;
            let parts: Vec<(f64, LstmGradients)> = chunk
                .par_iter()
                .map(|&k| {
                    let mut g = model.zeroed_like();
                    let l = backprop(&model, &inputs[k], targets[k], scale, &mut g);
                    (l, g)
                })
                .collect();
            let mut grads = model.zeroed_like();
            for (l, g) in &parts {
                epoch_loss += l;
                add_into(&mut grads, g);
            }
            clip(&mut grads, config.clip_norm);
            adam.step(&mut model, &grads, config.learning_rate);
        }
        epoch_loss /= inputs.len() as f64;
        epochs_run = epoch + 1;
        if !epoch_loss.is_finite() || !model.is_finite() {
            return Err(EstrusError::DivergedLoss { epoch });
        }
        if epoch_loss < best - config.min_delta {
            best = epoch_loss;
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= config.patience {
                break;
            }
        }
    }
    let final_loss = mean_squared_error(&model, inputs, targets);
    if !final_loss.is_finite() {
        return Err(EstrusError::DivergedLoss { epoch: epochs_run });
    }
    Ok(TrainOutcome {
        model,
        final_loss,
        epochs_run,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn random_sequence(rng: &mut impl Rng, len: usize, width: usize) -> Vec<Vec<f64>> {
        (0..len)
            .map(|_| (0..width).map(|_| rng.gen_range(0.0..1.0)).collect())
            .collect()
    }

    #[test]
    fn zero_model_outputs_zero() {
        let m = LstmModel::zeros(5, 4);
        let seq = vec![vec![0.3, 0.1, 0.9, 0.2, 0.5]; 6];
        let (y, st) = lstm_forward(&m, &seq).unwrap();
        assert_eq!(y, 0.0);
        assert!(st.c.iter().all(|&c| c == 0.0));
        assert!(st.h.iter().all(|&h| h == 0.0));
    }

    #[test]
    fn saturated_forget_gate_keeps_empty_cell() {
        let mut m = LstmModel::zeros(5, 3);
        m.b_forget.fill(1e6);
        let seq = vec![vec![1.0; 5]; 10];
        let (_, st) = lstm_forward(&m, &seq).unwrap();
        assert!(st.c.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn hidden_state_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = LstmModel::random(5, 8, &mut rng);
        let seq: Vec<Vec<f64>> = (0..50)
            .map(|_| (0..5).map(|_| rng.gen_range(-100.0..100.0)).collect())
            .collect();
        let (_, st) = lstm_forward(&m, &seq).unwrap();
        assert!(st.h.iter().all(|h| h.abs() < 1.0));
    }

    #[test]
    fn shape_mismatch_rejected() {
        let m = LstmModel::zeros(5, 2);
        assert!(matches!(
            lstm_forward(&m, &[vec![0.0; 4]]),
            Err(EstrusError::ShapeMismatch { expected: 5, found: 4 })
        ));
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let m = LstmModel::random(5, 4, &mut rng);
        let seq = random_sequence(&mut rng, 8, 5);
        let err = gradient_check(&m, &seq, 0.3, 1e-3).unwrap();
        assert!(err < 1e-4, "max relative error {err}");
    }

    #[test]
    fn corrupted_gradient_detected() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let m = LstmModel::random(5, 4, &mut rng);
        let seq = random_sequence(&mut rng, 8, 5);
        let err = gradient_check_with(&m, &seq, 0.3, 1e-3, |g| g.w_forget.iter_mut().for_each(|v| *v *= 2.0)).unwrap();
        assert!(err > 1e-2, "mutation went unnoticed: {err}");
    }

    #[test]
    fn zero_model_gradient_check_is_defined() {
        let m = LstmModel::zeros(5, 3);
        let seq = vec![vec![0.5; 5]; 4];
        let err = gradient_check(&m, &seq, 0.7, 1e-3).unwrap();
        assert!(err.is_finite() && err < 1e-4, "{err}");
    }

    #[test]
    fn learns_constant_target() {
        let inputs: Vec<Vec<Vec<f64>>> = (0..64).map(|_| vec![vec![0.2, 0.4, 0.6, 0.8, 1.0]; 6]).collect();
        let targets = vec![0.5; 64];
        let cfg = LstmConfig {
            hidden_size: 4,
            epochs: 500,
            seed: 1,
            patience: 500,
            ..Default::default()
        };
        let out = lstm_train(&inputs, &targets, &cfg).unwrap();
        assert!(out.final_loss < 1e-4, "loss {}", out.final_loss);
        let again = lstm_train(&inputs, &targets, &cfg).unwrap();
        assert_eq!(out.final_loss, again.final_loss);
        assert_eq!(out.model, again.model);
    }
}
