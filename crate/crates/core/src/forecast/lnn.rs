//! LTC forecaster: LTC(n) → tanh → dense 10 → 5 → 1, trained once on the
//! pre-failure window and then run in pure streaming mode.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ltc::LtcCell;
use super::optim::Adam;
use super::{check_series, clip_global_norm, ForecastError, ForecasterConfig, MinMax};
use crate::seed::derive_seed;

pub const HEAD_WIDTHS: [usize; 3] = [10, 5, 1];

/// Outcome of [`LtcModel::fit`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: usize,
    /// Mean training loss per epoch (normalized units).
    pub loss_history: Vec<f64>,
    /// MSE of the final evaluation pass over all training windows (normalized units).
    pub final_mse: f64,
    /// Denormalized predictions of the final pass, one per training window.
    pub predictions: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LtcModel {
    cell: LtcCell,
    head_widths: Vec<usize>,
    head: Vec<f64>,
    p: usize,
    norm: Option<MinMax>,
    state: Vec<f64>,
    report: Option<TrainReport>,
}

/// A single supervised sample with an explicit starting state.
#[derive(Debug, Clone)]
pub struct GradSample {
    pub state: Vec<f64>,
    pub window: Vec<f64>,
    pub target: f64,
}

/// Activations recorded by the forward pass.
struct Tape {
    /// States before each sub-step plus the final one.
    xs: Vec<f64>,
    fs: Vec<f64>,
    ds: Vec<f64>,
    /// Head inputs: tanh(x) followed by each layer's output.
    acts: Vec<Vec<f64>>,
}

impl Tape {
    fn new(n: usize, p: usize, unfold: usize, widths: &[usize]) -> Self {
        let subs = p * unfold;
        let mut acts = vec![vec![0.0; n]];
        acts.extend(widths.iter().map(|&w| vec![0.0; w]));
        Self { xs: vec![0.0; (subs + 1) * n], fs: vec![0.0; subs * n], ds: vec![0.0; subs * n], acts }
    }
}

fn head_param_count(n: usize, widths: &[usize]) -> usize {
    let mut fan_in = n;
    let mut total = 0;
    for &w in widths {
        total += w * fan_in + w;
        fan_in = w;
    }
    total
}

impl LtcModel {
    /// Untrained model with the standard head, initialised from `cfg.seed`.
    pub fn new(cfg: &ForecasterConfig) -> Self {
        Self::with_dims(cfg.hidden, &HEAD_WIDTHS, cfg.p, cfg.unfold_steps, cfg.seed)
    }

    pub fn with_dims(hidden: usize, head_widths: &[usize], p: usize, unfold_steps: usize, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "ltc-init"));
        let cell = LtcCell::random(hidden, 1, unfold_steps, 1.0 / unfold_steps as f64, &mut rng);
        let mut head = Vec::with_capacity(head_param_count(hidden, head_widths));
        let mut fan_in = hidden;
        for &w in head_widths {
            let limit = (6.0 / (fan_in + w) as f64).sqrt();
            head.extend((0..w * fan_in).map(|_| rng.gen_range(-limit..limit)));
            head.resize(head.len() + w, 0.0);
            fan_in = w;
        }
        Self { cell, head_widths: head_widths.to_vec(), head, p, norm: None, state: vec![0.0; hidden], report: None }
    }

    /// Builds and trains a model on the first `cfg.train_steps` values.
    pub fn train(values: &[f64], cfg: &ForecasterConfig) -> Result<Self, ForecastError> {
        let mut m = Self::new(cfg);
        m.fit(values, cfg)?;
        Ok(m)
    }

    pub fn cell(&self) -> &LtcCell {
        &self.cell
    }

    pub fn head_params(&self) -> &[f64] {
        &self.head
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn norm(&self) -> Option<&MinMax> {
        self.norm.as_ref()
    }

    pub fn state(&self) -> &[f64] {
        &self.state
    }

    pub fn report(&self) -> Option<&TrainReport> {
        self.report.as_ref()
    }

    pub fn is_trained(&self) -> bool {
        self.norm.is_some()
    }

    /// Zeroes the streaming hidden state.
    pub fn reset_state(&mut self) {
        self.state.fill(0.0);
    }

    /// Runs the window from `s0`; returns the readout.
    fn forward(&self, s0: &[f64], window: &[f64], tau: &[f64], tape: &mut Tape) -> f64 {
        let n = self.cell.hidden;
        let u = self.cell.unfold_steps;
        tape.xs[..n].copy_from_slice(s0);
        for (k, &v) in window.iter().enumerate() {
            for j in 0..u {
                let s = k * u + j;
                let (prev, next) = tape.xs.split_at_mut((s + 1) * n);
                next[..n].copy_from_slice(&prev[s * n..]);
                self.cell.substep(
                    &mut next[..n],
                    &[v],
                    tau,
                    &mut tape.fs[s * n..(s + 1) * n],
                    &mut tape.ds[s * n..(s + 1) * n],
                );
            }
        }
        let last = &tape.xs[window.len() * u * n..(window.len() * u + 1) * n];
        for (h, x) in tape.acts[0].iter_mut().zip(last) {
            *h = x.tanh();
        }
        let mut off = 0;
        let mut fan_in = n;
        for (l, &w) in self.head_widths.iter().enumerate() {
            let (weights, rest) = self.head[off..].split_at(w * fan_in);
            let bias = &rest[..w];
            let (ins, outs) = tape.acts.split_at_mut(l + 1);
            let input = &ins[l];
            for (o, out) in outs[0].iter_mut().enumerate() {
                let row = &weights[o * fan_in..(o + 1) * fan_in];
                *out = bias[o] + row.iter().zip(input).map(|(a, b)| a * b).sum::<f64>();
            }
            off += w * fan_in + w;
            fan_in = w;
        }
        tape.acts.last().expect("head has layers")[0]
    }

    /// Accumulates d(dy·y)/dθ into the two gradient buffers.
    fn backward(&self, tape: &Tape, window: &[f64], tau: &[f64], dy: f64, g_cell: &mut [f64], g_head: &mut [f64]) {
        let n = self.cell.hidden;
        let u = self.cell.unfold_steps;
        let layers = self.head_widths.len();
        let mut offs = Vec::with_capacity(layers);
        let mut fan_ins = Vec::with_capacity(layers);
        let mut off = 0;
        let mut fan_in = n;
        for &w in &self.head_widths {
            offs.push(off);
            fan_ins.push(fan_in);
            off += w * fan_in + w;
            fan_in = w;
        }
        let mut g_out = vec![dy];
        for l in (0..layers).rev() {
            let (w, fi, o) = (self.head_widths[l], fan_ins[l], offs[l]);
            let input = &tape.acts[l];
            let mut g_in = vec![0.0; fi];
            for r in 0..w {
                let g = g_out[r];
                for c in 0..fi {
                    g_head[o + r * fi + c] += g * input[c];
                    g_in[c] += self.head[o + r * fi + c] * g;
                }
                g_head[o + w * fi + r] += g;
            }
            g_out = g_in;
        }
        // through tanh
        let mut g: Vec<f64> = g_out.iter().zip(&tape.acts[0]).map(|(g, h)| g * (1.0 - h * h)).collect();
        let mut gz = vec![0.0; n];
        for s in (0..window.len() * u).rev() {
            let k = s / u;
            self.cell.substep_backward(
                &tape.xs[s * n..(s + 1) * n],
                &tape.xs[(s + 1) * n..(s + 2) * n],
                &tape.fs[s * n..(s + 1) * n],
                &tape.ds[s * n..(s + 1) * n],
                tau,
                &[window[k]],
                &mut g,
                g_cell,
                &mut gz,
            );
        }
    }

    fn tape(&self) -> Tape {
        Tape::new(self.cell.hidden, self.p, self.cell.unfold_steps, &self.head_widths)
    }

    /// Trains on the first `cfg.train_steps` values of `values`.
    ///
    /// Windows are visited in time order with a persistent state: each
    /// window starts from the state reached after the first input of the
    /// previous window, which is exactly how the model is fed when
    /// streaming. Gradients flow through the window only.
    pub fn fit(&mut self, values: &[f64], cfg: &ForecasterConfig) -> Result<&TrainReport, ForecastError> {
        check_series(values, cfg)?;
        if cfg.p != self.p {
            return Err(ForecastError::InvalidConfig("model and config disagree on p".into()));
        }
        let norm = MinMax::fit(&values[..cfg.train_steps]);
        let z: Vec<f64> = values[..cfg.train_steps].iter().map(|&v| norm.apply(v)).collect();
        let p = self.p;
        let n = self.cell.hidden;
        let u = self.cell.unfold_steps;
        let windows = cfg.train_steps - p;

        let mut adam_cell = Adam::new(self.cell.params().len());
        let mut adam_head = Adam::new(self.head.len());
        let mut g_cell = vec![0.0; self.cell.params().len()];
        let mut g_head = vec![0.0; self.head.len()];
        let mut tape = self.tape();
        let mut loss_history = Vec::with_capacity(cfg.epochs);

        for epoch in 0..cfg.epochs {
            let lr = cfg.lr_at(epoch);
            let mut s = vec![0.0; n];
            let mut epoch_loss = 0.0;
            let mut start = 0;
            while start < windows {
                let end = (start + cfg.batch_size).min(windows);
                let len = (end - start) as f64;
                g_cell.fill(0.0);
                g_head.fill(0.0);
                let tau = self.cell.tau();
                let mut batch_loss = 0.0;
                for i in start..end {
                    let window = &z[i..i + p];
                    let y = self.forward(&s, window, &tau, &mut tape);
                    let err = y - z[i + p];
                    batch_loss += err * err;
                    self.backward(&tape, window, &tau, 2.0 * err / len, &mut g_cell, &mut g_head);
                    s.copy_from_slice(&tape.xs[u * n..(u + 1) * n]);
                }
                let grad_norm = clip_global_norm(&mut [&mut g_cell, &mut g_head], cfg.grad_clip);
                if !batch_loss.is_finite() || !grad_norm.is_finite() {
                    return Err(ForecastError::Diverged { epoch, loss: batch_loss / len, grad_norm });
                }
                adam_cell.step(self.cell.params_mut(), &g_cell, lr);
                adam_head.step(&mut self.head, &g_head, lr);
                epoch_loss += batch_loss;
                start = end;
            }
            loss_history.push(epoch_loss / windows as f64);
        }

        self.norm = Some(norm);
        self.reset_state();
        let mut predictions = Vec::with_capacity(windows);
        let mut sq = 0.0;
        for i in 0..windows {
            let y = self.step_normalized(&z[i..i + p], &mut tape);
            sq += (y - z[i + p]).powi(2);
            predictions.push(norm.invert(y));
        }
        let final_mse = sq / windows as f64;
        if !final_mse.is_finite() {
            return Err(ForecastError::Diverged { epoch: cfg.epochs, loss: final_mse, grad_norm: f64::NAN });
        }
        self.report = Some(TrainReport { epochs: cfg.epochs, loss_history, final_mse, predictions });
        Ok(self.report.as_ref().expect("just set"))
    }

    fn step_normalized(&mut self, window: &[f64], tape: &mut Tape) -> f64 {
        let tau = self.cell.tau();
        let y = self.forward(&self.state, window, &tau, tape);
        let u = self.cell.unfold_steps;
        let n = self.cell.hidden;
        self.state.copy_from_slice(&tape.xs[u * n..(u + 1) * n]);
        y
    }

    /// One-step-ahead forecast from the last `p` observations (Gbps). Only
    /// the hidden state changes; parameters are never touched.
    pub fn predict_online(&mut self, recent: &[f64]) -> Result<f64, ForecastError> {
        let norm = self.norm.ok_or(ForecastError::NotTrained)?;
        if recent.len() != self.p {
            return Err(ForecastError::WrongWindow { expected: self.p, got: recent.len() });
        }
        let window: Vec<f64> = recent.iter().map(|&v| norm.apply(v)).collect();
        let mut tape = self.tape();
        let y = self.step_normalized(&window, &mut tape);
        if !y.is_finite() || self.state.iter().any(|v| !v.is_finite()) {
            return Err(ForecastError::NonFinite("LTC forecast"));
        }
        Ok(norm.invert(y))
    }

    /// Readout after running `window` from `state`, without touching the
    /// model's own state.
    pub fn output_from(&self, state: &[f64], window: &[f64]) -> f64 {
        let mut tape = Tape::new(self.cell.hidden, window.len(), self.cell.unfold_steps, &self.head_widths);
        self.forward(state, window, &self.cell.tau(), &mut tape)
    }

    /// Mean squared error over `batch` and its gradient, cell parameters
    /// first, then head parameters.
    pub fn loss_and_grad(&self, batch: &[GradSample]) -> (f64, Vec<f64>) {
        let tau = self.cell.tau();
        let mut g_cell = vec![0.0; self.cell.params().len()];
        let mut g_head = vec![0.0; self.head.len()];
        let mut loss = 0.0;
        let len = batch.len() as f64;
        for s in batch {
            let mut tape = Tape::new(self.cell.hidden, s.window.len(), self.cell.unfold_steps, &self.head_widths);
            let y = self.forward(&s.state, &s.window, &tau, &mut tape);
            let err = y - s.target;
            loss += err * err / len;
            self.backward(&tape, &s.window, &tau, 2.0 * err / len, &mut g_cell, &mut g_head);
        }
        g_cell.extend(g_head);
        (loss, g_cell)
    }

    fn loss_only(&self, batch: &[GradSample]) -> f64 {
        let len = batch.len() as f64;
        batch.iter().map(|s| (self.output_from(&s.state, &s.window) - s.target).powi(2) / len).sum()
    }

    fn param_mut(&mut self, i: usize) -> &mut f64 {
        let nc = self.cell.params().len();
        if i < nc {
            &mut self.cell.params_mut()[i]
        } else {
            &mut self.head[i - nc]
        }
    }

    pub fn param_count(&self) -> usize {
        self.cell.params().len() + self.head.len()
    }
}

/// Random batch used by [`gradient_check`].
pub fn random_batch(hidden: usize, p: usize, size: usize, seed: u64) -> Vec<GradSample> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, "gradcheck-batch"));
    (0..size)
        .map(|_| GradSample {
            state: (0..hidden).map(|_| rng.gen_range(-0.5..0.5)).collect(),
            window: (0..p).map(|_| rng.gen_range(0.0..1.0)).collect(),
            target: rng.gen_range(0.0..1.0),
        })
        .collect()
}

/// Largest relative gap between backpropagated gradients and central finite
/// differences (step 1e-5) over every parameter of a small random model.
///
/// Relative error is |a - n| / max(|a|, |n|, 1e-6); the floor keeps
/// numerically-zero gradients from dominating.
pub fn gradient_check(hidden: usize, p: usize, seed: u64) -> f64 {
    const H: f64 = 1e-5;
    let mut model = LtcModel::with_dims(hidden, &HEAD_WIDTHS, p, 6, seed);
    let batch = random_batch(hidden, p, 4, seed);
    let (_, analytic) = model.loss_and_grad(&batch);
    let mut worst = 0.0f64;
    for (i, &a) in analytic.iter().enumerate() {
        let orig = *model.param_mut(i);
        *model.param_mut(i) = orig + H;
        let up = model.loss_only(&batch);
        *model.param_mut(i) = orig - H;
        let down = model.loss_only(&batch);
        *model.param_mut(i) = orig;
        let fd = (up - down) / (2.0 * H);
        let rel = (a - fd).abs() / a.abs().max(fd.abs()).max(1e-6);
        worst = worst.max(rel);
    }
    worst
}
