//! Incremental reference learner: p → 25 ReLU → 1 regressor, refitted on
//! every completed batch of realized observations (test-then-train).

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::optim::Adam;
use super::{check_series, ForecastError, ForecasterConfig, IncrementalConfig, MinMax};
use crate::seed::derive_seed;

pub const MLP_HIDDEN: usize = 25;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    p: usize,
    /// w1 (hidden×p), b1, w2 (hidden), b2.
    params: Vec<f64>,
    adam: Adam,
    learning_rate: f64,
    partial_fit_epochs: usize,
    norm: Option<MinMax>,
    retrain_window: usize,
    buffer: Vec<(Vec<f64>, f64)>,
    samples_seen: u64,
    /// Deployment sample numbers (1-based) at which a refit ran.
    refit_at: Vec<u64>,
}

impl MlpModel {
    /// Untrained model; the weights depend only on `cfg.seed`, so variants
    /// with different retrain windows start identical.
    pub fn new(cfg: &ForecasterConfig, inc: &IncrementalConfig, retrain_window: usize) -> Self {
        let p = cfg.p;
        let h = MLP_HIDDEN;
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "mlp-init"));
        let l1 = (6.0 / p as f64).sqrt();
        let l2 = (6.0 / (h + 1) as f64).sqrt();
        let mut params = Vec::with_capacity(h * p + 2 * h + 1);
        params.extend((0..h * p).map(|_| rng.gen_range(-l1..l1)));
        params.resize(params.len() + h, 0.0);
        params.extend((0..h).map(|_| rng.gen_range(-l2..l2)));
        params.push(0.0);
        Self {
            p,
            adam: Adam::new(params.len()),
            params,
            learning_rate: inc.learning_rate,
            partial_fit_epochs: inc.partial_fit_epochs,
            norm: None,
            retrain_window: retrain_window.max(1),
            buffer: Vec::new(),
            samples_seen: 0,
            refit_at: Vec::new(),
        }
    }

    /// Builds and fits on the same windows and normalization as the LTC model.
    pub fn initial_fit(
        values: &[f64],
        cfg: &ForecasterConfig,
        inc: &IncrementalConfig,
        retrain_window: usize,
    ) -> Result<Self, ForecastError> {
        check_series(values, cfg)?;
        if inc.batch_size == 0 || inc.learning_rate <= 0.0 {
            return Err(ForecastError::InvalidConfig(
                "incremental batch_size and learning_rate must be positive".into(),
            ));
        }
        let mut m = Self::new(cfg, inc, retrain_window);
        let norm = MinMax::fit(&values[..cfg.train_steps]);
        let z: Vec<f64> = values[..cfg.train_steps].iter().map(|&v| norm.apply(v)).collect();
        let p = cfg.p;
        let samples: Vec<(Vec<f64>, f64)> =
            (0..cfg.train_steps - p).map(|i| (z[i..i + p].to_vec(), z[i + p])).collect();
        let mut order: Vec<usize> = (0..samples.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, "mlp-shuffle"));
        let mut grad = vec![0.0; m.params.len()];
        for epoch in 0..inc.epochs {
            order.shuffle(&mut rng);
            for chunk in order.chunks(inc.batch_size) {
                grad.fill(0.0);
                let loss =
                    m.accumulate(chunk.iter().map(|&i| (&samples[i].0[..], samples[i].1)), chunk.len(), &mut grad);
                if !loss.is_finite() {
                    let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                    return Err(ForecastError::Diverged { epoch, loss, grad_norm });
                }
                m.adam.step(&mut m.params, &grad, m.learning_rate);
            }
        }
        m.norm = Some(norm);
        Ok(m)
    }

    pub fn retrain_window(&self) -> usize {
        self.retrain_window
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn norm(&self) -> Option<&MinMax> {
        self.norm.as_ref()
    }

    pub fn refit_count(&self) -> usize {
        self.refit_at.len()
    }

    pub fn refit_samples(&self) -> &[u64] {
        &self.refit_at
    }

    pub fn samples_seen(&self) -> u64 {
        self.samples_seen
    }

    pub fn buffered(&self) -> usize {
        self.buffer.len()
    }

    fn forward(&self, x: &[f64], hidden: &mut [f64; MLP_HIDDEN]) -> f64 {
        let p = self.p;
        let h = MLP_HIDDEN;
        let (w1, rest) = self.params.split_at(h * p);
        let (b1, rest) = rest.split_at(h);
        let (w2, b2) = rest.split_at(h);
        let mut y = b2[0];
        for j in 0..h {
            let z = b1[j] + w1[j * p..(j + 1) * p].iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            hidden[j] = z.max(0.0);
            y += w2[j] * hidden[j];
        }
        y
    }

    /// Adds the gradient of the batch MSE to `grad`; returns the batch MSE.
    fn accumulate<'a>(&self, batch: impl Iterator<Item = (&'a [f64], f64)>, len: usize, grad: &mut [f64]) -> f64 {
        let p = self.p;
        let h = MLP_HIDDEN;
        let w2 = &self.params[h * p + h..h * p + 2 * h];
        let mut hidden = [0.0; MLP_HIDDEN];
        let mut loss = 0.0;
        let n = len as f64;
        for (x, t) in batch {
            let y = self.forward(x, &mut hidden);
            let err = y - t;
            loss += err * err / n;
            let dy = 2.0 * err / n;
            grad[h * p + 2 * h] += dy;
            for j in 0..h {
                grad[h * p + h + j] += dy * hidden[j];
                if hidden[j] > 0.0 {
                    let dz = dy * w2[j];
                    grad[h * p + j] += dz;
                    for k in 0..p {
                        grad[j * p + k] += dz * x[k];
                    }
                }
            }
        }
        loss
    }

    /// Forecast from the last `p` true observations; pure in the weights.
    pub fn predict(&self, recent: &[f64]) -> Result<f64, ForecastError> {
        let norm = self.norm.ok_or(ForecastError::NotTrained)?;
        if recent.len() != self.p {
            return Err(ForecastError::WrongWindow { expected: self.p, got: recent.len() });
        }
        let x: Vec<f64> = recent.iter().map(|&v| norm.apply(v)).collect();
        let mut hidden = [0.0; MLP_HIDDEN];
        Ok(norm.invert(self.forward(&x, &mut hidden)))
    }

    /// Test-then-train: forecasts the next value, then buffers the realized
    /// `(recent, actual)` pair and refits once the buffer is full.
    pub fn predict_then_buffer(&mut self, recent: &[f64], actual: f64) -> Result<f64, ForecastError> {
        let forecast = self.predict(recent)?;
        let norm = self.norm.expect("checked by predict");
        self.samples_seen += 1;
        self.buffer.push((recent.iter().map(|&v| norm.apply(v)).collect(), norm.apply(actual)));
        if self.buffer.len() >= self.retrain_window {
            self.partial_fit()?;
        }
        Ok(forecast)
    }

    /// Full-batch Adam epochs on exactly the buffered batch, warm-started.
    fn partial_fit(&mut self) -> Result<(), ForecastError> {
        let buffer = std::mem::take(&mut self.buffer);
        let mut grad = vec![0.0; self.params.len()];
        for epoch in 0..self.partial_fit_epochs {
            grad.fill(0.0);
            let loss = self.accumulate(buffer.iter().map(|(x, t)| (&x[..], *t)), buffer.len(), &mut grad);
            if !loss.is_finite() {
                let grad_norm = grad.iter().map(|g| g * g).sum::<f64>().sqrt();
                return Err(ForecastError::Diverged { epoch, loss, grad_norm });
            }
            self.adam.step(&mut self.params, &grad, self.learning_rate);
        }
        self.refit_at.push(self.samples_seen);
        Ok(())
    }
}
