//! One-step-ahead link-load forecasters: the liquid time-constant network and
//! the periodically partial-fitted MLP.

pub mod lnn;
pub mod ltc;
pub mod mlp;
mod optim;

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use lnn::{LtcModel, TrainReport};
pub use ltc::{ltc_step, reference_trajectory, LtcCell};
pub use mlp::MlpModel;
pub use optim::Adam;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ForecastError {
    #[error("invalid forecaster config: {0}")]
    InvalidConfig(String),
    #[error("series has {got} samples but {needed} are required")]
    InsufficientData { needed: usize, got: usize },
    #[error("expected a window of {expected} observations, got {got}")]
    WrongWindow { expected: usize, got: usize },
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("training diverged at epoch {epoch}: loss {loss}, gradient norm {grad_norm}")]
    Diverged { epoch: usize, loss: f64, grad_norm: f64 },
    #[error("model used before training")]
    NotTrained,
    #[error("checkpoint: {0}")]
    Checkpoint(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Settings shared by both forecasters plus the LTC training schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForecasterConfig {
    /// Input history length in samples.
    pub p: usize,
    pub train_steps: usize,
    pub epochs: usize,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub lr_decay_every: usize,
    pub grad_clip: f64,
    pub batch_size: usize,
    pub hidden: usize,
    pub unfold_steps: usize,
    pub seed: u64,
}

impl Default for ForecasterConfig {
    fn default() -> Self {
        Self {
            p: 3,
            train_steps: 6000,
            epochs: 50,
            learning_rate: 1e-2,
            lr_decay: 0.5,
            lr_decay_every: 20,
            grad_clip: 1.0,
            batch_size: 32,
            hidden: 30,
            unfold_steps: 6,
            seed: 0,
        }
    }
}

impl ForecasterConfig {
    pub fn validate(&self) -> Result<(), ForecastError> {
        let bad = |m: &str| Err(ForecastError::InvalidConfig(m.into()));
        if self.p == 0 {
            return bad("p must be at least 1");
        }
        if self.train_steps <= self.p {
            return bad("train_steps must exceed p");
        }
        if self.batch_size == 0 || self.hidden == 0 || self.unfold_steps == 0 || self.lr_decay_every == 0 {
            return bad("batch_size, hidden, unfold_steps and lr_decay_every must be positive");
        }
        if !(self.learning_rate > 0.0 && self.grad_clip > 0.0 && self.lr_decay > 0.0) {
            return bad("learning_rate, lr_decay and grad_clip must be positive");
        }
        Ok(())
    }

    pub(crate) fn lr_at(&self, epoch: usize) -> f64 {
        self.learning_rate * self.lr_decay.powi((epoch / self.lr_decay_every) as i32)
    }
}

/// Settings of the incremental MLP learner.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IncrementalConfig {
    pub learning_rate: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Gradient epochs over the buffered batch at each refit.
    pub partial_fit_epochs: usize,
}

impl Default for IncrementalConfig {
    fn default() -> Self {
        Self { learning_rate: 1e-3, epochs: 60, batch_size: 32, partial_fit_epochs: 5 }
    }
}

/// Min-max scaling fitted on the training window; applied without clipping.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinMax {
    pub min: f64,
    pub scale: f64,
}

impl MinMax {
    pub fn fit(values: &[f64]) -> Self {
        let min = values.iter().copied().fold(f64::INFINITY, f64::min);
        let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let range = max - min;
        // a flat training window would otherwise divide by zero
        let scale = if range > 1e-12 * max.abs().max(1.0) { range } else { min.abs().max(1.0) };
        Self { min, scale }
    }

    pub fn apply(&self, v: f64) -> f64 {
        (v - self.min) / self.scale
    }

    pub fn invert(&self, z: f64) -> f64 {
        z * self.scale + self.min
    }
}

pub(crate) fn check_series(values: &[f64], cfg: &ForecasterConfig) -> Result<(), ForecastError> {
    cfg.validate()?;
    if values.len() < cfg.train_steps + 1 {
        return Err(ForecastError::InsufficientData { needed: cfg.train_steps + 1, got: values.len() });
    }
    if values[..cfg.train_steps].iter().any(|v| !v.is_finite()) {
        return Err(ForecastError::NonFinite("training series"));
    }
    Ok(())
}

/// Scales every gradient buffer so the joint L2 norm is at most `max`.
/// Returns the norm before clipping.
pub(crate) fn clip_global_norm(grads: &mut [&mut [f64]], max: f64) -> f64 {
    let norm = grads.iter().flat_map(|g| g.iter()).map(|g| g * g).sum::<f64>().sqrt();
    if norm > max {
        let k = max / norm;
        for g in grads.iter_mut() {
            g.iter_mut().for_each(|v| *v *= k);
        }
    }
    norm
}

/// Model checkpoint, tagged with the model kind.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Checkpoint {
    Ltc(LtcModel),
    Mlp(MlpModel),
}

#[derive(Serialize, Deserialize)]
struct CheckpointFile {
    format_version: u32,
    model: Checkpoint,
}

impl Checkpoint {
    pub fn to_json(&self) -> String {
        let file = CheckpointFile { format_version: CHECKPOINT_VERSION, model: self.clone() };
        serde_json::to_string(&file).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ForecastError> {
        let file: CheckpointFile = serde_json::from_str(s).map_err(|e| ForecastError::Checkpoint(e.to_string()))?;
        if file.format_version != CHECKPOINT_VERSION {
            return Err(ForecastError::Checkpoint(format!("unsupported format version {}", file.format_version)));
        }
        Ok(file.model)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), ForecastError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, ForecastError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}
