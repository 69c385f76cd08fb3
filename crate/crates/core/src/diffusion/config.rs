use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};
use crate::conditioning::DINO_DIM;
use crate::dataset::CATEGORIES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DropoutRates {
    pub graph: f64,
    pub category: f64,
    pub image: f64,
}

impl Default for DropoutRates {
    fn default() -> Self {
        DropoutRates {
            graph: 0.5,
            category: 0.5,
            image: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DenoiserConfig {
    pub layers: usize,
    pub heads: usize,
    pub hidden: usize,
    /// Width of the incoming patch features.
    pub d_f: usize,
    pub categories: usize,
    pub dropout: DropoutRates,
    /// Schedule length the model is trained for.
    pub steps: usize,
    pub beta_1: f64,
    pub beta_t: f64,
}

impl Default for DenoiserConfig {
    fn default() -> Self {
        DenoiserConfig {
            layers: 6,
            heads: 4,
            hidden: 128,
            d_f: DINO_DIM,
            categories: CATEGORIES.len(),
            dropout: DropoutRates::default(),
            steps: 1000,
            beta_1: 1e-4,
            beta_t: 0.02,
        }
    }
}

impl DenoiserConfig {
    /// The small configuration used for desk-scale training.
    pub fn toy(d_f: usize) -> Self {
        let k = 1000.0 / 100.0;
        DenoiserConfig {
            layers: 4,
            heads: 4,
            hidden: 64,
            d_f,
            steps: 100,
            beta_1: 1e-4 * k,
            beta_t: 0.02 * k,
            ..Default::default()
        }
    }

    pub fn check(&self) -> Result<()> {
        let bad = |m: &str| Err(DiffusionError::BadConfig(m.to_string()));
        if self.layers == 0 || self.heads == 0 || self.hidden == 0 || self.d_f == 0 {
            return bad("layers, heads, hidden and d_f must be positive");
        }
        if self.hidden % self.heads != 0 {
            return bad("hidden width must be divisible by the head count");
        }
        let r = self.dropout;
        if ![r.graph, r.category, r.image].iter().all(|p| (0.0..=1.0).contains(p)) {
            return bad("dropout rates must lie in [0, 1]");
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<super::NoiseSchedule> {
        super::make_schedule(self.steps, self.beta_1, self.beta_t)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    /// Weight of the foreground loss.
    pub lambda: f64,
    /// Learning rate for the image cross-attention parameters.
    pub lr_ica: f64,
    /// Learning rate for everything else.
    pub lr_base: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub weight_decay: f64,
    pub warmup_start_lr: f64,
    pub final_lr: f64,
    pub warmup_epochs: usize,
    pub batch_size: usize,
    pub timesteps_per_object: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: 0.1,
            lr_ica: 5e-4,
            lr_base: 5e-5,
            beta1: 0.9,
            beta2: 0.99,
            weight_decay: 0.01,
            warmup_start_lr: 1e-6,
            final_lr: 1e-5,
            warmup_epochs: 3,
            batch_size: 40,
            timesteps_per_object: 16,
            epochs: 200,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn check(&self) -> Result<()> {
        if !(self.lambda >= 0.0) {
            return Err(DiffusionError::BadConfig("lambda must be nonnegative".into()));
        }
        if self.batch_size == 0 || self.timesteps_per_object == 0 {
            return Err(DiffusionError::BadConfig("batch size and timesteps must be positive".into()));
        }
        Ok(())
    }

    /// Scale applied to both base learning rates at fractional epoch `e`:
    /// linear warm-up from `warmup_start_lr`, then cosine annealing down to
    /// `final_lr`.
    pub fn lr_at(&self, base: f64, e: f64) -> f64 {
        let w = self.warmup_epochs as f64;
        if e < w {
            return self.warmup_start_lr + (base - self.warmup_start_lr) * e / w;
        }
        let span = (self.epochs as f64 - w).max(1e-9);
        let p = ((e - w) / span).clamp(0.0, 1.0);
        self.final_lr.min(base) + 0.5 * (base - self.final_lr.min(base)) * (1.0 + (std::f64::consts::PI * p).cos())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SamplerConfig {
    pub omega: f64,
    /// Reverse steps; 0 means the full schedule.
    pub steps: usize,
    pub seed: u64,
}

impl Default for SamplerConfig {
    fn default() -> Self {
        SamplerConfig {
            omega: 0.5,
            steps: 0,
            seed: 0,
        }
    }
}
