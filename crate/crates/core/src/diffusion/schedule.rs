use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::{DiffusionError, Result};
use crate::dataset::AttributeTensor;

/// Linear DDPM variance schedule. Index `t - 1` holds step `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseSchedule {
    pub betas: Vec<f64>,
    pub alphas: Vec<f64>,
    pub alpha_bars: Vec<f64>,
}

pub const DEFAULT_STEPS: usize = 1000;
pub const DEFAULT_BETA_1: f64 = 1e-4;
pub const DEFAULT_BETA_T: f64 = 0.02;

pub fn make_schedule(steps: usize, beta_1: f64, beta_t: f64) -> Result<NoiseSchedule> {
    if steps == 0 || !(beta_1 > 0.0) || !(beta_1 <= beta_t) || !(beta_t < 1.0) {
        return Err(DiffusionError::BadBetas { beta_1, beta_t, steps });
    }
    let betas: Vec<f64> = (0..steps)
        .map(|i| match steps {
            1 => beta_1,
            _ => beta_1 + (beta_t - beta_1) * i as f64 / (steps - 1) as f64,
        })
        .collect();
    let alphas: Vec<f64> = betas.iter().map(|b| 1.0 - b).collect();
    let alpha_bars = alphas
        .iter()
        .scan(1.0, |acc, a| {
            *acc *= a;
            Some(*acc)
        })
        .collect();
    Ok(NoiseSchedule {
        betas,
        alphas,
        alpha_bars,
    })
}

impl Default for NoiseSchedule {
    fn default() -> Self {
        make_schedule(DEFAULT_STEPS, DEFAULT_BETA_1, DEFAULT_BETA_T).expect("default betas are valid")
    }
}

impl NoiseSchedule {
    /// A `steps`-long schedule covering the same total noise as the default
    /// 1000-step one, with both end betas multiplied by `1000 / steps`.
    pub fn rescaled(steps: usize) -> Result<Self> {
        let k = DEFAULT_STEPS as f64 / steps.max(1) as f64;
        make_schedule(steps, DEFAULT_BETA_1 * k, (DEFAULT_BETA_T * k).min(0.999))
    }

    pub fn steps(&self) -> usize {
        self.betas.len()
    }

    pub fn beta(&self, t: usize) -> f64 {
        self.betas[t - 1]
    }

    pub fn alpha(&self, t: usize) -> f64 {
        self.alphas[t - 1]
    }

    pub fn alpha_bar(&self, t: usize) -> f64 {
        self.alpha_bars[t - 1]
    }

    /// ᾱ at `t - 1`, with ᾱ_0 = 1.
    pub fn alpha_bar_prev(&self, t: usize) -> f64 {
        if t <= 1 {
            1.0
        } else {
            self.alpha_bars[t - 2]
        }
    }

    /// Variance of q(x_{t-1} | x_t, x_0).
    pub fn posterior_variance(&self, t: usize) -> f64 {
        self.beta(t) * (1.0 - self.alpha_bar_prev(t)) / (1.0 - self.alpha_bar(t))
    }

    pub fn check_t(&self, t: usize) -> Result<()> {
        if t == 0 || t > self.steps() {
            return Err(DiffusionError::BadTimestep { t, steps: self.steps() });
        }
        Ok(())
    }
}

/// `x_t = sqrt(ᾱ_t) x0 + sqrt(1 - ᾱ_t) ε` on the rows of real parts; padded
/// parts stay zero.
pub fn add_noise(x0: &AttributeTensor, t: usize, eps: &[f64], schedule: &NoiseSchedule) -> Result<AttributeTensor> {
    schedule.check_t(t)?;
    if eps.len() != x0.data.len() {
        return Err(DiffusionError::ShapeMismatch {
            expected: x0.data.len(),
            found: eps.len(),
        });
    }
    let (a, s) = (schedule.alpha_bar(t).sqrt(), (1.0 - schedule.alpha_bar(t)).sqrt());
    let stride = x0.data.len() / x0.mask.len();
    let mut out = AttributeTensor {
        data: vec![0.0; x0.data.len()],
        mask: x0.mask.clone(),
    };
    for (p, _) in x0.mask.iter().enumerate().filter(|(_, m)| **m) {
        for i in p * stride..(p + 1) * stride {
            out.data[i] = a * x0.data[i] + s * eps[i];
        }
    }
    Ok(out)
}

/// Standard-normal noise shaped like an attribute tensor, zero on padding.
pub fn sample_noise<R: Rng>(like: &AttributeTensor, rng: &mut R) -> Vec<f64> {
    let stride = like.data.len() / like.mask.len();
    (0..like.data.len())
        .map(|i| if like.mask[i / stride] { rng.sample(StandardNormal) } else { 0.0 })
        .collect()
}
