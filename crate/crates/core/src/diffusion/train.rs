use std::io::Write;

use candle_core::{Device, Tensor};
use candle_nn::{AdamW, Optimizer, ParamsAdamW};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cond::{apply_dropout, draw_dropout, ConditioningBundle, DropDecision};
use super::config::TrainConfig;
use super::loss::foreground_loss_tensor;
use super::model::{is_image_param, DenoiseInput, Denoiser};
use super::schedule::{add_noise, sample_noise, NoiseSchedule};
use super::{DiffusionError, Result};
use crate::conditioning::N_PATCHES;
use crate::dataset::{AttributeTensor, N_ATTRS, PART_STRIDE};

/// A clean attribute tensor with all of its conditions present.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainSample {
    pub x0: AttributeTensor,
    pub cond: ConditioningBundle,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossComponents {
    pub total: f64,
    pub eps: f64,
    /// `None` when no item in the batch kept its image.
    pub fg: Option<f64>,
}

/// One line of the training log.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogRecord {
    pub step: usize,
    pub epoch: usize,
    pub loss_eps: f64,
    pub loss_fg: Option<f64>,
    pub loss: f64,
    pub lr: f64,
}

/// Line-delimited JSON sink for [`LogRecord`]s.
pub struct TrainLog<W: Write> {
    out: W,
}

impl<W: Write> TrainLog<W> {
    pub fn new(out: W) -> Self {
        TrainLog { out }
    }

    pub fn write(&mut self, r: &LogRecord) -> std::io::Result<()> {
        serde_json::to_writer(&mut self.out, r)?;
        self.out.write_all(b"\n")
    }

    pub fn into_inner(self) -> W {
        self.out
    }
}

struct Item {
    x_t: AttributeTensor,
    eps: Vec<f64>,
    t: usize,
    cond: ConditioningBundle,
}

fn cerr(e: candle_core::Error) -> DiffusionError {
    DiffusionError::Candle(e.to_string())
}

pub struct Trainer {
    model: Denoiser,
    schedule: NoiseSchedule,
    cfg: TrainConfig,
    base: AdamW,
    ica: AdamW,
    rng: ChaCha8Rng,
    step: usize,
    steps_per_epoch: usize,
}

impl Trainer {
    /// `steps_per_epoch` drives the warm-up and cosine learning-rate schedule.
    pub fn new(model: Denoiser, cfg: TrainConfig, steps_per_epoch: usize) -> Result<Self> {
        cfg.check()?;
        let schedule = model.config().schedule()?;
        let params = |lr: f64| ParamsAdamW {
            lr,
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: 1e-8,
            weight_decay: cfg.weight_decay,
        };
        let (mut image, mut rest) = (Vec::new(), Vec::new());
        for (name, v) in model.vars() {
            if is_image_param(name) {
                image.push(v.clone());
            } else {
                rest.push(v.clone());
            }
        }
        let base = AdamW::new(rest, params(cfg.lr_base)).map_err(cerr)?;
        let ica = AdamW::new(image, params(cfg.lr_ica)).map_err(cerr)?;
        Ok(Trainer {
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            model,
            schedule,
            cfg,
            base,
            ica,
            step: 0,
            steps_per_epoch: steps_per_epoch.max(1),
        })
    }

    pub fn model(&self) -> &Denoiser {
        &self.model
    }

    pub fn into_model(self) -> Denoiser {
        self.model
    }

    pub fn step_count(&self) -> usize {
        self.step
    }

    pub fn config(&self) -> &TrainConfig {
        &self.cfg
    }

    /// Current (base, image) learning rates.
    pub fn learning_rates(&self) -> (f64, f64) {
        let e = self.step as f64 / self.steps_per_epoch as f64;
        (self.cfg.lr_at(self.cfg.lr_base, e), self.cfg.lr_at(self.cfg.lr_ica, e))
    }

    fn expand<R: Rng>(
        samples: &[TrainSample],
        per_object: usize,
        schedule: &NoiseSchedule,
        rng: &mut R,
        drop: impl Fn(&mut R) -> DropDecision,
    ) -> Result<Vec<Item>> {
        let mut items = Vec::with_capacity(samples.len() * per_object);
        for s in samples {
            for _ in 0..per_object {
                let t = rng.random_range(1..=schedule.steps());
                let eps = sample_noise(&s.x0, rng);
                let x_t = add_noise(&s.x0, t, &eps, schedule)?;
                let d = drop(rng);
                items.push(Item {
                    x_t,
                    eps,
                    t,
                    cond: apply_dropout(&s.cond, d, s.x0.n_parts()),
                });
            }
        }
        Ok(items)
    }

    /// L_ε and L_fg on prepared items, as graph-attached tensors.
    fn losses(&self, items: &[Item]) -> Result<(Tensor, Option<Tensor>)> {
        let inputs: Vec<DenoiseInput> = items
            .iter()
            .map(|i| DenoiseInput {
                x_t: &i.x_t,
                t: i.t,
                cond: &i.cond,
            })
            .collect();
        let fwd = self.model.forward(&inputs, false)?;
        let (b, n, d) = fwd.eps.dims3().map_err(cerr)?;
        let parts = n / N_ATTRS;
        let mut target = vec![0f32; b * n * d];
        let mut valid = vec![0f32; b * n * d];
        let mut part_valid = vec![0f32; b * parts];
        let mut fg = vec![0f32; b * N_PATCHES];
        let mut fg_on = vec![false; b];
        for (s, it) in items.iter().enumerate() {
            for p in 0..parts {
                if it.x_t.mask[p] {
                    part_valid[s * parts + p] = 1.0;
                    for k in 0..PART_STRIDE {
                        target[s * n * d + p * PART_STRIDE + k] = it.eps[p * PART_STRIDE + k] as f32;
                        valid[s * n * d + p * PART_STRIDE + k] = 1.0;
                    }
                }
            }
            if let (Some(_), Some(m)) = (&it.cond.features, &it.cond.fg_mask) {
                fg_on[s] = true;
                for (i, on) in m.0.iter().enumerate() {
                    fg[s * N_PATCHES + i] = *on as u8 as f32;
                }
            }
        }
        let count: f32 = valid.iter().sum();
        let dev = Device::Cpu;
        let target = Tensor::from_vec(target, (b, n, d), &dev).map_err(cerr)?;
        let valid = Tensor::from_vec(valid, (b, n, d), &dev).map_err(cerr)?;
        let l_eps = ((&fwd.eps - &target)
            .and_then(|x| x.sqr())
            .and_then(|x| x.mul(&valid))
            .and_then(|x| x.sum_all())
            .map_err(cerr)?
            / count.max(1.0) as f64)
            .map_err(cerr)?;
        let l_fg = foreground_loss_tensor(&fwd.cross, &part_valid, &fg, &fg_on).map_err(cerr)?;
        Ok((l_eps, l_fg))
    }

    /// One optimizer step: each object contributes `timesteps_per_object`
    /// noised copies, each with independently dropped conditions.
    pub fn training_step(&mut self, batch: &[TrainSample]) -> Result<LossComponents> {
        if batch.is_empty() {
            return Err(DiffusionError::BadConfig("empty batch".into()));
        }
        let rates = self.model.config().dropout;
        let items = Self::expand(batch, self.cfg.timesteps_per_object, &self.schedule, &mut self.rng, |r| {
            draw_dropout(&rates, r)
        })?;
        let (l_eps, l_fg) = self.losses(&items)?;
        let total = match (&l_fg, self.cfg.lambda) {
            (Some(fg), lambda) if lambda != 0.0 => (&l_eps + (fg * lambda).map_err(cerr)?).map_err(cerr)?,
            _ => l_eps.clone(),
        };
        let scalar = |t: &Tensor| t.to_scalar::<f32>().map(|v| v as f64).map_err(cerr);
        let out = LossComponents {
            total: scalar(&total)?,
            eps: scalar(&l_eps)?,
            fg: l_fg.as_ref().map(scalar).transpose()?,
        };
        if !out.total.is_finite() {
            return Err(DiffusionError::NonFiniteLoss);
        }
        let (lr_base, lr_ica) = self.learning_rates();
        self.base.set_learning_rate(lr_base);
        self.ica.set_learning_rate(lr_ica);
        let grads = total.backward().map_err(cerr)?;
        self.base.step(&grads).map_err(cerr)?;
        self.ica.step(&grads).map_err(cerr)?;
        self.step += 1;
        Ok(out)
    }

    /// One pass over `data` in a seeded shuffled order; returns the mean
    /// step losses.
    pub fn epoch<W: Write>(&mut self, data: &[TrainSample], mut log: Option<&mut TrainLog<W>>) -> Result<LossComponents> {
        let mut order: Vec<usize> = (0..data.len()).collect();
        for i in (1..order.len()).rev() {
            order.swap(i, self.rng.random_range(0..=i));
        }
        let mut sums = (0.0, 0.0, 0.0, 0usize);
        let mut fg_n = 0;
        for chunk in order.chunks(self.cfg.batch_size) {
            let batch: Vec<TrainSample> = chunk.iter().map(|i| data[*i].clone()).collect();
            let l = self.training_step(&batch)?;
            sums.0 += l.total;
            sums.1 += l.eps;
            if let Some(f) = l.fg {
                sums.2 += f;
                fg_n += 1;
            }
            sums.3 += 1;
            if let Some(log) = log.as_deref_mut() {
                log.write(&LogRecord {
                    step: self.step,
                    epoch: (self.step - 1) / self.steps_per_epoch,
                    loss_eps: l.eps,
                    loss_fg: l.fg,
                    loss: l.total,
                    lr: self.base.learning_rate(),
                })
                .map_err(|e| DiffusionError::Io {
                    path: "training log".into(),
                    reason: e.to_string(),
                })?;
            }
        }
        let n = sums.3.max(1) as f64;
        Ok(LossComponents {
            total: sums.0 / n,
            eps: sums.1 / n,
            fg: (fg_n > 0).then(|| sums.2 / fg_n as f64),
        })
    }

    /// L_ε with all conditions kept, on noise and timesteps drawn from
    /// `seed`, so repeated calls measure the same thing.
    pub fn eval_loss(&self, data: &[TrainSample], per_object: usize, seed: u64) -> Result<f64> {
        eval_loss(&self.model, &self.schedule, data, per_object, seed)
    }
}

pub fn eval_loss(model: &Denoiser, schedule: &NoiseSchedule, data: &[TrainSample], per_object: usize, seed: u64) -> Result<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let items = Trainer::expand(data, per_object, schedule, &mut rng, |_| DropDecision::KEEP_ALL)?;
    let mut total = 0.0;
    let mut weight = 0.0;
    for chunk in items.chunks(64) {
        let inputs: Vec<DenoiseInput> = chunk
            .iter()
            .map(|i| DenoiseInput {
                x_t: &i.x_t,
                t: i.t,
                cond: &i.cond,
            })
            .collect();
        for (it, (e, _)) in chunk.iter().zip(model.denoise_batch(&inputs)?) {
            for (p, on) in it.x_t.mask.iter().enumerate() {
                if *on {
                    for k in p * PART_STRIDE..(p + 1) * PART_STRIDE {
                        total += (e.data[k] - it.eps[k]).powi(2);
                        weight += 1.0;
                    }
                }
            }
        }
    }
    Ok(total / f64::max(weight, 1.0))
}
