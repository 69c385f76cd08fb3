use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::cond::ConditioningBundle;
use super::config::SamplerConfig;
use super::model::{AttentionRecord, DenoiseInput, Denoiser};
use super::schedule::{sample_noise, NoiseSchedule};
use super::{DiffusionError, Result};
use crate::conditioning::GRID;
use crate::dataset::{AttributeTensor, ATTR_DIM, N_ATTRS, PART_STRIDE};
use crate::kinematics::MAX_PARTS;

/// A fixed attribute row for one part (by tensor index).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pin {
    pub part: usize,
    pub row: usize,
    pub values: [f64; ATTR_DIM],
}

fn check_pins(pins: &[Pin], n_parts: usize) -> Result<()> {
    for p in pins {
        if p.part >= n_parts || p.row >= N_ATTRS || p.values.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::BadPin { part: p.part, row: p.row });
        }
    }
    Ok(())
}

fn pin_offset(p: &Pin) -> usize {
    p.part * PART_STRIDE + p.row * ATTR_DIM
}

/// `(1 + ω) ε̂(x_t; I, G) − ω ε̂(x_t; ∅, G)`.
pub fn cfg_epsilon(
    model: &Denoiser,
    x_t: &AttributeTensor,
    t: usize,
    cond: &ConditioningBundle,
    omega: f64,
) -> Result<AttributeTensor> {
    if cond.features.is_none() {
        return Err(DiffusionError::MissingImage);
    }
    if !(omega >= 0.0) || !omega.is_finite() {
        return Err(DiffusionError::BadConfig(format!("guidance weight {omega} must be finite and nonnegative")));
    }
    let uncond = cond.without_image();
    let mut out = model.denoise_batch(&[
        DenoiseInput { x_t, t, cond },
        DenoiseInput { x_t, t, cond: &uncond },
    ])?;
    let (u, _) = out.pop().expect("two outputs");
    let (mut c, _) = out.pop().expect("two outputs");
    for (cv, uv) in c.data.iter_mut().zip(&u.data) {
        *cv = (1.0 + omega) * *cv - omega * uv;
    }
    Ok(c)
}

fn epsilon(model: &Denoiser, x_t: &AttributeTensor, t: usize, cond: &ConditioningBundle, omega: f64) -> Result<AttributeTensor> {
    if cond.features.is_some() {
        cfg_epsilon(model, x_t, t, cond, omega)
    } else {
        Ok(model.denoise_step(x_t, t, cond)?.0)
    }
}

/// Ancestral DDPM sampling. The graph fixes the part count; pinned rows are
/// re-noised to the current level after every step and hold their exact
/// values in the result.
pub fn sample(
    model: &Denoiser,
    cond: &ConditioningBundle,
    cfg: &SamplerConfig,
    schedule: &NoiseSchedule,
    pins: &[Pin],
) -> Result<AttributeTensor> {
    let graph = cond.graph.as_ref().ok_or(DiffusionError::MissingGraph)?;
    let n = graph.n_nodes;
    if n == 0 || n > MAX_PARTS {
        return Err(DiffusionError::MissingGraph);
    }
    if schedule.steps() != model.config().steps || (cfg.steps != 0 && cfg.steps != schedule.steps()) {
        return Err(DiffusionError::BadConfig(format!(
            "model is trained for {} steps, schedule has {}, sampler asks for {}",
            model.config().steps,
            schedule.steps(),
            cfg.steps
        )));
    }
    check_pins(pins, n)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut x = AttributeTensor {
        data: vec![0.0; MAX_PARTS * PART_STRIDE],
        mask: (0..MAX_PARTS).map(|p| p < n).collect(),
    };
    x.data = sample_noise(&x, &mut rng);
    let t_max = schedule.steps();
    let renoise = |x: &mut AttributeTensor, ab: f64, rng: &mut ChaCha8Rng| {
        let z = sample_noise(x, rng);
        for p in pins {
            let o = pin_offset(p);
            for k in 0..ATTR_DIM {
                x.data[o + k] = ab.sqrt() * p.values[k] + (1.0 - ab).sqrt() * z[o + k];
            }
        }
    };
    if !pins.is_empty() {
        renoise(&mut x, schedule.alpha_bar(t_max), &mut rng);
    }
    for t in (1..=t_max).rev() {
        let eps = epsilon(model, &x, t, cond, cfg.omega)?;
        let (a, ab, b) = (schedule.alpha(t), schedule.alpha_bar(t), schedule.beta(t));
        let coef = b / (1.0 - ab).sqrt();
        let z = if t > 1 { Some(sample_noise(&x, &mut rng)) } else { None };
        let sigma = schedule.posterior_variance(t).sqrt();
        for i in 0..x.data.len() {
            if !x.mask[i / PART_STRIDE] {
                continue;
            }
            let mean = (x.data[i] - coef * eps.data[i]) / a.sqrt();
            x.data[i] = match &z {
                Some(z) => mean + sigma * z[i],
                None => mean,
            };
        }
        if x.data.iter().any(|v| !v.is_finite()) {
            return Err(DiffusionError::NonFiniteActivation);
        }
        if t > 1 && !pins.is_empty() {
            renoise(&mut x, schedule.alpha_bar(t - 1), &mut rng);
        }
    }
    for p in pins {
        let o = pin_offset(p);
        x.data[o..o + ATTR_DIM].copy_from_slice(&p.values);
    }
    Ok(x)
}

/// Cross-attention maps of one layer (the last when `layer` is `None`).
pub fn export_attention(
    model: &Denoiser,
    x_t: &AttributeTensor,
    t: usize,
    cond: &ConditioningBundle,
    layer: Option<usize>,
) -> Result<AttentionMap> {
    if cond.features.is_none() {
        return Err(DiffusionError::MissingImage);
    }
    let l = layer.unwrap_or(model.config().layers - 1);
    if l >= model.config().layers {
        return Err(DiffusionError::BadConfig(format!("layer {l} out of range")));
    }
    let (_, rec) = model.denoise_step(x_t, t, cond)?;
    Ok(AttentionMap {
        layer: l,
        rows: rec.layers[l].clone(),
    })
}

/// One layer of an [`AttentionRecord`]: `MAX_PARTS` rows of 256 weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AttentionMap {
    pub layer: usize,
    pub rows: Vec<Vec<f32>>,
}

impl AttentionMap {
    /// Patch index with the largest weight for `part`.
    pub fn argmax_patch(&self, part: usize) -> usize {
        let row = &self.rows[part];
        (0..row.len()).fold(0, |best, i| if row[i] > row[best] { i } else { best })
    }

    /// `part,row,col,weight` lines for the first `n_parts` parts; row 0 is
    /// the top of the image.
    pub fn to_csv(&self, n_parts: usize) -> String {
        let mut out = String::from("part,row,col,weight\n");
        for (p, w) in self.rows.iter().enumerate().take(n_parts) {
            for (i, v) in w.iter().enumerate() {
                out.push_str(&format!("{p},{},{},{v}\n", i / GRID, i % GRID));
            }
        }
        out
    }
}

impl From<&AttentionRecord> for Vec<AttentionMap> {
    fn from(r: &AttentionRecord) -> Self {
        r.layers
            .iter()
            .enumerate()
            .map(|(layer, rows)| AttentionMap { layer, rows: rows.clone() })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diffusion::model::tests::{example, perturbed, tiny};
    use crate::kinematics::AdjacencyMatrix;

    #[test]
    fn omega_zero_collapses() {
        let m = perturbed(tiny(), 11);
        let (x, cond) = example(2);
        let g = cfg_epsilon(&m, &x, 17, &cond, 0.0).unwrap();
        let (c, _) = m.denoise_step(&x, 17, &cond).unwrap();
        for (a, b) in g.data.iter().zip(&c.data) {
            assert!((a - b).abs() <= 1e-6);
        }
    }

    #[test]
    fn affine_in_omega() {
        let m = perturbed(tiny(), 12);
        let (x, cond) = example(3);
        let e: Vec<_> = [0.0, 1.0, 2.0].iter().map(|w| cfg_epsilon(&m, &x, 9, &cond, *w).unwrap()).collect();
        for i in 0..x.data.len() {
            let mid = 0.5 * (e[0].data[i] + e[2].data[i]);
            assert!((mid - e[1].data[i]).abs() < 1e-9);
        }
        assert!(matches!(
            cfg_epsilon(&m, &x, 9, &cond.without_image(), 1.0),
            Err(DiffusionError::MissingImage)
        ));
    }

    #[test]
    fn deterministic_and_masked() {
        let m = perturbed(tiny(), 13);
        let (_, mut cond) = example(4);
        let n = cond.graph.as_ref().unwrap().n_nodes;
        let s = m.config().schedule().unwrap();
        let cfg = SamplerConfig {
            seed: 9,
            ..Default::default()
        };
        let a = sample(&m, &cond, &cfg, &s, &[]).unwrap();
        let b = sample(&m, &cond, &cfg, &s, &[]).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n_parts(), n);
        cond.graph = Some(AdjacencyMatrix::self_only(MAX_PARTS, 3));
        assert_eq!(sample(&m, &cond, &cfg, &s, &[]).unwrap().n_parts(), 3);
        cond.graph = None;
        assert!(matches!(sample(&m, &cond, &cfg, &s, &[]), Err(DiffusionError::MissingGraph)));
    }

    #[test]
    fn pins_hold_exactly() {
        let m = perturbed(tiny(), 14);
        let (_, cond) = example(4);
        let s = m.config().schedule().unwrap();
        let pin = Pin {
            part: 1,
            row: 0,
            values: [0.1, -0.2, 0.3, 0.05, 0.1, 0.2],
        };
        let x = sample(&m, &cond, &SamplerConfig::default(), &s, &[pin]).unwrap();
        assert_eq!(x.row(1, 0), &pin.values);
        let bad = Pin { part: 40, ..pin };
        assert!(matches!(
            sample(&m, &cond, &SamplerConfig::default(), &s, &[bad]),
            Err(DiffusionError::BadPin { .. })
        ));
    }

    #[test]
    fn export_rows() {
        let m = perturbed(tiny(), 15);
        let (x, cond) = example(5);
        let rec = export_attention(&m, &x, 3, &cond, None).unwrap();
        assert_eq!(rec.layer, 1);
        for (p, row) in rec.rows.iter().enumerate() {
            let s: f32 = row.iter().sum();
            if p < x.n_parts() {
                assert!((s - 1.0).abs() < 1e-5);
            } else {
                assert_eq!(s, 0.0);
            }
        }
        assert_eq!(rec.to_csv(2).lines().count(), 1 + 2 * 256);
        assert!(export_attention(&m, &x, 3, &cond.without_image(), None).is_err());
    }
}
