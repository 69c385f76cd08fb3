use candle_core::{Device, Tensor, D};

use super::model::AttentionRecord;
use crate::conditioning::{ForegroundMask, N_PATCHES};
use crate::dataset::{N_ATTRS, ROW_BBOX};

/// Foreground loss of one record: per layer and part,
/// `1 - Σ A·M + Σ A·(1 - M)`, summed over the first `n_parts` parts and
/// averaged over layers. Zero for an empty record.
pub fn foreground_loss(attn: &AttentionRecord, fg: &ForegroundMask, n_parts: usize) -> f64 {
    if attn.layers.is_empty() {
        return 0.0;
    }
    let total: f64 = attn
        .layers
        .iter()
        .map(|layer| {
            layer
                .iter()
                .take(n_parts)
                .map(|row| {
                    let (inside, outside) = row.iter().enumerate().fold((0.0, 0.0), |(a, b), (i, w)| {
                        if fg.get(i) {
                            (a + *w as f64, b)
                        } else {
                            (a, b + *w as f64)
                        }
                    });
                    1.0 - inside + outside
                })
                .sum::<f64>()
        })
        .sum();
    total / attn.layers.len() as f64
}

/// Batched foreground loss on the bbox-token cross-attention maps
/// (`[B, 5P, 256]` per layer), averaged over the samples with `weights[s]`
/// set. `part_valid` is `[B, P]`, `fg` is `[B, 256]`.
pub(crate) fn foreground_loss_tensor(
    cross: &[Tensor],
    part_valid: &[f32],
    fg: &[f32],
    sample_on: &[bool],
) -> candle_core::Result<Option<Tensor>> {
    let n_on = sample_on.iter().filter(|v| **v).count();
    if cross.is_empty() || n_on == 0 {
        return Ok(None);
    }
    let (b, n, _) = cross[0].dims3()?;
    let p = n / N_ATTRS;
    let dev = Device::Cpu;
    let weight: Vec<f32> = (0..b * p)
        .map(|i| if sample_on[i / p] { part_valid[i] } else { 0.0 })
        .collect();
    let weight = Tensor::from_vec(weight, (b, p), &dev)?;
    let m = Tensor::from_vec(fg.to_vec(), (b, 1, N_PATCHES), &dev)?;
    let not_m = (1.0 - &m)?;
    let mut total: Option<Tensor> = None;
    for a in cross {
        let bbox = a.reshape((b, p, N_ATTRS, N_PATCHES))?.narrow(2, ROW_BBOX, 1)?.squeeze(2)?;
        let inside = bbox.broadcast_mul(&m)?.sum(D::Minus1)?;
        let outside = bbox.broadcast_mul(&not_m)?.sum(D::Minus1)?;
        let term = ((1.0 - inside)? + outside)?.mul(&weight)?.sum_all()?;
        total = Some(match total {
            Some(t) => (t + term)?,
            None => term,
        });
    }
    let total = total.expect("at least one layer");
    Ok(Some((total / (cross.len() * n_on) as f64)?))
}
