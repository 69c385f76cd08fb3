//! The attention-block denoiser.
//!
//! Every attribute row of every part is one token (5 per part). Each layer
//! runs, in order: attention within a part, attention over all parts,
//! attention restricted to graph-adjacent parts, cross-attention from the
//! bounding-box tokens to the image patches, and a feed-forward block. All
//! five are pre-norm residual blocks whose norm shift, scale and output gate
//! come from the timestep (plus category) embedding.

use std::collections::BTreeMap;

use candle_core::{DType, Device, Tensor, Var, D};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};

use super::cond::ConditioningBundle;
use super::config::DenoiserConfig;
use super::{DiffusionError, Result};
use crate::conditioning::N_PATCHES;
use crate::dataset::{AttributeTensor, ATTR_DIM, N_ATTRS, PART_STRIDE, ROW_BBOX};
use crate::kinematics::MAX_PARTS;

const SUBLAYERS: usize = 5;
const LOCAL: usize = 0;
const GLOBAL: usize = 1;
const GRAPH: usize = 2;
const CROSS: usize = 3;
const FFN: usize = 4;
const FFN_MULT: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq)]
enum Init {
    /// U(-1/sqrt(fan_in), 1/sqrt(fan_in))
    FanIn,
    Normal(f64),
    Zeros,
}

/// Name, shape and initializer of every learnable tensor, in a fixed order.
pub fn parameter_manifest(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>)> {
    param_specs(cfg).into_iter().map(|(n, s, _)| (n, s)).collect()
}

fn param_specs(cfg: &DenoiserConfig) -> Vec<(String, Vec<usize>, Init)> {
    let h = cfg.hidden;
    let mut out = Vec::new();
    let linear = |out: &mut Vec<_>, name: &str, o: usize, i: usize, zero: bool| {
        out.push((format!("{name}.weight"), vec![o, i], if zero { Init::Zeros } else { Init::FanIn }));
        out.push((format!("{name}.bias"), vec![o], Init::Zeros));
    };
    linear(&mut out, "embed.in", h, ATTR_DIM, false);
    out.push(("embed.row".into(), vec![N_ATTRS, h], Init::Normal(0.02)));
    out.push(("embed.part".into(), vec![MAX_PARTS, h], Init::Normal(0.02)));
    linear(&mut out, "time.fc1", h, h, false);
    linear(&mut out, "time.fc2", h, h, false);
    out.push(("category.embed".into(), vec![cfg.categories.max(1), h], Init::Normal(0.02)));
    linear(&mut out, "image.proj", h, cfg.d_f, false);
    out.push(("image.pos".into(), vec![N_PATCHES, h], Init::Normal(0.02)));
    for l in 0..cfg.layers {
        linear(&mut out, &format!("layers.{l}.modulation"), 3 * SUBLAYERS * h, h, true);
        for a in ["local", "global", "graph", "cross"] {
            for p in ["q", "k", "v", "o"] {
                linear(&mut out, &format!("layers.{l}.{a}.{p}"), h, h, false);
            }
        }
        linear(&mut out, &format!("layers.{l}.ffn.fc1"), FFN_MULT * h, h, false);
        linear(&mut out, &format!("layers.{l}.ffn.fc2"), h, FFN_MULT * h, false);
    }
    linear(&mut out, "final.modulation", 2 * h, h, true);
    linear(&mut out, "final.out", ATTR_DIM, h, true);
    out
}

/// Parameters trained at the image cross-attention learning rate.
pub fn is_image_param(name: &str) -> bool {
    name.starts_with("image.") || name.contains(".cross.")
}

#[derive(Debug, Clone)]
struct Linear {
    w: Tensor,
    b: Tensor,
}

impl Linear {
    fn forward(&self, x: &Tensor) -> candle_core::Result<Tensor> {
        let dims = x.dims().to_vec();
        let last = *dims.last().expect("rank >= 1");
        let lead: usize = dims[..dims.len() - 1].iter().product();
        let y = x.reshape((lead, last))?.matmul(&self.w.t()?)?.broadcast_add(&self.b)?;
        let mut shape = dims;
        *shape.last_mut().expect("rank >= 1") = self.w.dim(0)?;
        y.reshape(shape)
    }
}

#[derive(Debug, Clone)]
struct Attn {
    q: Linear,
    k: Linear,
    v: Linear,
    o: Linear,
}

#[derive(Debug, Clone)]
struct Layer {
    modulation: Linear,
    attn: [Attn; 4],
    fc1: Linear,
    fc2: Linear,
}

#[derive(Debug, Clone)]
struct Weights {
    embed_in: Linear,
    row_emb: Tensor,
    part_emb: Tensor,
    time1: Linear,
    time2: Linear,
    cat_emb: Tensor,
    img_proj: Linear,
    img_pos: Tensor,
    layers: Vec<Layer>,
    final_mod: Linear,
    out: Linear,
}

impl Weights {
    fn build(cfg: &DenoiserConfig, vars: &BTreeMap<String, Var>) -> Self {
        let t = |n: &str| vars[n].as_tensor().clone();
        let lin = |n: &str| Linear {
            w: t(&format!("{n}.weight")),
            b: t(&format!("{n}.bias")),
        };
        let attn = |l: usize, a: &str| Attn {
            q: lin(&format!("layers.{l}.{a}.q")),
            k: lin(&format!("layers.{l}.{a}.k")),
            v: lin(&format!("layers.{l}.{a}.v")),
            o: lin(&format!("layers.{l}.{a}.o")),
        };
        Weights {
            embed_in: lin("embed.in"),
            row_emb: t("embed.row"),
            part_emb: t("embed.part"),
            time1: lin("time.fc1"),
            time2: lin("time.fc2"),
            cat_emb: t("category.embed"),
            img_proj: lin("image.proj"),
            img_pos: t("image.pos"),
            layers: (0..cfg.layers)
                .map(|l| Layer {
                    modulation: lin(&format!("layers.{l}.modulation")),
                    attn: [attn(l, "local"), attn(l, "global"), attn(l, "graph"), attn(l, "cross")],
                    fc1: lin(&format!("layers.{l}.ffn.fc1")),
                    fc2: lin(&format!("layers.{l}.ffn.fc2")),
                })
                .collect(),
            final_mod: lin("final.modulation"),
            out: lin("final.out"),
        }
    }
}

/// Head-averaged cross-attention from each part's bounding-box token to the
/// 256 patches, per layer. Rows of padded parts are zero; the record is
/// empty when the image path was skipped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AttentionRecord {
    /// `[layer][part][patch]`, `MAX_PARTS` parts per layer.
    pub layers: Vec<Vec<Vec<f32>>>,
}

/// One denoiser input.
#[derive(Debug, Clone, Copy)]
pub struct DenoiseInput<'a> {
    pub x_t: &'a AttributeTensor,
    pub t: usize,
    pub cond: &'a ConditioningBundle,
}

pub(crate) struct Forward {
    /// `[B, 5P, 6]`
    pub eps: Tensor,
    /// Per layer `[B, 5P, 256]`, empty when no sample carries an image.
    pub cross: Vec<Tensor>,
    /// Per layer `[B, heads, 5P, 5P]`, only when traced.
    pub graph: Vec<Tensor>,
    pub parts: usize,
    pub image_on: Vec<bool>,
}

#[derive(Debug)]
pub struct Denoiser {
    cfg: DenoiserConfig,
    vars: BTreeMap<String, Var>,
    w: Weights,
}

fn layer_norm(x: &Tensor) -> candle_core::Result<Tensor> {
    let mean = x.mean_keepdim(D::Minus1)?;
    let xc = x.broadcast_sub(&mean)?;
    let var = xc.sqr()?.mean_keepdim(D::Minus1)?;
    xc.broadcast_div(&(var + 1e-6)?.sqrt()?)
}

/// `LN(x) * (1 + scale) + shift` with `[B, H]` modulation.
fn modulate(x: &Tensor, shift: &Tensor, scale: &Tensor) -> candle_core::Result<Tensor> {
    layer_norm(x)?
        .broadcast_mul(&(scale.unsqueeze(1)? + 1.0)?)?
        .broadcast_add(&shift.unsqueeze(1)?)
}

fn timestep_embedding(t: &[usize], dim: usize) -> Vec<f32> {
    let half = dim / 2;
    let mut out = vec![0f32; t.len() * dim];
    for (b, &step) in t.iter().enumerate() {
        for i in 0..half {
            let f = (-(10_000f64.ln()) * i as f64 / half as f64).exp();
            let a = step as f64 * f;
            out[b * dim + i] = a.sin() as f32;
            out[b * dim + half + i] = a.cos() as f32;
        }
    }
    out
}

fn cerr(e: candle_core::Error) -> DiffusionError {
    DiffusionError::Candle(e.to_string())
}

impl Denoiser {
    /// Fresh weights drawn from a ChaCha stream seeded with `seed`.
    pub fn new(cfg: DenoiserConfig, seed: u64) -> Result<Self> {
        cfg.check()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut tensors = BTreeMap::new();
        for (name, shape, init) in param_specs(&cfg) {
            let n: usize = shape.iter().product();
            let data: Vec<f32> = match init {
                Init::Zeros => vec![0.0; n],
                Init::Normal(std) => {
                    let d = Normal::new(0.0, std).expect("positive std");
                    (0..n).map(|_| d.sample(&mut rng) as f32).collect()
                }
                Init::FanIn => {
                    let bound = 1.0 / (*shape.last().expect("2-d weight") as f64).sqrt();
                    let d = Uniform::new_inclusive(-bound, bound).expect("finite bound");
                    (0..n).map(|_| d.sample(&mut rng) as f32).collect()
                }
            };
            tensors.insert(name, Tensor::from_vec(data, shape, &Device::Cpu).map_err(cerr)?);
        }
        Self::from_tensors(cfg, tensors)
    }

    /// Wraps named tensors; names and shapes must match the manifest exactly.
    pub fn from_tensors(cfg: DenoiserConfig, mut tensors: BTreeMap<String, Tensor>) -> Result<Self> {
        cfg.check()?;
        let mut vars = BTreeMap::new();
        for (name, shape) in parameter_manifest(&cfg) {
            let t = tensors
                .remove(&name)
                .ok_or_else(|| DiffusionError::Checkpoint(format!("missing tensor {name}")))?;
            if t.dims() != shape.as_slice() {
                return Err(DiffusionError::Checkpoint(format!(
                    "tensor {name} has shape {:?}, expected {shape:?}",
                    t.dims()
                )));
            }
            let t = t.to_dtype(DType::F32).map_err(cerr)?;
            vars.insert(name, Var::from_tensor(&t).map_err(cerr)?);
        }
        if let Some(extra) = tensors.keys().next() {
            return Err(DiffusionError::Checkpoint(format!("unexpected tensor {extra}")));
        }
        let w = Weights::build(&cfg, &vars);
        Ok(Denoiser { cfg, vars, w })
    }

    pub fn config(&self) -> &DenoiserConfig {
        &self.cfg
    }

    pub fn vars(&self) -> &BTreeMap<String, Var> {
        &self.vars
    }

    /// Independent copy of the weights.
    pub fn snapshot(&self) -> Result<Self> {
        let tensors = self
            .vars
            .iter()
            .map(|(n, v)| Ok((n.clone(), v.as_tensor().copy().map_err(cerr)?)))
            .collect::<Result<BTreeMap<_, _>>>()?;
        Self::from_tensors(self.cfg.clone(), tensors)
    }

    pub fn parameter_count(&self) -> usize {
        self.vars.values().map(|v| v.elem_count()).sum()
    }

    fn mha(&self, a: &Attn, xq: &Tensor, xkv: &Tensor, mask: Option<&Tensor>) -> candle_core::Result<(Tensor, Tensor)> {
        let (b, nq, h) = xq.dims3()?;
        let nk = xkv.dim(1)?;
        let nh = self.cfg.heads;
        let dh = h / nh;
        let split = |x: Tensor, n: usize| x.reshape((b, n, nh, dh))?.transpose(1, 2)?.contiguous();
        let q = split(a.q.forward(xq)?, nq)?;
        let k = split(a.k.forward(xkv)?, nk)?;
        let v = split(a.v.forward(xkv)?, nk)?;
        let mut s = (q.matmul(&k.t()?.contiguous()?)? * (1.0 / (dh as f64).sqrt()))?;
        if let Some(m) = mask {
            s = s.broadcast_add(m)?;
        }
        let w = candle_nn::ops::softmax(&s, D::Minus1)?;
        let o = w.matmul(&v)?.transpose(1, 2)?.reshape((b, nq, h))?;
        Ok((a.o.forward(&o)?, w))
    }

    fn check_input(&self, inp: &DenoiseInput) -> Result<()> {
        if inp.x_t.data.len() != MAX_PARTS * PART_STRIDE || inp.x_t.mask.len() != MAX_PARTS {
            return Err(DiffusionError::ShapeMismatch {
                expected: MAX_PARTS * PART_STRIDE,
                found: inp.x_t.data.len(),
            });
        }
        if inp.t == 0 || inp.t > self.cfg.steps {
            return Err(DiffusionError::BadTimestep {
                t: inp.t,
                steps: self.cfg.steps,
            });
        }
        if let Some(f) = &inp.cond.features {
            if f.d_f != self.cfg.d_f {
                return Err(DiffusionError::ShapeMismatch {
                    expected: self.cfg.d_f,
                    found: f.d_f,
                });
            }
        }
        if let Some(c) = inp.cond.category {
            if c >= self.cfg.categories {
                return Err(DiffusionError::BadConfig(format!("category index {c} out of range")));
            }
        }
        Ok(())
    }

    /// Batched forward pass. Samples are padded to the largest part count
    /// in the batch; padded tokens attend only to themselves and never to
    /// real tokens.
    pub(crate) fn forward(&self, inputs: &[DenoiseInput], trace_graph: bool) -> Result<Forward> {
        for inp in inputs {
            self.check_input(inp)?;
        }
        self.forward_unchecked(inputs, trace_graph).map_err(cerr)
    }

    fn forward_unchecked(&self, inputs: &[DenoiseInput], trace_graph: bool) -> candle_core::Result<Forward> {
        let dev = Device::Cpu;
        let b = inputs.len();
        let h = self.cfg.hidden;
        let parts = inputs
            .iter()
            .map(|i| i.x_t.mask.iter().rposition(|m| *m).map_or(1, |p| p + 1))
            .max()
            .unwrap_or(1);
        let n = parts * N_ATTRS;

        let mut x = vec![0f32; b * n * ATTR_DIM];
        let mut valid = vec![0f32; b * n];
        let mut bbox_rows = vec![0f32; b * n];
        let mut masks = vec![vec![f32::NEG_INFINITY; b * n * n]; 3];
        let mut cat = vec![0f32; b * self.cfg.categories.max(1)];
        let image_on: Vec<bool> = inputs.iter().map(|i| i.cond.features.is_some()).collect();
        let any_image = image_on.iter().any(|v| *v);
        let mut feats = vec![0f32; if any_image { b * N_PATCHES * self.cfg.d_f } else { 0 }];
        for (s, inp) in inputs.iter().enumerate() {
            x[s * n * ATTR_DIM..(s + 1) * n * ATTR_DIM]
                .iter_mut()
                .zip(&inp.x_t.data[..parts * PART_STRIDE])
                .for_each(|(d, v)| *d = *v as f32);
            let adj = inp.cond.part_adjacency(parts);
            let real = |p: usize| inp.x_t.mask[p];
            for i in 0..n {
                let pi = i / N_ATTRS;
                if real(pi) {
                    valid[s * n + i] = 1.0;
                    if i % N_ATTRS == ROW_BBOX {
                        bbox_rows[s * n + i] = 1.0;
                    }
                }
                for j in 0..n {
                    let pj = j / N_ATTRS;
                    let both = real(pi) && real(pj);
                    let o = s * n * n + i * n + j;
                    let allow = [both && pi == pj, both, both && adj[pi][pj]];
                    for (m, ok) in masks.iter_mut().zip(allow) {
                        if ok || i == j {
                            m[o] = 0.0;
                        }
                    }
                }
            }
            if let Some(c) = inp.cond.category {
                cat[s * self.cfg.categories + c] = 1.0;
            }
            if let Some(f) = &inp.cond.features {
                feats[s * N_PATCHES * self.cfg.d_f..(s + 1) * N_PATCHES * self.cfg.d_f].copy_from_slice(&f.features);
            }
        }
        let x = Tensor::from_vec(x, (b, n, ATTR_DIM), &dev)?;
        let valid = Tensor::from_vec(valid, (b, n, 1), &dev)?;
        let bbox_rows = Tensor::from_vec(bbox_rows, (b, n, 1), &dev)?;
        let masks: Vec<Tensor> = masks
            .into_iter()
            .map(|m| Tensor::from_vec(m, (b, 1, n, n), &dev))
            .collect::<candle_core::Result<_>>()?;
        let tvals: Vec<usize> = inputs.iter().map(|i| i.t).collect();
        let temb = Tensor::from_vec(timestep_embedding(&tvals, h), (b, h), &dev)?;
        let cat = Tensor::from_vec(cat, (b, self.cfg.categories.max(1)), &dev)?;

        let w = &self.w;
        let c = (w.time2.forward(&w.time1.forward(&temb)?.silu()?)? + cat.matmul(&w.cat_emb)?)?;
        let c = c.silu()?;
        let rows: Vec<u32> = (0..n).map(|i| (i % N_ATTRS) as u32).collect();
        let pids: Vec<u32> = (0..n).map(|i| (i / N_ATTRS) as u32).collect();
        let pos = (w.row_emb.index_select(&Tensor::new(rows.as_slice(), &dev)?, 0)?
            + w.part_emb.index_select(&Tensor::new(pids.as_slice(), &dev)?, 0)?)?;
        let mut hs = w.embed_in.forward(&x)?.broadcast_add(&pos)?;

        let kv = if any_image {
            let f = Tensor::from_vec(feats, (b, N_PATCHES, self.cfg.d_f), &dev)?;
            let on: Vec<f32> = image_on.iter().map(|v| *v as u8 as f32).collect();
            let on = Tensor::from_vec(on, (b, 1, 1), &dev)?;
            Some((w.img_proj.forward(&f)?.broadcast_add(&w.img_pos)?, bbox_rows.broadcast_mul(&on)?))
        } else {
            None
        };

        let mut cross = Vec::new();
        let mut graph = Vec::new();
        for layer in &w.layers {
            let m = layer.modulation.forward(&c)?.chunk(3 * SUBLAYERS, 1)?;
            let shift = |s: usize| &m[3 * s];
            let scale = |s: usize| &m[3 * s + 1];
            let gate = |s: usize| &m[3 * s + 2];
            for s in [LOCAL, GLOBAL, GRAPH] {
                let hn = modulate(&hs, shift(s), scale(s))?;
                let (a, wts) = self.mha(&layer.attn[s], &hn, &hn, Some(&masks[s]))?;
                hs = (hs + a.broadcast_mul(&gate(s).unsqueeze(1)?)?)?;
                if s == GRAPH && trace_graph {
                    graph.push(wts);
                }
            }
            if let Some((kv, route)) = &kv {
                let hn = modulate(&hs, shift(CROSS), scale(CROSS))?;
                let (a, wts) = self.mha(&layer.attn[CROSS], &hn, kv, None)?;
                let a = a.broadcast_mul(route)?.broadcast_mul(&gate(CROSS).unsqueeze(1)?)?;
                hs = (hs + a)?;
                cross.push(wts.mean(1)?);
            }
            let hn = modulate(&hs, shift(FFN), scale(FFN))?;
            let a = layer.fc2.forward(&layer.fc1.forward(&hn)?.gelu_erf()?)?;
            hs = (hs + a.broadcast_mul(&gate(FFN).unsqueeze(1)?)?)?;
        }
        let fm = w.final_mod.forward(&c)?.chunk(2, 1)?;
        let eps = w.out.forward(&modulate(&hs, &fm[0], &fm[1])?)?.broadcast_mul(&valid)?;
        Ok(Forward {
            eps,
            cross,
            graph,
            parts,
            image_on,
        })
    }

    /// ε̂ for each input, zero on padded parts, plus the cross-attention
    /// record of each.
    pub fn denoise_batch(&self, inputs: &[DenoiseInput]) -> Result<Vec<(AttributeTensor, AttentionRecord)>> {
        if inputs.is_empty() {
            return Ok(Vec::new());
        }
        let fwd = self.forward(inputs, false)?;
        let eps: Vec<Vec<Vec<f32>>> = fwd.eps.to_vec3().map_err(cerr)?;
        let cross: Vec<Vec<Vec<Vec<f32>>>> = fwd
            .cross
            .iter()
            .map(|t| t.to_vec3::<f32>())
            .collect::<candle_core::Result<_>>()
            .map_err(cerr)?;
        let mut out = Vec::with_capacity(inputs.len());
        for (s, inp) in inputs.iter().enumerate() {
            let mut e = AttributeTensor {
                data: vec![0.0; MAX_PARTS * PART_STRIDE],
                mask: inp.x_t.mask.clone(),
            };
            for (tok, row) in eps[s].iter().enumerate() {
                for (k, v) in row.iter().enumerate() {
                    e.data[tok * ATTR_DIM + k] = *v as f64;
                }
            }
            if e.data.iter().any(|v| !v.is_finite()) {
                return Err(DiffusionError::NonFiniteActivation);
            }
            let mut rec = AttentionRecord::default();
            if fwd.image_on[s] {
                for layer in &cross {
                    let mut rows = vec![vec![0f32; N_PATCHES]; MAX_PARTS];
                    for (p, row) in rows.iter_mut().enumerate().take(fwd.parts) {
                        if inp.x_t.mask[p] {
                            row.copy_from_slice(&layer[s][p * N_ATTRS + ROW_BBOX]);
                        }
                    }
                    rec.layers.push(rows);
                }
            }
            out.push((e, rec));
        }
        Ok(out)
    }

    /// One denoiser evaluation.
    pub fn denoise_step(
        &self,
        x_t: &AttributeTensor,
        t: usize,
        cond: &ConditioningBundle,
    ) -> Result<(AttributeTensor, AttentionRecord)> {
        Ok(self
            .denoise_batch(&[DenoiseInput { x_t, t, cond }])?
            .pop()
            .expect("one input, one output"))
    }

    /// Post-softmax graph-relation attention, `[layer][head][i][j]` over the
    /// `5 * parts` tokens of the real and in-between padded parts.
    pub fn graph_attention(
        &self,
        x_t: &AttributeTensor,
        t: usize,
        cond: &ConditioningBundle,
    ) -> Result<Vec<Vec<Vec<Vec<f32>>>>> {
        let fwd = self.forward(&[DenoiseInput { x_t, t, cond }], true)?;
        fwd.graph
            .iter()
            .map(|g| g.squeeze(0)?.to_vec3::<f32>())
            .collect::<candle_core::Result<_>>()
            .map_err(cerr)
    }
}
