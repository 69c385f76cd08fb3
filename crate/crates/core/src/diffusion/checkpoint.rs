//! Checkpoints are safetensors files. The header metadata carries
//! `format = "artic-denoiser"`, `version = "1"` and the JSON-encoded
//! [`DenoiserConfig`]; tensors are f32 and named as in
//! [`parameter_manifest`](super::parameter_manifest).

use std::collections::{BTreeMap, HashMap};
use std::path::Path;

use candle_core::{Device, Tensor};
use safetensors::{Dtype, SafeTensors};

use super::config::DenoiserConfig;
use super::model::Denoiser;
use super::{DiffusionError, Result};

pub const CHECKPOINT_FORMAT: &str = "artic-denoiser";
pub const CHECKPOINT_VERSION: &str = "1";

fn bad(m: impl std::fmt::Display) -> DiffusionError {
    DiffusionError::Checkpoint(m.to_string())
}

pub fn checkpoint_bytes(model: &Denoiser) -> Result<Vec<u8>> {
    let mut raw: Vec<(String, Vec<usize>, Vec<u8>)> = Vec::new();
    for (name, var) in model.vars() {
        let values = var.as_tensor().flatten_all().and_then(|t| t.to_vec1::<f32>()).map_err(bad)?;
        let bytes = values.iter().flat_map(|v| v.to_le_bytes()).collect();
        raw.push((name.clone(), var.dims().to_vec(), bytes));
    }
    let views = raw
        .iter()
        .map(|(n, s, b)| Ok((n.as_str(), safetensors::tensor::TensorView::new(Dtype::F32, s.clone(), b).map_err(bad)?)))
        .collect::<Result<Vec<_>>>()?;
    let meta = HashMap::from([
        ("format".to_string(), CHECKPOINT_FORMAT.to_string()),
        ("version".to_string(), CHECKPOINT_VERSION.to_string()),
        ("config".to_string(), serde_json::to_string(model.config()).map_err(bad)?),
    ]);
    let bytes = safetensors::serialize(views, Some(meta)).map_err(bad)?;
    sort_header(bytes)
}

/// Rewrites the JSON header with sorted keys so that equal models give equal
/// bytes; the metadata map is otherwise written in hash order.
fn sort_header(mut bytes: Vec<u8>) -> Result<Vec<u8>> {
    let n = u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes")) as usize;
    let header = &bytes[8..8 + n];
    let mut top: BTreeMap<String, serde_json::Value> = serde_json::from_slice(header).map_err(bad)?;
    if let Some(meta) = top.get_mut("__metadata__") {
        let sorted: BTreeMap<String, String> = serde_json::from_value(meta.take()).map_err(bad)?;
        *meta = serde_json::to_value(sorted).map_err(bad)?;
    }
    let mut text = serde_json::to_vec(&top).map_err(bad)?;
    if text.len() > n {
        return Err(bad("sorted header grew"));
    }
    text.resize(n, b' ');
    bytes[8..8 + n].copy_from_slice(&text);
    Ok(bytes)
}

pub fn parse_checkpoint(bytes: &[u8]) -> Result<Denoiser> {
    let (_, header) = SafeTensors::read_metadata(bytes).map_err(bad)?;
    let meta = header.metadata().clone().unwrap_or_default();
    if meta.get("format").map(String::as_str) != Some(CHECKPOINT_FORMAT) {
        return Err(bad("not a denoiser checkpoint"));
    }
    if meta.get("version").map(String::as_str) != Some(CHECKPOINT_VERSION) {
        return Err(bad(format!("unsupported checkpoint version {:?}", meta.get("version"))));
    }
    let cfg: DenoiserConfig = serde_json::from_str(meta.get("config").ok_or_else(|| bad("missing config"))?).map_err(bad)?;
    let st = SafeTensors::deserialize(bytes).map_err(bad)?;
    let mut tensors = BTreeMap::new();
    for (name, view) in st.tensors() {
        if view.dtype() != Dtype::F32 {
            return Err(bad(format!("tensor {name} is {:?}, expected F32", view.dtype())));
        }
        let values: Vec<f32> = view
            .data()
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes")))
            .collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(bad(format!("tensor {name} has non-finite values")));
        }
        tensors.insert(name, Tensor::from_vec(values, view.shape().to_vec(), &Device::Cpu).map_err(bad)?);
    }
    Denoiser::from_tensors(cfg, tensors)
}

pub fn save_checkpoint(model: &Denoiser, path: &Path) -> Result<()> {
    std::fs::write(path, checkpoint_bytes(model)?).map_err(|e| DiffusionError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })
}

pub fn load_checkpoint(path: &Path) -> Result<Denoiser> {
    let bytes = std::fs::read(path).map_err(|e| DiffusionError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    parse_checkpoint(&bytes)
}
