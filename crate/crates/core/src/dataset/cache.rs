//! Binary cache of encoded objects, little-endian throughout:
//!
//! ```text
//! "ATCC" u32 version=1 u32 count
//! per object:
//!   u32 id_len, id bytes
//!   i32 category index (-1 for none)
//!   u32 n_parts, then per part: u32 id, u8 label, i64 parent (-1 for root)
//!   MAX_PARTS mask bytes
//!   MAX_PARTS * 30 f64 attribute values
//! ```

use std::io::{Read, Write};
use std::path::Path;

use super::encoding::{AttributeTensor, PART_STRIDE};
use super::{DatasetError, Result};
use crate::kinematics::{ConnectivityGraph, GraphNode, SemanticLabel, MAX_PARTS};

const MAGIC: &[u8; 4] = b"ATCC";
const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct CachedObject {
    pub id: String,
    pub category: Option<usize>,
    pub graph: ConnectivityGraph,
    pub tensor: AttributeTensor,
}

pub fn write_cache(path: &Path, objects: &[CachedObject]) -> Result<()> {
    let mut buf = Vec::new();
    buf.extend_from_slice(MAGIC);
    buf.extend_from_slice(&VERSION.to_le_bytes());
    buf.extend_from_slice(&(objects.len() as u32).to_le_bytes());
    for o in objects {
        buf.extend_from_slice(&(o.id.len() as u32).to_le_bytes());
        buf.extend_from_slice(o.id.as_bytes());
        buf.extend_from_slice(&o.category.map_or(-1i32, |c| c as i32).to_le_bytes());
        let nodes = o.graph.node_list();
        buf.extend_from_slice(&(nodes.len() as u32).to_le_bytes());
        for n in nodes {
            buf.extend_from_slice(&n.id.to_le_bytes());
            buf.push(n.label.index() as u8);
            buf.extend_from_slice(&n.parent.map_or(-1i64, i64::from).to_le_bytes());
        }
        buf.extend(o.tensor.mask.iter().map(|m| *m as u8));
        for v in &o.tensor.data {
            buf.extend_from_slice(&v.to_le_bytes());
        }
    }
    let mut f = std::fs::File::create(path).map_err(|e| io_err(path, e))?;
    f.write_all(&buf).map_err(|e| io_err(path, e))
}

fn io_err(path: &Path, e: std::io::Error) -> DatasetError {
    DatasetError::Io {
        path: path.display().to_string(),
        reason: e.to_string(),
    }
}

struct Cursor<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or(DatasetError::TruncatedCache)?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    fn u32(&mut self) -> Result<u32> {
        self.array().map(u32::from_le_bytes)
    }
}

pub fn read_cache(path: &Path) -> Result<Vec<CachedObject>> {
    let mut buf = Vec::new();
    std::fs::File::open(path)
        .and_then(|mut f| f.read_to_end(&mut buf))
        .map_err(|e| io_err(path, e))?;
    let mut c = Cursor { buf: &buf, pos: 0 };
    if c.take(4)? != MAGIC || c.u32()? != VERSION {
        return Err(DatasetError::BadCache);
    }
    let count = c.u32()?;
    let mut out = Vec::new();
    for _ in 0..count {
        let len = c.u32()? as usize;
        let id = String::from_utf8(c.take(len)?.to_vec()).map_err(|_| DatasetError::BadCache)?;
        let cat = c.array().map(i32::from_le_bytes)?;
        let n = c.u32()? as usize;
        if n > MAX_PARTS {
            return Err(DatasetError::BadCache);
        }
        let mut nodes = Vec::with_capacity(n);
        for _ in 0..n {
            let id = c.u32()?;
            let label = SemanticLabel::from_index(c.take(1)?[0] as usize).ok_or(DatasetError::BadCache)?;
            let parent = c.array().map(i64::from_le_bytes)?;
            nodes.push(GraphNode {
                id,
                label,
                parent: (parent >= 0).then_some(parent as u32),
            });
        }
        let mask = c.take(MAX_PARTS)?.iter().map(|b| *b != 0).collect();
        let data = (0..MAX_PARTS * PART_STRIDE)
            .map(|_| c.array().map(f64::from_le_bytes))
            .collect::<Result<Vec<_>>>()?;
        out.push(CachedObject {
            id,
            category: (cat >= 0).then_some(cat as usize),
            graph: ConnectivityGraph::from_nodes(nodes),
            tensor: AttributeTensor { data, mask },
        });
    }
    if c.pos != buf.len() {
        return Err(DatasetError::BadCache);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{encode_attributes, synth::synth_object};

    #[test]
    fn round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.bin");
        let objs: Vec<CachedObject> = (0..3)
            .map(|s| {
                let r = synth_object("StorageFurniture", s);
                CachedObject {
                    id: r.id.clone(),
                    category: if s == 1 { None } else { Some(s as usize) },
                    graph: r.object.graph(),
                    tensor: encode_attributes(&r.object).unwrap(),
                }
            })
            .collect();
        write_cache(&path, &objs).unwrap();
        assert_eq!(read_cache(&path).unwrap(), objs);
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 3]).unwrap();
        assert!(matches!(read_cache(&path), Err(DatasetError::TruncatedCache)));
    }
}
