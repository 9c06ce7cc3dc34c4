use std::path::Path;

use super::Tensor;
use crate::error::{LayoutError, Result};
use crate::model::to_canonical_json;

const MAGIC: &[u8; 8] = b"LGRAPHCK";
const VERSION: u32 = 1;

/// Named `f64` arrays plus a JSON metadata block.
///
/// Layout (little-endian): magic, `u32` version, `u32` meta length + canonical
/// JSON, `u32` array count, then a name table of
/// `(u32 name length, name, u64 rows, u64 cols, u64 data offset)` and finally the
/// concatenated array data. Offsets count `f64`s from the start of the data block.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub arrays: Vec<(String, Tensor)>,
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.buf.len())
            .ok_or_else(|| LayoutError::Checkpoint("truncated".into()))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}

impl Checkpoint {
    pub fn new(meta: serde_json::Value) -> Self {
        Checkpoint {
            meta,
            arrays: Vec::new(),
        }
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.arrays.iter().find(|(n, _)| n == name).map(|(_, t)| t)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = to_canonical_json(&self.meta);
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(meta.as_bytes());
        out.extend_from_slice(&(self.arrays.len() as u32).to_le_bytes());
        let mut offset = 0u64;
        for (name, t) in &self.arrays {
            out.extend_from_slice(&(name.len() as u32).to_le_bytes());
            out.extend_from_slice(name.as_bytes());
            out.extend_from_slice(&(t.rows() as u64).to_le_bytes());
            out.extend_from_slice(&(t.cols() as u64).to_le_bytes());
            out.extend_from_slice(&offset.to_le_bytes());
            offset += t.len() as u64;
        }
        for (_, t) in &self.arrays {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(buf: &[u8]) -> Result<Self> {
        let mut r = Reader { buf, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(LayoutError::Checkpoint("bad magic".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(LayoutError::Checkpoint(format!("unsupported version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta: serde_json::Value = serde_json::from_slice(r.take(meta_len)?)
            .map_err(|e| LayoutError::Checkpoint(format!("metadata: {e}")))?;
        let count = r.u32()? as usize;
        let mut table = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let n = r.u32()? as usize;
            let name = std::str::from_utf8(r.take(n)?)
                .map_err(|_| LayoutError::Checkpoint("non-UTF-8 array name".into()))?
                .to_string();
            let rows = r.u64()? as usize;
            let cols = r.u64()? as usize;
            let off = r.u64()? as usize;
            table.push((name, rows, cols, off));
        }
        let data_start = r.pos;
        let mut arrays = Vec::with_capacity(table.len());
        for (name, rows, cols, off) in table {
            let len = rows
                .checked_mul(cols)
                .ok_or_else(|| LayoutError::Checkpoint("shape overflow".into()))?;
            let mut rd = Reader {
                buf,
                pos: data_start + off * 8,
            };
            let bytes = rd.take(len * 8)?;
            let data = bytes
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            let t = Tensor::new(rows, cols, data)
                .map_err(|e| LayoutError::Checkpoint(format!("array '{name}': {e}")))?;
            arrays.push((name, t));
        }
        Ok(Checkpoint { meta, arrays })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_bytes())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}
