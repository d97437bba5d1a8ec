//! Binary checkpoint container.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic        8 bytes   "SYNDCKPT"
//! version      u32       1
//! meta_len     u32       byte length of the metadata blob
//! meta         meta_len  UTF-8 JSON (model kind and configuration)
//! count        u32       number of tensors
//! shape table  count × (ndim: u32, dims: ndim × u64)
//! payload      every tensor's values as f64, in table order
//! ```

use std::path::Path;

use super::tensor::{Param, Tensor};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 8] = b"SYNDCKPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub meta: serde_json::Value,
    pub tensors: Vec<Tensor>,
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(n)
            .filter(|&e| e <= self.bytes.len())
            .ok_or_else(|| Error::Data(format!("checkpoint truncated at byte {}", self.pos)))?;
        let out = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(out)
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }

    fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().expect("8 bytes")))
    }
}

impl Checkpoint {
    pub fn from_params<'a>(meta: serde_json::Value, params: impl IntoIterator<Item = &'a Param>) -> Self {
        Self {
            meta,
            tensors: params.into_iter().map(|p| p.value.clone()).collect(),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let meta = serde_json::to_vec(&self.meta).expect("json value serializes");
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(meta.len() as u32).to_le_bytes());
        out.extend_from_slice(&meta);
        out.extend_from_slice(&(self.tensors.len() as u32).to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&(t.shape().len() as u32).to_le_bytes());
            for &d in t.shape() {
                out.extend_from_slice(&(d as u64).to_le_bytes());
            }
        }
        for t in &self.tensors {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(8)? != MAGIC {
            return Err(Error::Data("not a checkpoint (bad magic)".into()));
        }
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Data(format!("unsupported checkpoint version {version}")));
        }
        let meta_len = r.u32()? as usize;
        let meta = serde_json::from_slice(r.take(meta_len)?)?;
        let count = r.u32()? as usize;
        let mut shapes = Vec::with_capacity(count.min(1 << 16));
        for _ in 0..count {
            let ndim = r.u32()? as usize;
            let mut shape = Vec::with_capacity(ndim.min(16));
            for _ in 0..ndim {
                shape.push(r.u64()? as usize);
            }
            shapes.push(shape);
        }
        let mut tensors = Vec::with_capacity(shapes.len());
        for shape in shapes {
            let n: usize = shape.iter().product();
            let raw = r.take(n.checked_mul(8).ok_or_else(|| Error::Data("tensor too large".into()))?)?;
            let data = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
                .collect();
            tensors.push(Tensor::new(shape, data)?);
        }
        if r.pos != bytes.len() {
            return Err(Error::Data("trailing bytes after checkpoint payload".into()));
        }
        Ok(Self { meta, tensors })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        }
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }

    /// Copies the stored tensors into `params`, which must match in count and shape.
    pub fn restore_into(&self, params: Vec<&mut Param>) -> Result<()> {
        if params.len() != self.tensors.len() {
            return Err(Error::Data(format!(
                "checkpoint holds {} tensors, model expects {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (p, t) in params.into_iter().zip(&self.tensors) {
            if p.value.shape() != t.shape() {
                return Err(Error::shape("checkpoint restore", p.value.shape(), t.shape()));
            }
            p.value = t.clone();
            p.zero_grad();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn header_layout() {
        let ck = Checkpoint {
            meta: serde_json::json!({"kind": "x"}),
            tensors: vec![Tensor::new(vec![2], vec![1.5, -2.0]).unwrap()],
        };
        let b = ck.to_bytes();
        assert_eq!(&b[..8], MAGIC);
        assert_eq!(u32::from_le_bytes(b[8..12].try_into().unwrap()), 1);
        let meta_len = u32::from_le_bytes(b[12..16].try_into().unwrap()) as usize;
        assert_eq!(&b[16..16 + meta_len], br#"{"kind":"x"}"#);
        let tail = &b[b.len() - 16..];
        assert_eq!(tail[..8], 1.5f64.to_le_bytes());
        assert_eq!(Checkpoint::from_bytes(&b).unwrap(), ck);
    }

    #[test]
    fn corrupt_inputs_rejected() {
        let ck = Checkpoint {
            meta: serde_json::json!(null),
            tensors: vec![Tensor::zeros(&[3, 2])],
        };
        let b = ck.to_bytes();
        assert!(Checkpoint::from_bytes(&b[..b.len() - 1]).is_err());
        let mut bad = b.clone();
        bad[0] = b'X';
        assert!(Checkpoint::from_bytes(&bad).is_err());
        let mut extra = b;
        extra.push(0);
        assert!(Checkpoint::from_bytes(&extra).is_err());
    }
}
