//! Model checkpoint file.
//!
//! ```text
//! offset  size  field
//! 0       4     magic "TCNW"
//! 4       4     u32 version (1)
//! 8       4     u32 metadata length m
//! 12      m     metadata, UTF-8 JSON (model kind and configuration)
//! 12+m    4     u32 tensor count
//! then, per tensor:
//!         4     u32 rows
//!         4     u32 cols
//!         8*r*c f64 values, row-major
//! ```
//!
//! All integers and floats are little-endian.

use std::path::Path;

use ndarray::Array2;

use crate::binio::Reader;
use crate::error::{Error, Result};

pub const MAGIC: [u8; 4] = *b"TCNW";
pub const VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub metadata: String,
    pub tensors: Vec<Array2<f64>>,
}

impl Checkpoint {
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let meta = self.metadata.as_bytes();
        let mut out = Vec::with_capacity(
            16 + meta.len() + self.tensors.iter().map(|t| 8 + 8 * t.len()).sum::<usize>(),
        );
        out.extend_from_slice(&MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&to_u32(meta.len(), "metadata length")?.to_le_bytes());
        out.extend_from_slice(meta);
        out.extend_from_slice(&to_u32(self.tensors.len(), "tensor count")?.to_le_bytes());
        for t in &self.tensors {
            out.extend_from_slice(&to_u32(t.nrows(), "tensor rows")?.to_le_bytes());
            out.extend_from_slice(&to_u32(t.ncols(), "tensor cols")?.to_le_bytes());
            for v in t.as_standard_layout().iter() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes, "checkpoint");
        r.magic(MAGIC)?;
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::UnsupportedVersion(version));
        }
        let meta_len = r.u32()?;
        let metadata = String::from_utf8(r.array(u64::from(meta_len), 1)?.to_vec())
            .map_err(|e| Error::Parse { path: "checkpoint metadata".into(), message: e.to_string() })?;
        let count = r.u32()?;
        let mut tensors = Vec::new();
        for _ in 0..count {
            let rows = r.u32()? as usize;
            let cols = r.u32()? as usize;
            let n = (rows as u64)
                .checked_mul(cols as u64)
                .ok_or_else(|| Error::DimOverflow(format!("tensor {rows}x{cols}")))?;
            let raw = r.array(n, 8)?;
            let values: Vec<f64> = raw
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            tensors.push(Array2::from_shape_vec((rows, cols), values).expect("size checked"));
        }
        r.finish()?;
        Ok(Self { metadata, tensors })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

fn to_u32(v: usize, what: &str) -> Result<u32> {
    u32::try_from(v).map_err(|_| Error::DimOverflow(format!("{what} {v} exceeds u32")))
}
