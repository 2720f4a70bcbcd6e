//! Feature file format, one file per video (`<video_id>.tcnf`).
//!
//! ```text
//! offset  size   field
//! 0       4      magic "TCNF"
//! 4       4      u32 version (1)
//! 8       4      u32 T (frames)
//! 12      4      u32 D (feature dimension)
//! 16      4*T*D  f32 values, row-major (frame by frame)
//! ```
//!
//! Little-endian throughout. Values are held as `f64` in memory and stored as
//! `f32`; a sequence read from a file writes back to identical bytes.

use std::path::{Path, PathBuf};

use ndarray::Array2;

use crate::binio::Reader;
use crate::error::{Error, Result};
use crate::sampling::FeatureSequence;

pub const MAGIC: [u8; 4] = *b"TCNF";
pub const VERSION: u32 = 1;
pub const EXTENSION: &str = "tcnf";

pub fn encode_features(fs: &FeatureSequence) -> Result<Vec<u8>> {
    let (t, d) = (fs.num_frames(), fs.dim());
    let dims = |v: usize, what: &str| {
        u32::try_from(v).map_err(|_| Error::DimOverflow(format!("{what} {v} exceeds u32")))
    };
    let mut out = Vec::with_capacity(16 + 4 * t * d);
    out.extend_from_slice(&MAGIC);
    out.extend_from_slice(&VERSION.to_le_bytes());
    out.extend_from_slice(&dims(t, "frame count")?.to_le_bytes());
    out.extend_from_slice(&dims(d, "feature dim")?.to_le_bytes());
    for &v in fs.values().iter() {
        out.extend_from_slice(&(v as f32).to_le_bytes());
    }
    Ok(out)
}

pub fn decode_features(bytes: &[u8], video_id: &str) -> Result<FeatureSequence> {
    let mut r = Reader::new(bytes, "feature file");
    r.magic(MAGIC)?;
    let version = r.u32()?;
    if version != VERSION {
        return Err(Error::UnsupportedVersion(version));
    }
    let t = r.u32()? as usize;
    let d = r.u32()? as usize;
    let count = (t as u64)
        .checked_mul(d as u64)
        .ok_or_else(|| Error::DimOverflow(format!("{t} x {d} features")))?;
    let raw = r.array(count, 4)?;
    r.finish()?;
    let values: Vec<f64> = raw
        .chunks_exact(4)
        .map(|c| f64::from(f32::from_le_bytes(c.try_into().expect("4-byte chunk"))))
        .collect();
    let values = Array2::from_shape_vec((t, d), values).expect("size checked");
    FeatureSequence::new(video_id, values)
}

pub fn feature_path(dir: impl AsRef<Path>, video_id: &str) -> PathBuf {
    dir.as_ref().join(format!("{video_id}.{EXTENSION}"))
}

pub fn write_features(path: impl AsRef<Path>, fs: &FeatureSequence) -> Result<()> {
    let path = path.as_ref();
    std::fs::write(path, encode_features(fs)?).map_err(|e| Error::io(path, e))
}

/// Reads a feature file; the video id is the file stem.
pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureSequence> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let video_id = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
    decode_features(&bytes, video_id)
}

/// Rounds every value to `f32` precision, the precision feature files store.
pub fn quantize(values: &mut Array2<f64>) {
    values.mapv_inplace(|v| f64::from(v as f32));
}
