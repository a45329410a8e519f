//! Tensor file formats.
//!
//! HEMT binary layout, all integers little-endian:
//!
//! ```text
//! b"HEMT" | u8 version (=1) | u8 rank | rank x u32 dims | prod(dims) x f32 row-major
//! ```
//!
//! The JSON form `{"dims": [...], "data": [...]}` is accepted for small test inputs.

use std::fs;
use std::path::Path;

use hem_core::{FeatureSequence, FrameSequence, Matrix, Video};
use serde::{Deserialize, Serialize};

pub const MAGIC: &[u8; 4] = b"HEMT";
pub const VERSION: u8 = 1;

#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes {0:02x?}, expected \"HEMT\"")]
    BadMagic(Vec<u8>),
    #[error("unsupported HEMT version {0}")]
    BadVersion(u8),
    #[error("truncated header")]
    TruncatedHeader,
    #[error("invalid dims {0:?}")]
    BadDims(Vec<usize>),
    #[error("payload length mismatch: dims {dims:?} need {expected} values, found {found}")]
    PayloadLength {
        dims: Vec<usize>,
        expected: usize,
        found: usize,
    },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("invalid JSON tensor")]
    Json(#[from] serde_json::Error),
    #[error("unsupported tensor rank {rank} (dims {dims:?}); expected [3,T,H,W] frames or [T,d,p] features")]
    UnsupportedRank { rank: usize, dims: Vec<usize> },
    #[error(transparent)]
    Content(#[from] hem_core::Error),
}

/// A dense tensor as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f64>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f64>) -> Result<Self, FormatError> {
        let tensor = Self { dims, data };
        tensor.validate()?;
        Ok(tensor)
    }

    fn validate(&self) -> Result<(), FormatError> {
        if self.dims.is_empty()
            || self.dims.len() > u8::MAX as usize
            || self.dims.iter().any(|&d| d > u32::MAX as usize)
        {
            return Err(FormatError::BadDims(self.dims.clone()));
        }
        let expected = self
            .dims
            .iter()
            .try_fold(1usize, |acc, &d| acc.checked_mul(d))
            .ok_or_else(|| FormatError::BadDims(self.dims.clone()))?;
        if expected != self.data.len() {
            return Err(FormatError::PayloadLength {
                dims: self.dims.clone(),
                expected,
                found: self.data.len(),
            });
        }
        if let Some(i) = self.data.iter().position(|v| !v.is_finite()) {
            return Err(FormatError::NonFinite(i));
        }
        Ok(())
    }

    pub fn from_matrix(m: &Matrix) -> Self {
        Self {
            dims: vec![m.rows(), m.cols()],
            data: m.as_slice().to_vec(),
        }
    }
}

pub fn encode_hemt(tensor: &Tensor) -> Result<Vec<u8>, FormatError> {
    tensor.validate()?;
    let mut out = Vec::with_capacity(6 + 4 * tensor.dims.len() + 4 * tensor.data.len());
    out.extend_from_slice(MAGIC);
    out.push(VERSION);
    out.push(tensor.dims.len() as u8);
    for &d in &tensor.dims {
        out.extend_from_slice(&(d as u32).to_le_bytes());
    }
    for (i, &v) in tensor.data.iter().enumerate() {
        let f = v as f32;
        if !f.is_finite() {
            return Err(FormatError::NonFinite(i));
        }
        out.extend_from_slice(&f.to_le_bytes());
    }
    Ok(out)
}

pub fn decode_hemt(bytes: &[u8]) -> Result<Tensor, FormatError> {
    if bytes.len() < 4 || &bytes[..4] != MAGIC {
        return Err(FormatError::BadMagic(bytes[..bytes.len().min(4)].to_vec()));
    }
    let (&version, &rank) = match (bytes.get(4), bytes.get(5)) {
        (Some(v), Some(r)) => (v, r),
        _ => return Err(FormatError::TruncatedHeader),
    };
    if version != VERSION {
        return Err(FormatError::BadVersion(version));
    }
    let header = 6 + 4 * rank as usize;
    if bytes.len() < header {
        return Err(FormatError::TruncatedHeader);
    }
    let dims: Vec<usize> = bytes[6..header]
        .chunks_exact(4)
        .map(|c| u32::from_le_bytes(c.try_into().unwrap()) as usize)
        .collect();
    let payload = &bytes[header..];
    if !payload.len().is_multiple_of(4) {
        return Err(FormatError::PayloadLength {
            dims,
            expected: 0,
            found: payload.len(),
        });
    }
    let data = payload
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
        .collect();
    Tensor::new(dims, data)
}

pub fn decode_json(text: &str) -> Result<Tensor, FormatError> {
    let tensor: Tensor = serde_json::from_str(text)?;
    tensor.validate()?;
    Ok(tensor)
}

/// Reads a HEMT or JSON tensor, picking the format from the leading bytes.
pub fn read_tensor(path: &Path) -> Result<Tensor, FormatError> {
    let bytes = fs::read(path)?;
    if bytes.starts_with(MAGIC) {
        return decode_hemt(&bytes);
    }
    match bytes.iter().find(|b| !b.is_ascii_whitespace()) {
        Some(b'{') => decode_json(&String::from_utf8_lossy(&bytes)),
        _ => decode_hemt(&bytes),
    }
}

pub fn write_hemt(path: &Path, tensor: &Tensor) -> Result<Vec<u8>, FormatError> {
    let bytes = encode_hemt(tensor)?;
    fs::write(path, &bytes)?;
    Ok(bytes)
}

/// Interprets a tensor as pipeline input: `[3, T, H, W]` frames or `[T, d, p]` features.
pub fn to_video(tensor: Tensor) -> Result<Video, FormatError> {
    match tensor.dims[..] {
        [3, t, h, w] => Ok(Video::Frames(FrameSequence::new(t, h, w, tensor.data)?)),
        [t, d, p] => {
            let frames = tensor
                .data
                .chunks_exact(d * p)
                .take(t)
                .map(|c| Matrix::new(d, p, c.to_vec()))
                .collect::<Result<Vec<_>, _>>()?;
            Ok(Video::Features(FeatureSequence::new(frames)?))
        }
        _ => Err(FormatError::UnsupportedRank {
            rank: tensor.dims.len(),
            dims: tensor.dims,
        }),
    }
}

pub fn ingest(path: &Path) -> Result<Video, FormatError> {
    to_video(read_tensor(path)?)
}

/// Inverse of [`to_video`] for frame clips.
pub fn frames_tensor(frames: &FrameSequence) -> Tensor {
    Tensor {
        dims: vec![3, frames.len(), frames.height(), frames.width()],
        data: frames.as_slice().to_vec(),
    }
}
