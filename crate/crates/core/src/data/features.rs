//! Binary clip-feature files.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! "AVDF" | version: u32 = 1 | id_len: u32 | id: UTF-8 | T: u32 | D: u32 | T·D × f32 (row-major)
//! ```

use std::fs;
use std::path::Path;

use thiserror::Error;

use crate::tensor::Matrix;
use crate::Scalar;

pub const MAGIC: &[u8; 4] = b"AVDF";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FeatureError {
    #[error("feature file i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("bad magic bytes")]
    BadMagic,
    #[error("unsupported feature file version {0}")]
    BadVersion(u32),
    #[error("truncated feature file")]
    TruncatedFile,
    #[error("{0} trailing bytes after feature data")]
    TrailingData(usize),
    #[error("non-finite feature value at index {0}")]
    NonFiniteValue(usize),
    #[error("clip id is not valid UTF-8")]
    InvalidId,
    #[error("invalid clip shape {frames}x{dim}")]
    InvalidShape { frames: usize, dim: usize },
}

/// Per-frame features of one clip.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureClip {
    pub id: String,
    pub frames: usize,
    pub dim: usize,
    /// `frames × dim`, row-major.
    pub data: Vec<f32>,
}

impl FeatureClip {
    pub fn new(id: impl Into<String>, frames: usize, dim: usize, data: Vec<f32>) -> Result<Self, FeatureError> {
        let clip = Self { id: id.into(), frames, dim, data };
        clip.check()?;
        Ok(clip)
    }

    fn check(&self) -> Result<(), FeatureError> {
        if self.frames == 0 || self.dim == 0 || self.frames.checked_mul(self.dim) != Some(self.data.len()) {
            return Err(FeatureError::InvalidShape { frames: self.frames, dim: self.dim });
        }
        if let Some(i) = self.data.iter().position(|x| !x.is_finite()) {
            return Err(FeatureError::NonFiniteValue(i));
        }
        Ok(())
    }

    /// Widened to the model's scalar type.
    pub fn to_matrix<T: Scalar>(&self) -> Matrix<T> {
        Matrix::from_vec(self.frames, self.dim, self.data.iter().map(|&x| T::of(f64::from(x))).collect())
    }

    /// Temporal mean over frames, as a `1 × D` row.
    pub fn mean_pooled<T: Scalar>(&self) -> Vec<T> {
        let m = self.to_matrix::<T>();
        let n = T::from_usize(self.frames).expect("frame count fits");
        (0..self.dim).map(|c| (0..self.frames).map(|r| m[(r, c)]).sum::<T>() / n).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(20 + self.id.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&VERSION.to_le_bytes());
        out.extend_from_slice(&(self.id.len() as u32).to_le_bytes());
        out.extend_from_slice(self.id.as_bytes());
        out.extend_from_slice(&(self.frames as u32).to_le_bytes());
        out.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for x in &self.data {
            out.extend_from_slice(&x.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, FeatureError> {
        let mut cur = Cursor { bytes, pos: 0 };
        if cur.take(4)? != MAGIC {
            return Err(FeatureError::BadMagic);
        }
        let version = cur.u32()?;
        if version != VERSION {
            return Err(FeatureError::BadVersion(version));
        }
        let id_len = cur.u32()? as usize;
        let id = std::str::from_utf8(cur.take(id_len)?).map_err(|_| FeatureError::InvalidId)?.to_owned();
        let frames = cur.u32()? as usize;
        let dim = cur.u32()? as usize;
        let count = frames.checked_mul(dim).ok_or(FeatureError::InvalidShape { frames, dim })?;
        let body = cur.take(count.checked_mul(4).ok_or(FeatureError::TruncatedFile)?)?;
        let data = body.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().expect("4 bytes"))).collect();
        if cur.pos != bytes.len() {
            return Err(FeatureError::TrailingData(bytes.len() - cur.pos));
        }
        let clip = Self { id, frames, dim, data };
        clip.check()?;
        Ok(clip)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], FeatureError> {
        let end = self.pos.checked_add(n).ok_or(FeatureError::TruncatedFile)?;
        let s = self.bytes.get(self.pos..end).ok_or(FeatureError::TruncatedFile)?;
        self.pos = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, FeatureError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("4 bytes")))
    }
}

/// Writes `clip` to `path`; rejects non-finite values and empty shapes.
pub fn write_features(clip: &FeatureClip, path: impl AsRef<Path>) -> Result<(), FeatureError> {
    clip.check()?;
    fs::write(path, clip.to_bytes())?;
    Ok(())
}

pub fn read_features(path: impl AsRef<Path>) -> Result<FeatureClip, FeatureError> {
    FeatureClip::from_bytes(&fs::read(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn clip() -> FeatureClip {
        FeatureClip::new("clip_0001", 2, 3, vec![0.0, -1.5, 2.25, 1e-40, f32::MAX, -0.0]).unwrap()
    }

    #[test]
    fn layout_is_exact() {
        let bytes = clip().to_bytes();
        assert_eq!(&bytes[..4], b"AVDF");
        assert_eq!(&bytes[4..8], &[1, 0, 0, 0]);
        assert_eq!(&bytes[8..12], &[9, 0, 0, 0]);
        assert_eq!(&bytes[12..21], b"clip_0001");
        assert_eq!(&bytes[21..25], &[2, 0, 0, 0]);
        assert_eq!(&bytes[25..29], &[3, 0, 0, 0]);
        assert_eq!(&bytes[29..33], &0.0f32.to_le_bytes());
        assert_eq!(bytes.len(), 29 + 6 * 4);
    }

    #[test]
    fn file_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("c.avdf");
        write_features(&clip(), &path).unwrap();
        let back = read_features(&path).unwrap();
        assert_eq!(back.id, "clip_0001");
        let bits = |c: &FeatureClip| c.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back), bits(&clip()));
    }

    #[test]
    fn corrupt_inputs() {
        let good = clip().to_bytes();
        let mut bad_magic = good.clone();
        bad_magic[0] = b'X';
        assert!(matches!(FeatureClip::from_bytes(&bad_magic), Err(FeatureError::BadMagic)));

        let mut bad_version = good.clone();
        bad_version[4] = 2;
        assert!(matches!(FeatureClip::from_bytes(&bad_version), Err(FeatureError::BadVersion(2))));

        assert!(matches!(FeatureClip::from_bytes(&good[..good.len() - 1]), Err(FeatureError::TruncatedFile)));
        assert!(matches!(FeatureClip::from_bytes(&good[..10]), Err(FeatureError::TruncatedFile)));

        let mut nan = good.clone();
        let at = good.len() - 4;
        nan[at..].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(matches!(FeatureClip::from_bytes(&nan), Err(FeatureError::NonFiniteValue(5))));

        let mut trailing = good;
        trailing.push(0);
        assert!(matches!(FeatureClip::from_bytes(&trailing), Err(FeatureError::TrailingData(1))));
    }

    #[test]
    fn writing_rejects_bad_clips() {
        let dir = tempfile::tempdir().unwrap();
        let nan = FeatureClip { id: "x".into(), frames: 1, dim: 1, data: vec![f32::INFINITY] };
        assert!(matches!(write_features(&nan, dir.path().join("x")), Err(FeatureError::NonFiniteValue(0))));
        assert!(matches!(FeatureClip::new("x", 0, 3, vec![]), Err(FeatureError::InvalidShape { .. })));
    }

    #[test]
    fn pooling() {
        let c = FeatureClip::new("p", 2, 2, vec![1.0, 2.0, 3.0, 6.0]).unwrap();
        assert_eq!(c.mean_pooled::<f64>(), vec![2.0, 4.0]);
    }

    proptest! {
        #[test]
        fn bytes_round_trip(id in "[a-z0-9_]{0,12}", frames in 1usize..5, dim in 1usize..5,
                            seed in prop::collection::vec(any::<u32>(), 16)) {
            // any finite bit pattern, subnormals included
            let data: Vec<f32> = (0..frames * dim)
                .map(|k| f32::from_bits(seed[k % 16].wrapping_mul(k as u32 + 1)))
                .map(|x| if x.is_finite() { x } else { 0.5 })
                .collect();
            let c = FeatureClip::new(id, frames, dim, data).unwrap();
            let back = FeatureClip::from_bytes(&c.to_bytes()).unwrap();
            prop_assert_eq!(back.to_bytes(), c.to_bytes());
        }
    }
}
