//! Per-image object feature files.
//!
//! Layout of `<image_id>.feat`:
//!
//! ```text
//! b"DMRMFEAT" | K: u32 LE | V: u32 LE | K·V × f32 LE, row-major
//! ```

use std::path::{Path, PathBuf};

use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const FEATURE_MAGIC: &[u8; 8] = b"DMRMFEAT";

/// `K × V` object-level features of one image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageFeatures {
    pub image_id: String,
    pub matrix: Tensor,
}

impl ImageFeatures {
    pub fn new(image_id: impl Into<String>, matrix: Tensor) -> Result<Self> {
        let image_id = image_id.into();
        if matrix.rows() == 0 || matrix.cols() == 0 {
            return Err(Error::Schema(format!(
                "features for {image_id} must have K >= 1 and V >= 1"
            )));
        }
        if !matrix.is_finite() {
            return Err(Error::NonFinite(format!("features for {image_id}")));
        }
        Ok(Self { image_id, matrix })
    }

    pub fn num_objects(&self) -> usize {
        self.matrix.rows()
    }

    pub fn dim(&self) -> usize {
        self.matrix.cols()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let (k, v) = self.matrix.shape();
        let mut out = Vec::with_capacity(16 + 4 * k * v);
        out.extend_from_slice(FEATURE_MAGIC);
        out.extend_from_slice(&(k as u32).to_le_bytes());
        out.extend_from_slice(&(v as u32).to_le_bytes());
        for x in self.matrix.data() {
            out.extend_from_slice(&(*x as f32).to_le_bytes());
        }
        out
    }

    pub fn from_bytes(image_id: &str, bytes: &[u8], path: &Path) -> Result<Self> {
        let bad = |reason: &str| Error::FeatureFile {
            path: path.to_owned(),
            reason: reason.to_owned(),
        };
        if bytes.len() < 16 || &bytes[..8] != FEATURE_MAGIC {
            return Err(bad("missing DMRMFEAT magic"));
        }
        let k = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let v = u32::from_le_bytes(bytes[12..16].try_into().unwrap()) as usize;
        let body = &bytes[16..];
        if body.len() != 4 * k * v {
            return Err(bad(&format!(
                "expected {} payload bytes for {k}x{v}, found {}",
                4 * k * v,
                body.len()
            )));
        }
        let data = body
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let matrix = Tensor::from_vec(k, v, data)?;
        Self::new(image_id, matrix).map_err(|e| bad(&e.to_string()))
    }
}

pub fn feature_path(features_dir: &Path, image_id: &str) -> PathBuf {
    features_dir.join(format!("{image_id}.feat"))
}

pub fn write_features(features_dir: &Path, feats: &ImageFeatures) -> Result<()> {
    let path = feature_path(features_dir, &feats.image_id);
    std::fs::write(&path, feats.to_bytes()).map_err(|e| Error::io(path, e))
}

pub fn read_features(features_dir: &Path, image_id: &str) -> Result<ImageFeatures> {
    let path = feature_path(features_dir, image_id);
    if !path.exists() {
        return Err(Error::MissingFeatures(image_id.to_owned()));
    }
    let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
    ImageFeatures::from_bytes(image_id, &bytes, &path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bytes_round_trip_exactly() {
        let m = Tensor::from_vec(2, 3, vec![0.5, -1.0, 2.25, 0.0, 1.0, 3.0]).unwrap();
        let f = ImageFeatures::new("img", m).unwrap();
        let bytes = f.to_bytes();
        assert_eq!(&bytes[..8], b"DMRMFEAT");
        assert_eq!(&bytes[8..12], &2u32.to_le_bytes());
        assert_eq!(&bytes[12..16], &3u32.to_le_bytes());
        let back = ImageFeatures::from_bytes("img", &bytes, Path::new("img.feat")).unwrap();
        assert_eq!(back, f);
    }

    #[test]
    fn rejects_nan_and_truncation() {
        let mut bytes = ImageFeatures::new("a", Tensor::zeros(1, 2)).unwrap().to_bytes();
        bytes[16..20].copy_from_slice(&f32::NAN.to_le_bytes());
        assert!(ImageFeatures::from_bytes("a", &bytes, Path::new("a.feat")).is_err());
        assert!(ImageFeatures::from_bytes("a", &bytes[..18], Path::new("a.feat")).is_err());
        assert!(ImageFeatures::from_bytes("a", b"NOTMAGIC00000000", Path::new("a.feat")).is_err());
    }
}
