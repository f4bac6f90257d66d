//! `TNS1` float tensor container.
//!
//! Layout (little-endian): magic `TNS1`, `u8` rank, `rank × u32` dims, then
//! `f32` data in row-major order. Only ranks 2 and 3 are accepted.

use std::path::Path;

use super::{ImageryError, Result};

const MAGIC: &[u8; 4] = b"TNS1";

#[derive(Clone, Debug, PartialEq)]
pub struct FloatTensor {
    dims: Vec<usize>,
    data: Vec<f32>,
}

fn check_rank(rank: usize) -> Result<()> {
    if rank == 2 || rank == 3 {
        Ok(())
    } else {
        Err(ImageryError::RankUnsupported(rank))
    }
}

impl FloatTensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        check_rank(dims.len())?;
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(ImageryError::ShapeMismatch { expected: dims, got: vec![data.len()] });
        }
        Ok(Self { dims, data })
    }

    pub fn from_f64(dims: Vec<usize>, data: &[f64]) -> Result<Self> {
        Self::new(dims, data.iter().map(|&v| v as f32).collect())
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.data.iter().map(|&v| v as f64).collect()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(5 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            out.extend_from_slice(&(d as u32).to_le_bytes());
        }
        for &v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let need = |needed: usize| {
            if bytes.len() < needed {
                Err(ImageryError::TruncatedFile { needed, found: bytes.len() })
            } else {
                Ok(())
            }
        };
        need(5)?;
        if &bytes[..4] != MAGIC {
            return Err(ImageryError::BadMagic { expected: "TNS1" });
        }
        let rank = bytes[4] as usize;
        check_rank(rank)?;
        let header = 5 + 4 * rank;
        need(header)?;
        let dims: Vec<usize> = bytes[5..header]
            .chunks_exact(4)
            .map(|c| u32::from_le_bytes(c.try_into().expect("4-byte chunk")) as usize)
            .collect();
        let count: usize = dims.iter().product();
        need(header + 4 * count)?;
        let data = bytes[header..header + 4 * count]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().expect("4-byte chunk")))
            .collect();
        Ok(Self { dims, data })
    }
}

pub fn write_tensor(t: &FloatTensor) -> Vec<u8> {
    t.to_bytes()
}

pub fn read_tensor(bytes: &[u8]) -> Result<FloatTensor> {
    FloatTensor::from_bytes(bytes)
}

/// Writes the tensor and, when given, a `<path>.json` sidecar.
pub fn write_tensor_file(path: &Path, t: &FloatTensor, sidecar: Option<&serde_json::Value>) -> Result<()> {
    std::fs::write(path, t.to_bytes())?;
    if let Some(meta) = sidecar {
        let mut text = serde_json::to_string_pretty(meta).map_err(|e| ImageryError::Header(e.to_string()))?;
        text.push('\n');
        std::fs::write(sidecar_path(path), text)?;
    }
    Ok(())
}

pub fn read_tensor_file(path: &Path) -> Result<FloatTensor> {
    FloatTensor::from_bytes(&std::fs::read(path)?)
}

pub(crate) fn sidecar_path(path: &Path) -> std::path::PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    s.into()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_by_two_round_trips_bit_exactly() {
        let t = FloatTensor::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap();
        let bytes = t.to_bytes();
        assert_eq!(&bytes[..5], b"TNS1\x02");
        assert_eq!(bytes.len(), 5 + 8 + 16);
        assert_eq!(FloatTensor::from_bytes(&bytes).unwrap(), t);
    }

    #[test]
    fn rank_four_is_unsupported() {
        assert!(matches!(
            FloatTensor::new(vec![1, 1, 1, 1], vec![0.0]),
            Err(ImageryError::RankUnsupported(4))
        ));
        let mut bytes = b"TNS1\x04".to_vec();
        bytes.extend_from_slice(&[0; 16]);
        assert!(matches!(FloatTensor::from_bytes(&bytes), Err(ImageryError::RankUnsupported(4))));
    }

    #[test]
    fn bad_magic_and_truncation() {
        assert!(matches!(FloatTensor::from_bytes(b"TNS2\x02"), Err(ImageryError::BadMagic { .. })));
        let t = FloatTensor::new(vec![2, 3], vec![1.0; 6]).unwrap();
        let bytes = t.to_bytes();
        assert!(matches!(
            FloatTensor::from_bytes(&bytes[..bytes.len() - 1]),
            Err(ImageryError::TruncatedFile { .. })
        ));
    }

    #[test]
    fn file_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("v.tns");
        let t = FloatTensor::new(vec![2, 1, 3], vec![-1.0, 0.5, 2.0, 3.0, 4.0, 1e-3]).unwrap();
        write_tensor_file(&path, &t, Some(&serde_json::json!({"units": "m"}))).unwrap();
        assert_eq!(read_tensor_file(&path).unwrap(), t);
        let meta: serde_json::Value =
            serde_json::from_str(&std::fs::read_to_string(sidecar_path(&path)).unwrap()).unwrap();
        assert_eq!(meta["units"], "m");
    }

    proptest::proptest! {
        #[test]
        fn finite_data_round_trips(h in 1usize..5, w in 1usize..5, c in 1usize..3, seed in 0u32..1000) {
            let n = h * w * c;
            let data: Vec<f32> = (0..n).map(|i| ((i as u32).wrapping_mul(2654435761) ^ seed) as f32 * 1e-3).collect();
            let t = FloatTensor::new(vec![c, h, w], data).unwrap();
            proptest::prop_assert_eq!(FloatTensor::from_bytes(&t.to_bytes()).unwrap(), t);
        }
    }
}
