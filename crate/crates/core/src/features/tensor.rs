//! `PFT1` dense tensor files.
//!
//! Layout: magic `PFT1`, u8 dtype (0 = f32), u8 rank, rank x u32 LE dims,
//! then the row-major LE payload. Metadata lives in a JSON sidecar.

use std::fs;
use std::path::{Path, PathBuf};

use super::Sidecar;
use crate::error::{Result, SpcError};

pub const MAGIC: &[u8; 4] = b"PFT1";
pub const DTYPE_F32: u8 = 0;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub dims: Vec<usize>,
    pub data: Vec<f32>,
}

impl Tensor {
    pub fn new(dims: Vec<usize>, data: Vec<f32>) -> Result<Self> {
        let n: usize = dims.iter().product();
        if n != data.len() {
            return Err(SpcError::domain(format!(
                "dims {dims:?} hold {n} values, got {}",
                data.len()
            )));
        }
        Ok(Tensor { dims, data })
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        if self.dims.len() > u8::MAX as usize {
            return Err(SpcError::domain("tensor rank exceeds 255"));
        }
        let mut out = Vec::with_capacity(6 + 4 * self.dims.len() + 4 * self.data.len());
        out.extend_from_slice(MAGIC);
        out.push(DTYPE_F32);
        out.push(self.dims.len() as u8);
        for &d in &self.dims {
            let d = u32::try_from(d).map_err(|_| SpcError::domain("dimension exceeds u32"))?;
            out.extend_from_slice(&d.to_le_bytes());
        }
        for v in &self.data {
            out.extend_from_slice(&v.to_le_bytes());
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < 6 || &bytes[..4] != MAGIC {
            return Err(SpcError::format("missing PFT1 magic"));
        }
        if bytes[4] != DTYPE_F32 {
            return Err(SpcError::format(format!("unsupported dtype code {}", bytes[4])));
        }
        let rank = bytes[5] as usize;
        let header = 6 + 4 * rank;
        if bytes.len() < header {
            return Err(SpcError::format("truncated PFT1 header"));
        }
        let dims: Vec<usize> = (0..rank)
            .map(|i| {
                let o = 6 + 4 * i;
                u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap()) as usize
            })
            .collect();
        let n: usize = dims.iter().product();
        let payload = &bytes[header..];
        if payload.len() != 4 * n {
            return Err(SpcError::format(format!(
                "payload has {} bytes, dims {dims:?} need {}",
                payload.len(),
                4 * n
            )));
        }
        let data = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
            .collect();
        Ok(Tensor { dims, data })
    }
}

/// Sidecar path for a tensor file: `x.pft` -> `x.json`.
pub fn sidecar_path(path: &Path) -> PathBuf {
    path.with_extension("json")
}

pub fn write_tensor(path: &Path, tensor: &Tensor, sidecar: &Sidecar) -> Result<()> {
    fs::write(path, tensor.to_bytes()?).map_err(|e| SpcError::io(path, e))?;
    let side = sidecar_path(path);
    let json = serde_json::to_string_pretty(sidecar)?;
    fs::write(&side, json + "\n").map_err(|e| SpcError::io(&side, e))
}

pub fn read_tensor(path: &Path) -> Result<(Tensor, Sidecar)> {
    let bytes = fs::read(path).map_err(|e| SpcError::io(path, e))?;
    let tensor = Tensor::from_bytes(&bytes)?;
    let side = sidecar_path(path);
    let text = fs::read_to_string(&side).map_err(|e| SpcError::io(&side, e))?;
    Ok((tensor, serde_json::from_str(&text)?))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureKind;

    #[test]
    fn bytes_round_trip_bit_exact() {
        let data = vec![0.0, -0.0, 1.5, f32::MIN_POSITIVE, f32::NAN, f32::INFINITY, 1e-42];
        let t = Tensor::new(vec![7, 1], data).unwrap();
        let bytes = t.to_bytes().unwrap();
        assert_eq!(&bytes[..6], &[b'P', b'F', b'T', b'1', 0, 2]);
        assert_eq!(&bytes[6..10], &7u32.to_le_bytes());
        let back = Tensor::from_bytes(&bytes).unwrap();
        assert_eq!(back.dims, t.dims);
        let bits = |v: &[f32]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
        assert_eq!(bits(&back.data), bits(&t.data));
    }

    #[test]
    fn rejects_malformed() {
        assert!(Tensor::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(Tensor::from_bytes(b"PFT2\0\0").is_err());
        let mut bytes = Tensor::new(vec![2], vec![1.0, 2.0]).unwrap().to_bytes().unwrap();
        bytes.pop();
        assert!(Tensor::from_bytes(&bytes).is_err());
    }

    #[test]
    fn file_round_trip_with_sidecar() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("x.pft");
        let t = Tensor::new(vec![2, 3], vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]).unwrap();
        let side = Sidecar {
            kind: FeatureKind::Mel,
            bin_freqs: vec![25.0, 0.1 + 0.2],
            hop: 0.001,
            log_floor: -93.25,
        };
        write_tensor(&path, &t, &side).unwrap();
        let (t2, s2) = read_tensor(&path).unwrap();
        assert_eq!(t2, t);
        assert_eq!(s2, side);
    }
}
