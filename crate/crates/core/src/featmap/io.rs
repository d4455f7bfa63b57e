//! FEMAP1 persistence.
//!
//! Layout (little-endian): magic `FEMAP1\0\0`, u32 version, f64 voxel size,
//! u32 descriptor dimension, u64 voxel count, then per voxel three i32 grid
//! coordinates, a u32 observation count and the descriptor as f32 values.
//! Descriptors are held as f64 in memory and narrowed to f32 on save.

use std::io::Write;
use std::path::Path;

use super::{VoxelIndex, VoxelMap};
use crate::error::{Error, Result};

const MAGIC: &[u8; 8] = b"FEMAP1\0\0";
const VERSION: u32 = 1;

pub(crate) struct ByteReader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> ByteReader<'a> {
    pub(crate) fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    pub(crate) fn offset(&self) -> u64 {
        self.pos as u64
    }

    pub(crate) fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("truncated: needed {n} bytes, {} remain", self.bytes.len() - self.pos),
            });
        }
        let out = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(out)
    }

    fn array<const N: usize>(&mut self) -> Result<[u8; N]> {
        Ok(self.take(N)?.try_into().expect("length checked"))
    }

    pub(crate) fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.array()?))
    }

    pub(crate) fn i32(&mut self) -> Result<i32> {
        Ok(i32::from_le_bytes(self.array()?))
    }

    pub(crate) fn u64(&mut self) -> Result<u64> {
        Ok(u64::from_le_bytes(self.array()?))
    }

    pub(crate) fn f32(&mut self) -> Result<f32> {
        Ok(f32::from_le_bytes(self.array()?))
    }

    pub(crate) fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.array()?))
    }

    pub(crate) fn expect_end(&self) -> Result<()> {
        if self.pos != self.bytes.len() {
            return Err(Error::Format {
                offset: self.pos as u64,
                message: format!("{} trailing bytes", self.bytes.len() - self.pos),
            });
        }
        Ok(())
    }
}

impl VoxelMap {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(32 + self.len() * (16 + 4 * self.dim));
        buf.extend_from_slice(MAGIC);
        buf.extend_from_slice(&VERSION.to_le_bytes());
        buf.extend_from_slice(&self.voxel_size.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        buf.extend_from_slice(&(self.len() as u64).to_le_bytes());
        for v in self.iter() {
            for c in v.index {
                buf.extend_from_slice(&c.to_le_bytes());
            }
            buf.extend_from_slice(&v.count.to_le_bytes());
            for &m in v.mean_descriptor {
                buf.extend_from_slice(&(m as f32).to_le_bytes());
            }
        }
        buf
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = ByteReader::new(bytes);
        if r.take(8)? != MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad FEMAP1 magic".into(),
            });
        }
        let at = r.offset();
        let version = r.u32()?;
        if version != VERSION {
            return Err(Error::Format {
                offset: at,
                message: format!("unsupported FEMAP version {version}"),
            });
        }
        let at = r.offset();
        let voxel_size = r.f64()?;
        if !(voxel_size > 0.0 && voxel_size.is_finite()) {
            return Err(Error::Format {
                offset: at,
                message: format!("invalid voxel size {voxel_size}"),
            });
        }
        let at = r.offset();
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: at,
                message: "zero descriptor dimension".into(),
            });
        }
        let at = r.offset();
        let count = r.u64()?;
        let record = 16 + 4 * dim as u64;
        let remaining = (bytes.len() as u64).saturating_sub(r.offset());
        if count.checked_mul(record).is_none_or(|need| need > remaining) {
            return Err(Error::Format {
                offset: at,
                message: format!("voxel count {count} exceeds file size"),
            });
        }

        let mut entries = Vec::with_capacity(count as usize);
        for _ in 0..count {
            let start = r.offset();
            let index: VoxelIndex = [r.i32()?, r.i32()?, r.i32()?];
            let obs = r.u32()?;
            if obs == 0 {
                return Err(Error::Format {
                    offset: start + 12,
                    message: "voxel with zero observations".into(),
                });
            }
            let mut mean = Vec::with_capacity(dim);
            for _ in 0..dim {
                let at = r.offset();
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::Format {
                        offset: at,
                        message: "non-finite descriptor".into(),
                    });
                }
                mean.push(v as f64);
            }
            entries.push((index, obs, mean));
        }
        r.expect_end()?;
        VoxelMap::from_parts(voxel_size, dim, entries).map_err(|e| Error::Format {
            offset: 32,
            message: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::Point3;

    fn small_map() -> VoxelMap {
        let mut map = VoxelMap::new(0.25, 2).unwrap();
        map.fuse_point(&Point3::new(0.1, -0.3, 2.0), &[0.5, 1.5]).unwrap();
        map.fuse_point(&Point3::new(0.1, -0.3, 2.0), &[1.5, 0.5]).unwrap();
        map.fuse_point(&Point3::new(-4.0, 1.0, 0.0), &[-1.0, 0.25]).unwrap();
        map
    }

    #[test]
    fn empty_round_trip() {
        let map = VoxelMap::new(0.2, 10).unwrap();
        let bytes = map.to_bytes();
        assert_eq!(bytes.len(), 32);
        let back = VoxelMap::from_bytes(&bytes).unwrap();
        assert!(back.is_empty());
        assert_eq!(back.voxel_size(), 0.2);
        assert_eq!(back.descriptor_dim(), 10);
    }

    #[test]
    fn header_layout() {
        let bytes = small_map().to_bytes();
        assert_eq!(&bytes[..8], b"FEMAP1\0\0");
        assert_eq!(u32::from_le_bytes(bytes[8..12].try_into().unwrap()), 1);
        assert_eq!(f64::from_le_bytes(bytes[12..20].try_into().unwrap()), 0.25);
        assert_eq!(u32::from_le_bytes(bytes[20..24].try_into().unwrap()), 2);
        assert_eq!(u64::from_le_bytes(bytes[24..32].try_into().unwrap()), 2);
        assert_eq!(bytes.len(), 32 + 2 * (16 + 8));
    }

    #[test]
    fn corrupted_magic() {
        let mut bytes = small_map().to_bytes();
        bytes[3] = b'X';
        assert!(matches!(
            VoxelMap::from_bytes(&bytes),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn bad_version_and_truncation() {
        let mut bytes = small_map().to_bytes();
        bytes[8] = 2;
        assert!(matches!(
            VoxelMap::from_bytes(&bytes),
            Err(Error::Format { offset: 8, .. })
        ));
        let bytes = small_map().to_bytes();
        let cut = &bytes[..bytes.len() - 3];
        assert!(matches!(
            VoxelMap::from_bytes(cut),
            Err(Error::Format { offset: 24, .. })
        ));
        assert!(matches!(
            VoxelMap::from_bytes(&bytes[..5]),
            Err(Error::Format { offset: 0, .. })
        ));
    }

    #[test]
    fn trailing_bytes_rejected() {
        let mut bytes = small_map().to_bytes();
        bytes.push(0);
        assert!(VoxelMap::from_bytes(&bytes).is_err());
    }
}
