use std::io::Write;
use std::path::Path;

use crate::error::{Error, Result};

const FDESC_MAGIC: &[u8; 8] = b"FDESC1\0\0";
const FDESC_VERSION: u32 = 1;

/// Dense per-pixel descriptor field, stored pixel-major (`[y][x][channel]`).
///
/// Integer pixel `(x, y)` covers the continuous image region
/// `[x, x + 1) × [y, y + 1)`; its sample sits at the pixel center.
#[derive(Debug, Clone, PartialEq)]
pub struct DescriptorImage {
    width: u32,
    height: u32,
    dim: usize,
    data: Vec<f32>,
}

impl DescriptorImage {
    pub fn zeros(width: u32, height: u32, dim: usize) -> Self {
        Self {
            width,
            height,
            dim,
            data: vec![0.0; width as usize * height as usize * dim],
        }
    }

    pub fn from_data(width: u32, height: u32, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::invalid("descriptor dimension must be positive"));
        }
        if data.len() != width as usize * height as usize * dim {
            return Err(Error::invalid(format!(
                "descriptor buffer has {} values, expected {}x{}x{}",
                data.len(),
                width,
                height,
                dim
            )));
        }
        if let Some(i) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::invalid(format!("non-finite descriptor value at {i}")));
        }
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn pixel_index(&self, x: u32, y: u32) -> usize {
        y as usize * self.width as usize + x as usize
    }

    pub fn get(&self, x: u32, y: u32) -> &[f32] {
        let i = self.pixel_index(x, y) * self.dim;
        &self.data[i..i + self.dim]
    }

    pub fn get_mut(&mut self, x: u32, y: u32) -> &mut [f32] {
        let i = self.pixel_index(x, y) * self.dim;
        &mut self.data[i..i + self.dim]
    }

    pub fn pixel(&self, index: usize) -> &[f32] {
        &self.data[index * self.dim..(index + 1) * self.dim]
    }

    pub fn pixel_mut(&mut self, index: usize) -> &mut [f32] {
        &mut self.data[index * self.dim..(index + 1) * self.dim]
    }

    /// Bilinear read at continuous image coordinates `(u, v)`.
    ///
    /// Samples live at pixel centers; reads closer than half a pixel to the
    /// border clamp to the outermost samples. Coordinates outside
    /// `[0, width] × [0, height]` are rejected.
    pub fn sample_bilinear(&self, u: f64, v: f64, out: &mut [f64]) -> Result<()> {
        if out.len() != self.dim {
            return Err(Error::invalid("output buffer dimension mismatch"));
        }
        let w = self.width as f64;
        let h = self.height as f64;
        if !(u >= 0.0 && v >= 0.0 && u <= w && v <= h) {
            return Err(Error::invalid(format!(
                "coordinate ({u}, {v}) outside {}x{} image",
                self.width, self.height
            )));
        }
        let x = (u - 0.5).clamp(0.0, w - 1.0);
        let y = (v - 0.5).clamp(0.0, h - 1.0);
        let x0 = x.floor() as u32;
        let y0 = y.floor() as u32;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let ax = x - x0 as f64;
        let ay = y - y0 as f64;
        let (a, b, c, d) = (self.get(x0, y0), self.get(x1, y0), self.get(x0, y1), self.get(x1, y1));
        for ch in 0..self.dim {
            let top = a[ch] as f64 * (1.0 - ax) + b[ch] as f64 * ax;
            let bottom = c[ch] as f64 * (1.0 - ax) + d[ch] as f64 * ax;
            out[ch] = top * (1.0 - ay) + bottom * ay;
        }
        Ok(())
    }

    /// FDESC1: little-endian header then planar f32 channels.
    pub fn to_fdesc_bytes(&self) -> Vec<u8> {
        let plane = self.width as usize * self.height as usize;
        let mut buf = Vec::with_capacity(24 + plane * self.dim * 4);
        buf.extend_from_slice(FDESC_MAGIC);
        buf.extend_from_slice(&FDESC_VERSION.to_le_bytes());
        buf.extend_from_slice(&self.width.to_le_bytes());
        buf.extend_from_slice(&self.height.to_le_bytes());
        buf.extend_from_slice(&(self.dim as u32).to_le_bytes());
        for ch in 0..self.dim {
            for p in 0..plane {
                buf.extend_from_slice(&self.data[p * self.dim + ch].to_le_bytes());
            }
        }
        buf
    }

    pub fn from_fdesc_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = crate::featmap::ByteReader::new(bytes);
        let magic = r.take(8)?;
        if magic != FDESC_MAGIC {
            return Err(Error::Format {
                offset: 0,
                message: "bad FDESC1 magic".into(),
            });
        }
        let version_at = r.offset();
        let version = r.u32()?;
        if version != FDESC_VERSION {
            return Err(Error::Format {
                offset: version_at,
                message: format!("unsupported FDESC version {version}"),
            });
        }
        let width = r.u32()?;
        let height = r.u32()?;
        let dim_at = r.offset();
        let dim = r.u32()? as usize;
        if dim == 0 {
            return Err(Error::Format {
                offset: dim_at,
                message: "zero descriptor dimension".into(),
            });
        }
        let plane = width as usize * height as usize;
        let mut data = vec![0.0f32; plane * dim];
        for ch in 0..dim {
            for p in 0..plane {
                let at = r.offset();
                let v = r.f32()?;
                if !v.is_finite() {
                    return Err(Error::Format {
                        offset: at,
                        message: "non-finite descriptor".into(),
                    });
                }
                data[p * dim + ch] = v;
            }
        }
        r.expect_end()?;
        Ok(Self {
            width,
            height,
            dim,
            data,
        })
    }

    pub fn save_fdesc(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
        f.write_all(&self.to_fdesc_bytes())?;
        f.flush()?;
        Ok(())
    }

    pub fn load_fdesc(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_fdesc_bytes(&std::fs::read(path)?)
    }

    /// First three channels mapped affinely to [0, 255]; pixels with
    /// `mask == false` are black.
    pub fn to_ppm_bytes(&self, mask: Option<&[bool]>) -> Vec<u8> {
        let plane = self.width as usize * self.height as usize;
        let is_valid = |p: usize| mask.is_none_or(|m| m[p]);
        let channels = self.dim.min(3);
        let mut lo = [f32::INFINITY; 3];
        let mut hi = [f32::NEG_INFINITY; 3];
        for p in (0..plane).filter(|&p| is_valid(p)) {
            for ch in 0..channels {
                let v = self.data[p * self.dim + ch];
                lo[ch] = lo[ch].min(v);
                hi[ch] = hi[ch].max(v);
            }
        }
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        for p in 0..plane {
            for ch in 0..3 {
                let byte = if ch < channels && is_valid(p) {
                    let span = hi[ch] - lo[ch];
                    let t = if span > 0.0 {
                        (self.data[p * self.dim + ch] - lo[ch]) / span
                    } else {
                        0.5
                    };
                    (t * 255.0).round().clamp(0.0, 255.0) as u8
                } else {
                    0
                };
                out.push(byte);
            }
        }
        out
    }
}
