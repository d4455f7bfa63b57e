//! Imagined views: z-buffered square splats of voxel centers.

use nalgebra::Vector3;

use super::{DepthImage, VoxelMap};
use crate::descriptor::DescriptorImage;
use crate::geometry::{CameraIntrinsics, Pose};

const EMPTY: u32 = u32::MAX;

/// Descriptor, depth and validity images rendered from the map.
#[derive(Debug, Clone, PartialEq)]
pub struct ImaginedView {
    pub descriptors: DescriptorImage,
    pub depth: DepthImage,
    pub valid: Vec<bool>,
}

impl ImaginedView {
    pub fn valid_count(&self) -> usize {
        self.valid.iter().filter(|&&v| v).count()
    }

    pub fn to_ppm_bytes(&self) -> Vec<u8> {
        self.descriptors.to_ppm_bytes(Some(&self.valid))
    }
}

/// Reusable per-pixel z-buffer holding the winning voxel slot and its depth.
#[derive(Debug, Clone)]
pub struct ZBuffer {
    width: u32,
    height: u32,
    depth: Vec<f64>,
    slot: Vec<u32>,
}

impl ZBuffer {
    pub fn new(width: u32, height: u32) -> Self {
        let n = width as usize * height as usize;
        Self {
            width,
            height,
            depth: vec![f64::INFINITY; n],
            slot: vec![EMPTY; n],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    fn reset(&mut self, width: u32, height: u32) {
        let n = width as usize * height as usize;
        self.width = width;
        self.height = height;
        self.depth.clear();
        self.depth.resize(n, f64::INFINITY);
        self.slot.clear();
        self.slot.resize(n, EMPTY);
    }

    /// Winning voxel slot and depth at pixel `index`, if any.
    pub fn get(&self, index: usize) -> Option<(usize, f64)> {
        match self.slot[index] {
            EMPTY => None,
            s => Some((s as usize, self.depth[index])),
        }
    }

    pub fn valid_count(&self) -> usize {
        self.slot.iter().filter(|&&s| s != EMPTY).count()
    }

    /// Splats every voxel whose center projects inside the image. Each
    /// pixel keeps the voxel with the smallest camera-frame depth; equal
    /// depths go to the lexicographically smallest grid index.
    pub fn render(&mut self, map: &VoxelMap, k: &CameraIntrinsics, pose: &Pose) {
        self.reset(k.width, k.height);
        let size = map.voxel_size();
        let r = pose.rotation();
        let t = pose.translation();
        let w = k.width as i64;
        let h = k.height as i64;
        let max_radius = w.max(h);
        let indices = map.indices();

        for (slot, idx) in indices.iter().enumerate() {
            let center = Vector3::new(
                (idx[0] as f64 + 0.5) * size,
                (idx[1] as f64 + 0.5) * size,
                (idx[2] as f64 + 0.5) * size,
            );
            let c = r * center + t;
            if !(c.z > 0.0) {
                continue;
            }
            let inv_z = 1.0 / c.z;
            let u = k.fx * c.x * inv_z + k.cx;
            let v = k.fy * c.y * inv_z + k.cy;
            if !k.contains(u, v) {
                continue;
            }
            let radius = splat_radius(k.fx, size, c.z).min(max_radius) as f64;
            let x0 = ((u - radius - 0.5).ceil() as i64).max(0);
            let x1 = ((u + radius - 0.5).floor() as i64).min(w - 1);
            let y0 = ((v - radius - 0.5).ceil() as i64).max(0);
            let y1 = ((v + radius - 0.5).floor() as i64).min(h - 1);
            for y in y0..=y1 {
                let row = (y * w) as usize;
                for x in x0..=x1 {
                    let i = row + x as usize;
                    let current = self.slot[i];
                    let closer = c.z < self.depth[i]
                        || (c.z == self.depth[i] && current != EMPTY && *idx < indices[current as usize]);
                    if closer {
                        self.depth[i] = c.z;
                        self.slot[i] = slot as u32;
                    }
                }
            }
        }
    }
}

/// Half-width in pixels of the square footprint of a voxel at `depth`.
pub fn splat_radius(focal: f64, voxel_size: f64, depth: f64) -> i64 {
    ((focal * voxel_size / depth / 2.0).round() as i64).max(1)
}

/// Renders the descriptor view the map predicts from `pose`.
pub fn render_imagined(map: &VoxelMap, k: &CameraIntrinsics, pose: &Pose) -> ImaginedView {
    let mut zbuf = ZBuffer::new(k.width, k.height);
    zbuf.render(map, k, pose);
    let dim = map.descriptor_dim();
    let mut descriptors = DescriptorImage::zeros(k.width, k.height, dim);
    let mut depth = DepthImage::filled(k.width, k.height, 0.0);
    let mut valid = vec![false; k.pixel_count()];
    for (i, ok) in valid.iter_mut().enumerate() {
        if let Some((slot, z)) = zbuf.get(i) {
            *ok = true;
            let x = (i % k.width as usize) as u32;
            let y = (i / k.width as usize) as u32;
            depth.set(x, y, z);
            for (dst, &m) in descriptors.pixel_mut(i).iter_mut().zip(map.mean_at(slot)) {
                *dst = m as f32;
            }
        }
    }
    ImaginedView {
        descriptors,
        depth,
        valid,
    }
}
