//! Sparse voxel map carrying running-mean descriptors.
//!
//! Voxels are hash-indexed by their integer grid coordinate
//! `floor(coordinate / voxel_size)`. Storage grows with the number of
//! occupied voxels only.

mod io;
mod render;

use std::collections::HashMap;

use nalgebra::Point3;

use crate::descriptor::DescriptorImage;
use crate::error::{Error, Result};
use crate::geometry::{backproject, CameraIntrinsics, Pixel, Pose};

pub(crate) use io::ByteReader;
pub use render::{render_imagined, splat_radius, ImaginedView, ZBuffer};

pub type VoxelIndex = [i32; 3];

/// Per-pixel camera-frame depth in meters; non-positive or non-finite
/// entries mark missing data.
#[derive(Debug, Clone, PartialEq)]
pub struct DepthImage {
    width: u32,
    height: u32,
    data: Vec<f64>,
}

impl DepthImage {
    pub fn new(width: u32, height: u32, data: Vec<f64>) -> Result<Self> {
        if data.len() != width as usize * height as usize {
            return Err(Error::invalid("depth buffer size mismatch"));
        }
        Ok(Self { width, height, data })
    }

    pub fn filled(width: u32, height: u32, value: f64) -> Self {
        Self {
            width,
            height,
            data: vec![value; width as usize * height as usize],
        }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> f64 {
        self.data[y as usize * self.width as usize + x as usize]
    }

    pub fn set(&mut self, x: u32, y: u32, value: f64) {
        self.data[y as usize * self.width as usize + x as usize] = value;
    }

    pub fn is_valid_depth(d: f64) -> bool {
        d > 0.0 && d.is_finite()
    }
}

/// One posed frame to fuse into the map.
#[derive(Debug, Clone, Copy)]
pub struct Observation<'a> {
    pub descriptors: &'a DescriptorImage,
    pub depth: &'a DepthImage,
    pub intrinsics: &'a CameraIntrinsics,
    pub pose: &'a Pose,
}

/// Read-only view of one voxel.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voxel<'a> {
    pub index: VoxelIndex,
    pub count: u32,
    pub mean_descriptor: &'a [f64],
}

#[derive(Debug, Clone)]
pub struct VoxelMap {
    voxel_size: f64,
    dim: usize,
    slots: HashMap<VoxelIndex, usize>,
    indices: Vec<VoxelIndex>,
    counts: Vec<u32>,
    means: Vec<f64>,
}

impl VoxelMap {
    pub fn new(voxel_size: f64, dim: usize) -> Result<Self> {
        if !(voxel_size > 0.0) || !voxel_size.is_finite() {
            return Err(Error::invalid(format!("voxel size must be positive, got {voxel_size}")));
        }
        if dim == 0 {
            return Err(Error::invalid("descriptor dimension must be positive"));
        }
        Ok(Self {
            voxel_size,
            dim,
            slots: HashMap::new(),
            indices: Vec::new(),
            counts: Vec::new(),
            means: Vec::new(),
        })
    }

    pub fn voxel_size(&self) -> f64 {
        self.voxel_size
    }

    pub fn descriptor_dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index_of(&self, p: &Point3<f64>) -> VoxelIndex {
        let q = |c: f64| (c / self.voxel_size).floor() as i32;
        [q(p.x), q(p.y), q(p.z)]
    }

    pub fn center_of(&self, index: VoxelIndex) -> Point3<f64> {
        let c = |i: i32| (i as f64 + 0.5) * self.voxel_size;
        Point3::new(c(index[0]), c(index[1]), c(index[2]))
    }

    pub fn get(&self, index: VoxelIndex) -> Option<Voxel<'_>> {
        self.slots.get(&index).map(|&slot| self.voxel_at(slot))
    }

    pub fn iter(&self) -> impl Iterator<Item = Voxel<'_>> + '_ {
        (0..self.len()).map(move |slot| self.voxel_at(slot))
    }

    pub(crate) fn voxel_at(&self, slot: usize) -> Voxel<'_> {
        Voxel {
            index: self.indices[slot],
            count: self.counts[slot],
            mean_descriptor: self.mean_at(slot),
        }
    }

    pub(crate) fn mean_at(&self, slot: usize) -> &[f64] {
        &self.means[slot * self.dim..(slot + 1) * self.dim]
    }

    pub(crate) fn indices(&self) -> &[VoxelIndex] {
        &self.indices
    }

    /// Fuses one descriptor into the voxel containing `point`.
    pub fn fuse_point(&mut self, point: &Point3<f64>, descriptor: &[f32]) -> Result<()> {
        if descriptor.len() != self.dim {
            return Err(Error::invalid(format!(
                "descriptor has {} channels, map expects {}",
                descriptor.len(),
                self.dim
            )));
        }
        if !descriptor.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("non-finite descriptor"));
        }
        let index = self.index_of(point);
        self.fuse_index(index, descriptor.iter().map(|&v| v as f64));
        Ok(())
    }

    fn fuse_index(&mut self, index: VoxelIndex, descriptor: impl Iterator<Item = f64>) {
        let dim = self.dim;
        let slot = match self.slots.get(&index) {
            Some(&slot) => slot,
            None => {
                let slot = self.indices.len();
                self.slots.insert(index, slot);
                self.indices.push(index);
                self.counts.push(0);
                self.means.resize(self.means.len() + dim, 0.0);
                slot
            }
        };
        self.counts[slot] += 1;
        let k = self.counts[slot] as f64;
        let mean = &mut self.means[slot * dim..(slot + 1) * dim];
        for (m, x) in mean.iter_mut().zip(descriptor) {
            *m += (x - *m) / k;
        }
    }

    /// Backprojects every pixel with valid depth and fuses its descriptor.
    pub fn insert_observation(&mut self, obs: &Observation<'_>) -> Result<()> {
        let f = obs.descriptors;
        let d = obs.depth;
        if f.dim() != self.dim {
            return Err(Error::invalid(format!(
                "descriptor image has {} channels, map expects {}",
                f.dim(),
                self.dim
            )));
        }
        if f.width() != d.width() || f.height() != d.height() {
            return Err(Error::invalid("descriptor and depth images differ in size"));
        }
        for y in 0..d.height() {
            for x in 0..d.width() {
                let depth = d.get(x, y);
                if !DepthImage::is_valid_depth(depth) {
                    continue;
                }
                let px = Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
                let q = backproject(&px, depth, obs.intrinsics, obs.pose)?;
                let index = self.index_of(&q);
                let desc = f.get(x, y);
                self.fuse_index(index, desc.iter().map(|&v| v as f64));
            }
        }
        Ok(())
    }

    /// Sorts voxels by grid index and releases spare capacity. The map is
    /// read-only from here on in normal use; rendering takes `&self`.
    pub fn finalize(&mut self) {
        let mut order: Vec<usize> = (0..self.len()).collect();
        order.sort_by_key(|&s| self.indices[s]);
        let dim = self.dim;
        let indices: Vec<VoxelIndex> = order.iter().map(|&s| self.indices[s]).collect();
        let counts: Vec<u32> = order.iter().map(|&s| self.counts[s]).collect();
        let mut means = Vec::with_capacity(self.means.len());
        for &s in &order {
            means.extend_from_slice(&self.means[s * dim..(s + 1) * dim]);
        }
        self.slots = indices.iter().enumerate().map(|(s, &i)| (i, s)).collect();
        self.indices = indices;
        self.counts = counts;
        self.means = means;
    }

    pub(crate) fn from_parts(voxel_size: f64, dim: usize, entries: Vec<(VoxelIndex, u32, Vec<f64>)>) -> Result<Self> {
        let mut map = Self::new(voxel_size, dim)?;
        for (index, count, mean) in entries {
            if map.slots.insert(index, map.indices.len()).is_some() {
                return Err(Error::invalid(format!("duplicate voxel {index:?}")));
            }
            map.indices.push(index);
            map.counts.push(count);
            map.means.extend_from_slice(&mean);
        }
        Ok(map)
    }

    pub fn memory_bytes(&self) -> usize {
        self.indices.capacity() * std::mem::size_of::<VoxelIndex>()
            + self.counts.capacity() * 4
            + self.means.capacity() * 8
            + self.slots.capacity() * (std::mem::size_of::<VoxelIndex>() + 8)
    }
}
