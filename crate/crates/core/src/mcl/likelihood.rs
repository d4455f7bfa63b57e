use crate::descriptor::DescriptorImage;
use crate::error::{Error, Result};
use crate::featmap::{VoxelMap, ZBuffer};
use crate::geometry::{CameraIntrinsics, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodConfig {
    /// `sigma_l = scale / (n * valid_pixels)`.
    pub scale: f64,
    /// Imagined views with a smaller valid fraction get the floor likelihood.
    pub min_valid_fraction: f64,
    pub floor: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            scale: 1.0,
            min_valid_fraction: 0.01,
            floor: 1e-9,
        }
    }
}

impl LikelihoodConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.floor > 0.0) || !(self.scale > 0.0) || !(self.min_valid_fraction >= 0.0) {
            return Err(Error::invalid("likelihood floor and scale must be positive"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LikelihoodEval {
    /// Natural log of the likelihood factor.
    pub log_factor: f64,
    /// L1 norm of the imagined-minus-observed difference over valid pixels.
    pub l1: f64,
    pub valid_pixels: usize,
    /// True when the floor was applied.
    pub floored: bool,
}

impl LikelihoodEval {
    pub fn factor(&self) -> f64 {
        self.log_factor.exp()
    }
}

/// `exp(-sigma_l * |imagined - observed|_1)` where `sigma_l = scale / (n * V)`
/// and the norm runs over the `V` valid imagined pixels only.
pub fn likelihood_from_l1(l1: f64, dim: usize, valid: usize, total: usize, cfg: &LikelihoodConfig) -> LikelihoodEval {
    let fraction = if total == 0 { 0.0 } else { valid as f64 / total as f64 };
    if valid == 0 || fraction < cfg.min_valid_fraction {
        return LikelihoodEval {
            log_factor: cfg.floor.ln(),
            l1,
            valid_pixels: valid,
            floored: true,
        };
    }
    let sigma = cfg.scale / (dim as f64 * valid as f64);
    LikelihoodEval {
        log_factor: -sigma * l1,
        l1,
        valid_pixels: valid,
        floored: false,
    }
}

/// Renders the map from `pose` into `zbuf` and scores it against `observed`.
pub fn pose_likelihood(
    map: &VoxelMap,
    k: &CameraIntrinsics,
    pose: &Pose,
    observed: &DescriptorImage,
    cfg: &LikelihoodConfig,
    zbuf: &mut ZBuffer,
) -> Result<LikelihoodEval> {
    let dim = map.descriptor_dim();
    if observed.dim() != dim {
        return Err(Error::invalid(format!(
            "observation has {} channels, map has {}",
            observed.dim(),
            dim
        )));
    }
    if observed.width() != k.width || observed.height() != k.height {
        return Err(Error::invalid("observation size differs from camera"));
    }
    zbuf.render(map, k, pose);
    let total = k.pixel_count();
    let mut l1 = 0.0;
    let mut valid = 0usize;
    for i in 0..total {
        if let Some((slot, _)) = zbuf.get(i) {
            valid += 1;
            l1 += map
                .mean_at(slot)
                .iter()
                .zip(observed.pixel(i))
                .map(|(m, &o)| (m - o as f64).abs())
                .sum::<f64>();
        }
    }
    Ok(likelihood_from_l1(l1, dim, valid, total, cfg))
}
