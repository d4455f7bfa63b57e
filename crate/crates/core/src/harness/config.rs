//! Flat `key = value` experiment configuration.
//!
//! Blank lines and text after `#` are ignored. Unknown keys are errors so
//! typos do not silently fall back to defaults.

use std::path::Path;
use std::str::FromStr;

use super::trajectory::{TrajectoryKind, TrajectorySpec};
use super::world::WorldSpec;
use crate::error::{Error, Result};
use crate::geometry::CameraIntrinsics;
use crate::mcl::{ClusterConfig, FilterConfig, LikelihoodConfig, MotionNoise};
use crate::vo::VoConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoSource {
    /// Essential-matrix VO on synthetic feature matches.
    Internal,
    /// Ground-truth increments plus Gaussian noise.
    Oracle,
}

impl FromStr for VoSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "internal" => Ok(Self::Internal),
            "oracle" => Ok(Self::Oracle),
            other => Err(Error::invalid(format!("unknown vo source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum InitMode {
    /// Gaussian about the first ground-truth pose.
    Tracking,
    /// Uniform over the drivable area and all headings.
    Global,
}

impl FromStr for InitMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tracking" => Ok(Self::Tracking),
            "global" => Ok(Self::Global),
            other => Err(Error::invalid(format!("unknown init mode '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarnessConfig {
    pub seed: u64,
    // World.
    pub world_seed: u64,
    pub width: u32,
    pub height: u32,
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub descriptor_dim: usize,
    pub noise_sigma: f64,
    pub nuisance: f64,
    pub field_terms: usize,
    pub field_scale: f64,
    pub field_min_frequency: f64,
    pub field_max_frequency: f64,
    pub camera_height: f64,
    pub camera_pitch: f64,
    pub walls: bool,
    pub boxes: bool,
    // Map.
    pub voxel_size: f64,
    /// Lateral offsets (m) of the mapping passes, each driven both ways.
    pub mapping_offsets: Vec<f64>,
    // Trajectory.
    pub trajectory: TrajectoryKind,
    pub speed: f64,
    pub dt: f64,
    pub frames: usize,
    pub radius: f64,
    pub test_offset: f64,
    // Odometry.
    pub vo: VoSource,
    pub ransac_iters: usize,
    pub inlier_threshold: f64,
    pub vo_matches: usize,
    pub vo_pixel_noise: f64,
    pub vo_outliers: f64,
    pub oracle_sigma_t: f64,
    pub oracle_sigma_r: f64,
    // Filter.
    pub particles: usize,
    pub sigma_l_c: f64,
    pub min_valid_fraction: f64,
    pub floor_likelihood: f64,
    pub bandwidth: f64,
    pub rotation_weight: f64,
    pub cluster_iters: usize,
    pub cluster_seeds: usize,
    pub motion_sigma_t: f64,
    pub motion_sigma_r: f64,
    pub init: InitMode,
    pub init_sigma_t: f64,
    pub init_sigma_r: f64,
    /// Frame at which particles are scattered globally; 0 disables.
    pub kidnap_frame: usize,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            world_seed: 7,
            width: 64,
            height: 48,
            fx: 50.0,
            fy: 50.0,
            cx: 32.0,
            cy: 24.0,
            descriptor_dim: 10,
            noise_sigma: 0.05,
            nuisance: 0.02,
            field_terms: 12,
            field_scale: 0.5,
            field_min_frequency: 0.5,
            field_max_frequency: 2.5,
            camera_height: 1.2,
            camera_pitch: 0.2,
            walls: true,
            boxes: true,
            voxel_size: 0.2,
            mapping_offsets: vec![-0.3, 0.0, 0.3],
            trajectory: TrajectoryKind::FigureEight,
            speed: 1.25,
            dt: 0.1,
            frames: 200,
            radius: 2.0,
            test_offset: 0.1,
            vo: VoSource::Internal,
            ransac_iters: 200,
            inlier_threshold: 0.03,
            vo_matches: 120,
            vo_pixel_noise: 0.5,
            vo_outliers: 0.2,
            oracle_sigma_t: 0.01,
            oracle_sigma_r: 0.005,
            particles: 500,
            sigma_l_c: 1000.0,
            min_valid_fraction: 0.01,
            floor_likelihood: 1e-9,
            bandwidth: 0.5,
            rotation_weight: 1.0,
            cluster_iters: 30,
            cluster_seeds: 16,
            motion_sigma_t: 0.03,
            motion_sigma_r: 0.02,
            init: InitMode::Tracking,
            init_sigma_t: 0.1,
            init_sigma_r: 0.05,
            kidnap_frame: 0,
        }
    }
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid(format!("bad value '{value}' for {key}")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::invalid(format!("bad value '{value}' for {key}"))),
    }
}

impl HarnessConfig {
    pub const KEYS: &'static [&'static str] = &[
        "seed",
        "world_seed",
        "width",
        "height",
        "fx",
        "fy",
        "cx",
        "cy",
        "descriptor_dim",
        "noise_sigma",
        "nuisance",
        "field_terms",
        "field_scale",
        "field_min_frequency",
        "field_max_frequency",
        "camera_height",
        "camera_pitch",
        "walls",
        "boxes",
        "voxel_size",
        "mapping_offsets",
        "trajectory",
        "speed",
        "dt",
        "frames",
        "radius",
        "test_offset",
        "vo",
        "ransac_iters",
        "inlier_threshold",
        "vo_matches",
        "vo_pixel_noise",
        "vo_outliers",
        "oracle_sigma_t",
        "oracle_sigma_r",
        "particles",
        "sigma_l_c",
        "min_valid_fraction",
        "floor_likelihood",
        "bandwidth",
        "rotation_weight",
        "cluster_iters",
        "cluster_seeds",
        "motion_sigma_t",
        "motion_sigma_r",
        "init",
        "init_sigma_t",
        "init_sigma_r",
        "kidnap_frame",
    ];

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_value(key, v)?,
            "world_seed" => self.world_seed = parse_value(key, v)?,
            "width" => self.width = parse_value(key, v)?,
            "height" => self.height = parse_value(key, v)?,
            "fx" => self.fx = parse_value(key, v)?,
            "fy" => self.fy = parse_value(key, v)?,
            "cx" => self.cx = parse_value(key, v)?,
            "cy" => self.cy = parse_value(key, v)?,
            "descriptor_dim" => self.descriptor_dim = parse_value(key, v)?,
            "noise_sigma" => self.noise_sigma = parse_value(key, v)?,
            "nuisance" => self.nuisance = parse_value(key, v)?,
            "field_terms" => self.field_terms = parse_value(key, v)?,
            "field_scale" => self.field_scale = parse_value(key, v)?,
            "field_min_frequency" => self.field_min_frequency = parse_value(key, v)?,
            "field_max_frequency" => self.field_max_frequency = parse_value(key, v)?,
            "camera_height" => self.camera_height = parse_value(key, v)?,
            "camera_pitch" => self.camera_pitch = parse_value(key, v)?,
            "walls" => self.walls = parse_bool(key, v)?,
            "boxes" => self.boxes = parse_bool(key, v)?,
            "voxel_size" => self.voxel_size = parse_value(key, v)?,
            "mapping_offsets" => {
                self.mapping_offsets = v
                    .split(',')
                    .filter(|s| !s.trim().is_empty())
                    .map(|s| parse_value(key, s.trim()))
                    .collect::<Result<_>>()?
            }
            "trajectory" => self.trajectory = v.parse()?,
            "speed" => self.speed = parse_value(key, v)?,
            "dt" => self.dt = parse_value(key, v)?,
            "frames" => self.frames = parse_value(key, v)?,
            "radius" => self.radius = parse_value(key, v)?,
            "test_offset" => self.test_offset = parse_value(key, v)?,
            "vo" => self.vo = v.parse()?,
            "ransac_iters" => self.ransac_iters = parse_value(key, v)?,
            "inlier_threshold" => self.inlier_threshold = parse_value(key, v)?,
            "vo_matches" => self.vo_matches = parse_value(key, v)?,
            "vo_pixel_noise" => self.vo_pixel_noise = parse_value(key, v)?,
            "vo_outliers" => self.vo_outliers = parse_value(key, v)?,
            "oracle_sigma_t" => self.oracle_sigma_t = parse_value(key, v)?,
            "oracle_sigma_r" => self.oracle_sigma_r = parse_value(key, v)?,
            "particles" => self.particles = parse_value(key, v)?,
            "sigma_l_c" => self.sigma_l_c = parse_value(key, v)?,
            "min_valid_fraction" => self.min_valid_fraction = parse_value(key, v)?,
            "floor_likelihood" => self.floor_likelihood = parse_value(key, v)?,
            "bandwidth" => self.bandwidth = parse_value(key, v)?,
            "rotation_weight" => self.rotation_weight = parse_value(key, v)?,
            "cluster_iters" => self.cluster_iters = parse_value(key, v)?,
            "cluster_seeds" => self.cluster_seeds = parse_value(key, v)?,
            "motion_sigma_t" => self.motion_sigma_t = parse_value(key, v)?,
            "motion_sigma_r" => self.motion_sigma_r = parse_value(key, v)?,
            "init" => self.init = v.parse()?,
            "init_sigma_t" => self.init_sigma_t = parse_value(key, v)?,
            "init_sigma_r" => self.init_sigma_r = parse_value(key, v)?,
            "kidnap_frame" => self.kidnap_frame = parse_value(key, v)?,
            other => return Err(Error::invalid(format!("unknown config key '{other}'"))),
        }
        Ok(())
    }

    /// Applies `key = value` lines on top of `self`.
    pub fn apply_text(&mut self, text: &str) -> Result<()> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                message: "expected key = value".into(),
            })?;
            self.set(key.trim(), value).map_err(|e| Error::Parse {
                line: i + 1,
                message: e.to_string(),
            })?;
        }
        Ok(())
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        cfg.apply_text(text)?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }

    /// Text form of one key, parseable by [`HarnessConfig::set`].
    pub fn get(&self, key: &str) -> Option<String> {
        Some(match key {
            "seed" => self.seed.to_string(),
            "world_seed" => self.world_seed.to_string(),
            "width" => self.width.to_string(),
            "height" => self.height.to_string(),
            "fx" => self.fx.to_string(),
            "fy" => self.fy.to_string(),
            "cx" => self.cx.to_string(),
            "cy" => self.cy.to_string(),
            "descriptor_dim" => self.descriptor_dim.to_string(),
            "noise_sigma" => self.noise_sigma.to_string(),
            "nuisance" => self.nuisance.to_string(),
            "field_terms" => self.field_terms.to_string(),
            "field_scale" => self.field_scale.to_string(),
            "field_min_frequency" => self.field_min_frequency.to_string(),
            "field_max_frequency" => self.field_max_frequency.to_string(),
            "camera_height" => self.camera_height.to_string(),
            "camera_pitch" => self.camera_pitch.to_string(),
            "walls" => self.walls.to_string(),
            "boxes" => self.boxes.to_string(),
            "voxel_size" => self.voxel_size.to_string(),
            "mapping_offsets" => self
                .mapping_offsets
                .iter()
                .map(|o| o.to_string())
                .collect::<Vec<_>>()
                .join(","),
            "trajectory" => self.trajectory.to_string(),
            "speed" => self.speed.to_string(),
            "dt" => self.dt.to_string(),
            "frames" => self.frames.to_string(),
            "radius" => self.radius.to_string(),
            "test_offset" => self.test_offset.to_string(),
            "vo" => match self.vo {
                VoSource::Internal => "internal".into(),
                VoSource::Oracle => "oracle".into(),
            },
            "ransac_iters" => self.ransac_iters.to_string(),
            "inlier_threshold" => self.inlier_threshold.to_string(),
            "vo_matches" => self.vo_matches.to_string(),
            "vo_pixel_noise" => self.vo_pixel_noise.to_string(),
            "vo_outliers" => self.vo_outliers.to_string(),
            "oracle_sigma_t" => self.oracle_sigma_t.to_string(),
            "oracle_sigma_r" => self.oracle_sigma_r.to_string(),
            "particles" => self.particles.to_string(),
            "sigma_l_c" => self.sigma_l_c.to_string(),
            "min_valid_fraction" => self.min_valid_fraction.to_string(),
            "floor_likelihood" => self.floor_likelihood.to_string(),
            "bandwidth" => self.bandwidth.to_string(),
            "rotation_weight" => self.rotation_weight.to_string(),
            "cluster_iters" => self.cluster_iters.to_string(),
            "cluster_seeds" => self.cluster_seeds.to_string(),
            "motion_sigma_t" => self.motion_sigma_t.to_string(),
            "motion_sigma_r" => self.motion_sigma_r.to_string(),
            "init" => match self.init {
                InitMode::Tracking => "tracking".into(),
                InitMode::Global => "global".into(),
            },
            "init_sigma_t" => self.init_sigma_t.to_string(),
            "init_sigma_r" => self.init_sigma_r.to_string(),
            "kidnap_frame" => self.kidnap_frame.to_string(),
            _ => return None,
        })
    }

    pub fn to_text(&self) -> String {
        Self::KEYS
            .iter()
            .map(|k| format!("{k} = {}\n", self.get(k).expect("listed key")))
            .collect()
    }

    pub fn intrinsics(&self) -> Result<CameraIntrinsics> {
        CameraIntrinsics::new(self.fx, self.fy, self.cx, self.cy, self.width, self.height)
    }

    pub fn world_spec(&self) -> Result<WorldSpec> {
        let mut spec = WorldSpec::desk(self.world_seed);
        spec.intrinsics = self.intrinsics()?;
        spec.descriptor_dim = self.descriptor_dim;
        spec.noise_sigma = self.noise_sigma;
        spec.nuisance_scale = self.nuisance;
        spec.field_terms = self.field_terms;
        spec.field_scale = self.field_scale;
        spec.field_min_frequency = self.field_min_frequency;
        spec.field_max_frequency = self.field_max_frequency;
        spec.camera_height = self.camera_height;
        spec.camera_pitch = self.camera_pitch;
        spec.walls = self.walls;
        if !self.boxes {
            spec.boxes.clear();
        }
        Ok(spec)
    }

    pub fn trajectory_spec(&self) -> TrajectorySpec {
        let mut spec = TrajectorySpec::figure_eight(self.speed, self.dt, self.frames, self.radius);
        spec.kind = self.trajectory;
        if self.trajectory == TrajectoryKind::Straight {
            spec.start = [-self.speed * self.dt * self.frames as f64 / 2.0, 0.0];
        }
        spec.lateral_offset = self.test_offset;
        spec
    }

    /// Mapping passes: the test path footprint at each offset, both directions.
    pub fn mapping_specs(&self) -> Vec<TrajectorySpec> {
        let base = TrajectorySpec {
            lateral_offset: 0.0,
            ..self.trajectory_spec()
        };
        let lap = match self.trajectory {
            TrajectoryKind::FigureEight => 2.0 * std::f64::consts::TAU * self.radius,
            TrajectoryKind::Arc => std::f64::consts::TAU * self.radius,
            TrajectoryKind::Straight => self.speed * self.dt * self.frames as f64,
        };
        // Cover the full closed path even when the test run is shorter.
        let step = self.voxel_size.max(0.05);
        let frames = (lap / step).ceil() as usize + 1;
        let mut specs = Vec::new();
        for &offset in &self.mapping_offsets {
            for reverse in [false, true] {
                specs.push(TrajectorySpec {
                    speed: step,
                    dt: 1.0,
                    frames,
                    reverse,
                    lateral_offset: offset,
                    ..base.clone()
                });
            }
        }
        specs
    }

    pub fn vo_config(&self) -> VoConfig {
        VoConfig {
            ransac_iters: self.ransac_iters,
            inlier_threshold: self.inlier_threshold,
            expected_speed: self.speed,
            dt: self.dt,
            seed: self.seed,
            ..VoConfig::default()
        }
    }

    pub fn motion_noise(&self) -> Result<MotionNoise> {
        let (t, r) = (self.motion_sigma_t, self.motion_sigma_r);
        MotionNoise::diagonal([t, t, t, r, r, r])
    }

    pub fn filter_config(&self) -> Result<FilterConfig> {
        Ok(FilterConfig {
            likelihood: LikelihoodConfig {
                scale: self.sigma_l_c,
                min_valid_fraction: self.min_valid_fraction,
                floor: self.floor_likelihood,
            },
            cluster: ClusterConfig {
                bandwidth: self.bandwidth,
                rotation_weight: self.rotation_weight,
                max_iters: self.cluster_iters,
                max_seeds: self.cluster_seeds,
                ..ClusterConfig::default()
            },
            motion_noise: self.motion_noise()?,
        })
    }
}
