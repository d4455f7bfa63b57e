//! Monte Carlo localisation against imagined descriptor views.
//!
//! Each step predicts particles with a noisy odometry increment, weights
//! them by comparing the view rendered from the map at the particle pose to
//! the observed descriptors, resamples when the effective sample size drops
//! below `N / 2`, and reports the centroid of the heaviest weighted
//! mean-shift cluster.
//!
//! Particle poses are world-to-camera. An increment `Δ` maps
//! previous-camera to current-camera coordinates, so prediction composes on
//! the left: `pose_t = exp(Δ + η) ∘ pose_{t-1}`.

mod cluster;
mod likelihood;
mod noise;
mod resample;

use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

pub use cluster::{kernel_density, map_estimate, mean_shift, shift_once, Cluster, ClusterConfig, PosePoint};
pub use likelihood::{likelihood_from_l1, pose_likelihood, LikelihoodConfig, LikelihoodEval};
pub use noise::MotionNoise;
pub use resample::{effective_sample_size, resample, systematic_indices, systematic_resample};

use crate::descriptor::DescriptorImage;
use crate::error::{Error, Result};
use crate::featmap::{VoxelMap, ZBuffer};
use crate::geometry::{so3_exp, CameraIntrinsics, Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Particle {
    pub pose: Pose,
    pub weight: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticleSet {
    particles: Vec<Particle>,
}

impl ParticleSet {
    pub fn from_particles(particles: Vec<Particle>) -> Self {
        Self { particles }
    }

    /// Equal weights over the given poses.
    pub fn uniform(poses: Vec<Pose>) -> Self {
        let w = 1.0 / poses.len().max(1) as f64;
        Self {
            particles: poses.into_iter().map(|pose| Particle { pose, weight: w }).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.particles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.particles.is_empty()
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Particle> {
        self.particles.iter()
    }

    pub fn particles(&self) -> &[Particle] {
        &self.particles
    }

    pub fn weight_sum(&self) -> f64 {
        self.particles.iter().map(|p| p.weight).sum()
    }

    pub fn effective_sample_size(&self) -> f64 {
        effective_sample_size(self.particles.iter().map(|p| p.weight))
    }

    pub fn normalize(&mut self) -> Result<()> {
        let total = self.weight_sum();
        if !(total > 0.0) || !total.is_finite() {
            return Err(Error::DegenerateWeights(format!("weight sum {total}")));
        }
        for p in &mut self.particles {
            p.weight /= total;
        }
        Ok(())
    }
}

/// Where the initial particles come from.
#[derive(Debug, Clone, PartialEq)]
#[allow(clippy::large_enum_variant)]
pub enum InitRegion {
    /// Uniform over a box of body placements. Each sample draws
    /// `a ∈ [lower, upper]` per axis, builds the body-to-world transform
    /// with translation `a[0..3]` and rotation vector `a[3..6]`, and places
    /// the camera through `mount` (camera-to-body).
    Uniform {
        mount: Pose,
        lower: [f64; 6],
        upper: [f64; 6],
    },
    /// Gaussian about a prior world-to-camera pose: `exp(η) ∘ prior`.
    Gaussian { prior: Pose, spread: MotionNoise },
}

/// Stream-split generator so particle `i` draws the same numbers no matter
/// how work is scheduled.
fn particle_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Mixes a step seed with a stage tag (splitmix64 finalizer).
pub fn derive_seed(seed: u64, tag: u64) -> u64 {
    let mut z = seed ^ tag.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

pub fn body_to_camera_pose(mount: &Pose, placement: &[f64; 6]) -> Pose {
    let body = Pose::from_matrix_projected(
        so3_exp(&nalgebra::Vector3::new(placement[3], placement[4], placement[5])),
        nalgebra::Vector3::new(placement[0], placement[1], placement[2]),
    );
    body.compose(mount).inverse()
}

pub fn init_particles(n: usize, region: &InitRegion, seed: u64) -> Result<ParticleSet> {
    if n == 0 {
        return Err(Error::invalid("particle count must be at least 1"));
    }
    let poses: Vec<Pose> = match region {
        InitRegion::Uniform { mount, lower, upper } => {
            if lower
                .iter()
                .zip(upper)
                .any(|(l, u)| !(l <= u) || !l.is_finite() || !u.is_finite())
            {
                return Err(Error::invalid("empty initialisation region"));
            }
            (0..n)
                .map(|i| {
                    let mut rng = particle_rng(seed, i);
                    let mut a = [0.0; 6];
                    for ax in 0..6 {
                        a[ax] = if lower[ax] == upper[ax] {
                            lower[ax]
                        } else {
                            rng.random_range(lower[ax]..upper[ax])
                        };
                    }
                    body_to_camera_pose(mount, &a)
                })
                .collect()
        }
        InitRegion::Gaussian { prior, spread } => (0..n)
            .map(|i| {
                let mut rng = particle_rng(seed, i);
                Pose::exp(&spread.sample(&mut rng)).compose(prior)
            })
            .collect(),
    };
    Ok(ParticleSet::uniform(poses))
}

/// Moves every particle by `exp(delta + η)`, `η ~ N(0, noise)` drawn per
/// particle. Weights are untouched.
pub fn predict(set: &mut ParticleSet, delta: &Twist, noise: &MotionNoise, seed: u64) {
    set.particles.par_iter_mut().enumerate().for_each(|(i, p)| {
        let eta = if noise.is_zero() {
            Twist::zero()
        } else {
            noise.sample(&mut particle_rng(seed, i))
        };
        p.pose = Pose::exp(&(*delta + eta)).compose(&p.pose);
    });
}

/// Multiplies each weight by its imagined-view likelihood and renormalizes.
/// Returns the per-particle evaluations in particle order.
pub fn weight(
    set: &mut ParticleSet,
    observed: &DescriptorImage,
    map: &VoxelMap,
    k: &CameraIntrinsics,
    cfg: &LikelihoodConfig,
) -> Result<Vec<LikelihoodEval>> {
    cfg.validate()?;
    if observed.dim() != map.descriptor_dim() {
        return Err(Error::invalid(format!(
            "observation has {} channels, map has {}",
            observed.dim(),
            map.descriptor_dim()
        )));
    }
    let evals: Vec<LikelihoodEval> = set
        .particles
        .par_iter()
        .map_init(
            || ZBuffer::new(k.width, k.height),
            |zbuf, p| pose_likelihood(map, k, &p.pose, observed, cfg, zbuf),
        )
        .collect::<Result<_>>()?;
    let max_log = evals
        .iter()
        .zip(&set.particles)
        .filter(|(_, p)| p.weight > 0.0)
        .map(|(e, _)| e.log_factor)
        .fold(f64::NEG_INFINITY, f64::max);
    if !max_log.is_finite() {
        return Err(Error::DegenerateWeights("all prior weights are zero".into()));
    }
    for (p, e) in set.particles.iter_mut().zip(&evals) {
        p.weight *= (e.log_factor - max_log).exp();
    }
    set.normalize()?;
    Ok(evals)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilterConfig {
    pub likelihood: LikelihoodConfig,
    pub cluster: ClusterConfig,
    pub motion_noise: MotionNoise,
}

/// Per-step bookkeeping; times in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct StepDiagnostics {
    pub n_eff: f64,
    pub n_clusters: usize,
    pub resampled: bool,
    pub ms_predict: f64,
    pub ms_weight: f64,
    pub ms_resample: f64,
    pub ms_cluster: f64,
    pub ms_total: f64,
}

impl StepDiagnostics {
    pub fn stage_sum(&self) -> f64 {
        self.ms_predict + self.ms_weight + self.ms_resample + self.ms_cluster
    }
}

fn elapsed_ms(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// One filter iteration: predict, weight, conditional resample, cluster and
/// pick the heaviest mode.
pub fn step(
    set: &mut ParticleSet,
    delta: &Twist,
    observed: &DescriptorImage,
    map: &VoxelMap,
    k: &CameraIntrinsics,
    cfg: &FilterConfig,
    seed: u64,
) -> Result<(Pose, StepDiagnostics)> {
    let start = Instant::now();
    let mut diag = StepDiagnostics::default();

    let t = Instant::now();
    predict(set, delta, &cfg.motion_noise, derive_seed(seed, 1));
    diag.ms_predict = elapsed_ms(t);

    let t = Instant::now();
    weight(set, observed, map, k, &cfg.likelihood)?;
    diag.n_eff = set.effective_sample_size();
    diag.ms_weight = elapsed_ms(t);

    let t = Instant::now();
    diag.resampled = resample(set, derive_seed(seed, 2))?;
    diag.ms_resample = elapsed_ms(t);

    let t = Instant::now();
    let clusters = mean_shift(set, &cfg.cluster)?;
    let estimate = map_estimate(&clusters)?;
    diag.n_clusters = clusters.len();
    diag.ms_cluster = elapsed_ms(t);

    diag.ms_total = elapsed_ms(start);
    Ok((estimate, diag))
}
