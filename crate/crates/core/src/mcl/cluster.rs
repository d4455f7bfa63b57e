//! Weighted mean-shift over particle poses.
//!
//! Poses are compared by camera position and orientation:
//! `d² = |Δc|² + λ² θ²` with `θ` the geodesic rotation angle. The kernel is
//! `exp(-d² / 2h²)`. Positions are averaged arithmetically and rotations
//! by the principal eigenvector of the weighted quaternion scatter matrix.

use nalgebra::{Matrix4, Point3, UnitQuaternion, Vector3, Vector4};

use super::ParticleSet;
use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClusterConfig {
    pub bandwidth: f64,
    /// Meters per radian in the pose distance.
    pub rotation_weight: f64,
    pub max_iters: usize,
    pub convergence_tol: f64,
    /// Mean-shift starts from at most this many particles, drawn by
    /// weight-stratified selection.
    pub max_seeds: usize,
}

impl Default for ClusterConfig {
    fn default() -> Self {
        Self {
            bandwidth: 0.5,
            rotation_weight: 1.0,
            max_iters: 50,
            convergence_tol: 1e-4,
            max_seeds: 64,
        }
    }
}

impl ClusterConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.bandwidth > 0.0) || !(self.rotation_weight >= 0.0) || self.max_seeds == 0 {
            return Err(Error::invalid(
                "bandwidth must be positive, rotation weight non-negative",
            ));
        }
        Ok(())
    }
}

/// A pose as camera position plus camera-to-world orientation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PosePoint {
    pub position: Point3<f64>,
    pub orientation: UnitQuaternion<f64>,
}

impl PosePoint {
    pub fn from_pose(pose: &Pose) -> Self {
        Self {
            position: pose.camera_center(),
            orientation: pose.inverse().quaternion(),
        }
    }

    pub fn to_pose(&self) -> Pose {
        let r = *self.orientation.to_rotation_matrix().matrix();
        Pose::from_matrix_projected(r, self.position.coords).inverse()
    }

    pub fn distance_sq(&self, other: &PosePoint, rotation_weight: f64) -> f64 {
        let dp = (self.position - other.position).norm_squared();
        let dot = self.orientation.coords.dot(&other.orientation.coords).abs().min(1.0);
        let theta = 2.0 * dot.acos();
        dp + rotation_weight * rotation_weight * theta * theta
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub centroid: Pose,
    pub mass: f64,
}

fn kernel(d2: f64, h: f64) -> f64 {
    (-d2 / (2.0 * h * h)).exp()
}

/// Kernel density of the weighted samples at `x`.
pub fn kernel_density(x: &PosePoint, samples: &[PosePoint], weights: &[f64], cfg: &ClusterConfig) -> f64 {
    samples
        .iter()
        .zip(weights)
        .map(|(s, w)| kernel(x.distance_sq(s, cfg.rotation_weight), cfg.bandwidth) * w)
        .sum()
}

/// One weighted mean-shift update from `x`; `None` if no sample carries
/// kernel mass there.
pub fn shift_once(x: &PosePoint, samples: &[PosePoint], weights: &[f64], cfg: &ClusterConfig) -> Option<PosePoint> {
    let reference = x.orientation.coords;
    let mut total = 0.0;
    let mut pos = Vector3::zeros();
    let mut scatter = Matrix4::zeros();
    for (s, &w) in samples.iter().zip(weights) {
        let k = kernel(x.distance_sq(s, cfg.rotation_weight), cfg.bandwidth) * w;
        if k == 0.0 {
            continue;
        }
        total += k;
        pos += s.position.coords * k;
        let mut q: Vector4<f64> = s.orientation.coords;
        if q.dot(&reference) < 0.0 {
            q = -q;
        }
        scatter += q * q.transpose() * k;
    }
    if !(total > 0.0) {
        return None;
    }
    let eig = scatter.symmetric_eigen();
    let best = eig.eigenvalues.imax();
    let mut q: Vector4<f64> = eig.eigenvectors.column(best).into();
    if q.dot(&reference) < 0.0 {
        q = -q;
    }
    Some(PosePoint {
        position: Point3::from(pos / total),
        orientation: UnitQuaternion::from_quaternion(nalgebra::Quaternion::from(q)),
    })
}

/// Start points for mean-shift: every particle when there are few, else
/// one per equal-mass stratum of the cumulative weight (midpoint rule), so
/// each mode gets starts in proportion to its mass.
fn seed_indices(weights: &[f64], max_seeds: usize) -> Vec<usize> {
    let n = weights.len();
    if n <= max_seeds {
        return (0..n).collect();
    }
    let total: f64 = weights.iter().sum();
    let mut out = Vec::with_capacity(max_seeds);
    let mut cumulative = 0.0;
    let mut i = 0;
    for j in 0..max_seeds {
        let target = (j as f64 + 0.5) / max_seeds as f64 * total;
        while i + 1 < n && cumulative + weights[i] <= target {
            cumulative += weights[i];
            i += 1;
        }
        if out.last() != Some(&i) {
            out.push(i);
        }
    }
    out
}

/// Runs weighted mean-shift from weight-stratified particles and merges modes
/// closer than half a bandwidth. Clusters are returned in discovery order.
pub fn mean_shift(set: &ParticleSet, cfg: &ClusterConfig) -> Result<Vec<Cluster>> {
    cfg.validate()?;
    if set.is_empty() {
        return Err(Error::invalid("cannot cluster an empty particle set"));
    }
    let samples: Vec<PosePoint> = set.iter().map(|p| PosePoint::from_pose(&p.pose)).collect();
    let weights: Vec<f64> = set.iter().map(|p| p.weight).collect();

    let order = seed_indices(&weights, cfg.max_seeds);

    let merge_sq = (cfg.bandwidth / 2.0).powi(2);
    let tol_sq = cfg.convergence_tol * cfg.convergence_tol;
    let mut modes: Vec<PosePoint> = Vec::new();
    for &seed in &order {
        let mut x = samples[seed];
        for _ in 0..cfg.max_iters {
            let Some(next) = shift_once(&x, &samples, &weights, cfg) else {
                break;
            };
            let moved = next.distance_sq(&x, cfg.rotation_weight);
            x = next;
            if moved < tol_sq {
                break;
            }
        }
        if !modes.iter().any(|m| m.distance_sq(&x, cfg.rotation_weight) < merge_sq) {
            modes.push(x);
        }
    }

    Ok(modes
        .iter()
        .map(|m| Cluster {
            centroid: m.to_pose(),
            mass: kernel_density(m, &samples, &weights, cfg),
        })
        .collect())
}

/// Centroid of the heaviest cluster; the first one found wins ties.
pub fn map_estimate(clusters: &[Cluster]) -> Result<Pose> {
    let mut best: Option<&Cluster> = None;
    for c in clusters {
        if best.is_none_or(|b| c.mass > b.mass) {
            best = Some(c);
        }
    }
    best.map(|c| c.centroid).ok_or_else(|| Error::invalid("no clusters"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mcl::Particle;

    #[test]
    fn single_pose_single_cluster() {
        let pose = Pose::exp(&crate::geometry::Twist::from_array([1.0, 2.0, 3.0, 0.1, 0.2, 0.3]));
        let set = ParticleSet::uniform(vec![pose; 20]);
        let clusters = mean_shift(&set, &ClusterConfig::default()).unwrap();
        assert_eq!(clusters.len(), 1);
        assert!((clusters[0].mass - 1.0).abs() < 1e-12);
        let c = PosePoint::from_pose(&clusters[0].centroid);
        assert!(c.distance_sq(&PosePoint::from_pose(&pose), 1.0) < 1e-20);
    }

    #[test]
    fn map_estimate_argmax_and_scale_invariance() {
        let a = Pose::from_translation(Vector3::new(1.0, 0.0, 0.0));
        let b = Pose::from_translation(Vector3::new(5.0, 0.0, 0.0));
        let clusters = vec![Cluster { centroid: a, mass: 0.3 }, Cluster { centroid: b, mass: 0.7 }];
        assert_eq!(map_estimate(&clusters).unwrap(), b);
        let scaled: Vec<_> = clusters
            .iter()
            .map(|c| Cluster {
                centroid: c.centroid,
                mass: c.mass * 17.0,
            })
            .collect();
        assert_eq!(map_estimate(&scaled).unwrap(), b);
        let tied = vec![Cluster { centroid: a, mass: 0.5 }, Cluster { centroid: b, mass: 0.5 }];
        assert_eq!(map_estimate(&tied).unwrap(), a);
        assert!(map_estimate(&[]).is_err());
    }

    #[test]
    fn empty_set_is_rejected() {
        let set = ParticleSet::from_particles(Vec::<Particle>::new());
        assert!(mean_shift(&set, &ClusterConfig::default()).is_err());
    }
}
