//! Monocular frame-to-frame motion from 2D-2D matches.
//!
//! Conventions: `x1`, `x2` are normalized image coordinates in the previous
//! and current frame, the relative motion maps previous-camera coordinates
//! to current-camera coordinates (`X2 = R * X1 + t`), and the essential
//! matrix satisfies `x2ᵀ E x1 = 0` with `E = [t]× R`.

use nalgebra::{DMatrix, Matrix3, Vector3, SVD};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::geometry::{nearest_rotation, skew, triangulate_normalized, CameraIntrinsics, Pixel, Pose, Twist};

const MIN_MATCHES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Match2D2D {
    pub p1: Pixel,
    pub p2: Pixel,
}

impl Match2D2D {
    pub fn new(u1: f64, v1: f64, u2: f64, v2: f64) -> Self {
        Self {
            p1: Pixel::new(u1, v1),
            p2: Pixel::new(u2, v2),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VoConfig {
    pub ransac_iters: usize,
    /// Symmetric epipolar distance threshold in normalized coordinates.
    pub inlier_threshold: f64,
    pub min_inliers: usize,
    /// RANSAC stops once the best consensus exceeds this inlier fraction and
    /// enough samples were drawn to have hit a clean one at 99% confidence.
    pub early_exit_fraction: f64,
    /// Ratio `sigma_8 / sigma_1` of the inlier design matrix below which the
    /// translation direction is considered unobservable.
    pub conditioning_ratio: f64,
    /// Median rotation-compensated parallax (radians) below which the
    /// motion is reported as rotation only.
    pub min_parallax: f64,
    pub expected_speed: f64,
    pub dt: f64,
    pub seed: u64,
}

impl Default for VoConfig {
    fn default() -> Self {
        Self {
            ransac_iters: 500,
            inlier_threshold: 1e-3,
            min_inliers: 15,
            early_exit_fraction: 0.8,
            conditioning_ratio: 1e-6,
            min_parallax: 1e-3,
            expected_speed: 2.0,
            dt: 0.1,
            seed: 0,
        }
    }
}

impl VoConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.inlier_threshold > 0.0) || !(self.dt > 0.0) || self.ransac_iters == 0 {
            return Err(Error::invalid("VO thresholds, dt and iteration count must be positive"));
        }
        if !(self.expected_speed >= 0.0) {
            return Err(Error::invalid("expected speed must be non-negative"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EssentialResult {
    /// Frobenius norm sqrt(2), singular values (1, 1, 0).
    pub essential: Matrix3<f64>,
    pub inliers: Vec<usize>,
    pub rotation: Matrix3<f64>,
    pub t_unit: Vector3<f64>,
    /// True when translation is unobservable (no parallax); `t_unit` is then
    /// meaningless and `rotation` comes from a rotation-only fit.
    pub rotation_only: bool,
}

/// Symmetric epipolar distance (root of the summed squared point-to-line
/// distances in both images).
pub fn epipolar_residual(e: &Matrix3<f64>, x1: &Vector3<f64>, x2: &Vector3<f64>) -> f64 {
    let l2 = e * x1;
    let l1 = e.transpose() * x2;
    let r = x2.dot(&l2);
    let a = l2.x * l2.x + l2.y * l2.y;
    let b = l1.x * l1.x + l1.y * l1.y;
    if a == 0.0 || b == 0.0 {
        return if r == 0.0 { 0.0 } else { f64::INFINITY };
    }
    (r * r * (1.0 / a + 1.0 / b)).sqrt()
}

/// Builds `E = [t]× R`.
pub fn essential_from_motion(rotation: &Matrix3<f64>, t: &Vector3<f64>) -> Matrix3<f64> {
    skew(t) * rotation
}

fn hartley(points: &[Vector3<f64>]) -> Matrix3<f64> {
    let n = points.len() as f64;
    let (sx, sy) = points.iter().fold((0.0, 0.0), |(a, b), p| (a + p.x, b + p.y));
    let (mx, my) = (sx / n, sy / n);
    let mean_dist = points.iter().map(|p| (p.x - mx).hypot(p.y - my)).sum::<f64>() / n;
    let s = if mean_dist > 0.0 {
        std::f64::consts::SQRT_2 / mean_dist
    } else {
        1.0
    };
    Matrix3::new(s, 0.0, -s * mx, 0.0, s, -s * my, 0.0, 0.0, 1.0)
}

/// Projects onto the essential manifold and scales to Frobenius sqrt(2).
pub fn project_to_essential(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let svd = m.svd(true, true);
    let (u, v_t) = (svd.u?, svd.v_t?);
    if !(svd.singular_values.max() > 0.0) {
        return None;
    }
    let e = u * Matrix3::from_diagonal(&Vector3::new(1.0, 1.0, 0.0)) * v_t;
    Some(e)
}

fn rank_two(m: &Matrix3<f64>) -> Option<Matrix3<f64>> {
    let mut svd = m.svd(true, true);
    let i = svd.singular_values.imin();
    svd.singular_values[i] = 0.0;
    svd.recompose().ok()
}

/// Normalized 8-point fit over the given normalized correspondences.
/// Returns the projected essential matrix and the design-matrix singular
/// values in descending order.
fn eight_point(x1: &[Vector3<f64>], x2: &[Vector3<f64>]) -> Option<(Matrix3<f64>, Vec<f64>)> {
    let t1 = hartley(x1);
    let t2 = hartley(x2);
    let rows = x1.len().max(9);
    let mut a = DMatrix::<f64>::zeros(rows, 9);
    for (i, (p, q)) in x1.iter().zip(x2).enumerate() {
        let p = t1 * p;
        let q = t2 * q;
        for r in 0..3 {
            for c in 0..3 {
                a[(i, 3 * r + c)] = q[r] * p[c];
            }
        }
    }
    let svd = SVD::new(a, false, true);
    let v_t = svd.v_t?;
    let s = svd.singular_values;
    let mut order: Vec<usize> = (0..s.len()).collect();
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    let null = v_t.row(order[8]);
    let en = Matrix3::from_fn(|r, c| null[3 * r + c]);
    let e = t2.transpose() * rank_two(&en)? * t1;
    let e = project_to_essential(&e)?;
    Some((e, order.iter().map(|&i| s[i]).collect()))
}

fn to_normalized(matches: &[Match2D2D], k: &CameraIntrinsics) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    matches
        .iter()
        .map(|m| (k.normalize(m.p1.u, m.p1.v), k.normalize(m.p2.u, m.p2.v)))
        .unzip()
}

/// Inliers of `e` and its truncated quadratic cost: squared residual for
/// inliers, squared threshold for everything else.
fn consensus(e: &Matrix3<f64>, x1: &[Vector3<f64>], x2: &[Vector3<f64>], threshold: f64) -> (Vec<usize>, f64) {
    let th2 = threshold * threshold;
    let mut inliers = Vec::new();
    let mut cost = 0.0;
    for i in 0..x1.len() {
        let r = epipolar_residual(e, &x1[i], &x2[i]);
        if r < threshold {
            inliers.push(i);
            cost += r * r;
        } else {
            cost += th2;
        }
    }
    (inliers, cost)
}

fn select<T: Copy>(v: &[T], idx: &[usize]) -> Vec<T> {
    idx.iter().map(|&i| v[i]).collect()
}

/// Best rotation aligning the bearing vectors of `x1` onto those of `x2`.
pub fn fit_rotation(x1: &[Vector3<f64>], x2: &[Vector3<f64>]) -> Matrix3<f64> {
    let mut h = Matrix3::zeros();
    for (a, b) in x1.iter().zip(x2) {
        h += b.normalize() * a.normalize().transpose();
    }
    nearest_rotation(&h)
}

fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return 0.0;
    }
    v.sort_by(f64::total_cmp);
    v[v.len() / 2]
}

/// Minimal samples needed to draw one outlier-free sample with 99%
/// probability at the given inlier fraction.
fn samples_for_confidence(inlier_fraction: f64) -> usize {
    let clean = inlier_fraction.powi(MIN_MATCHES as i32);
    if clean >= 1.0 {
        return 1;
    }
    ((0.01f64).ln() / (1.0 - clean).ln()).ceil() as usize
}

/// RANSAC over 8-point minimal samples scored by truncated quadratic cost,
/// refit on the consensus set, then decomposition and cheirality selection.
pub fn estimate_essential(matches: &[Match2D2D], k: &CameraIntrinsics, cfg: &VoConfig) -> Result<EssentialResult> {
    cfg.validate()?;
    if matches.len() < MIN_MATCHES {
        return Err(Error::InsufficientData {
            needed: MIN_MATCHES,
            got: matches.len(),
        });
    }
    let (x1, x2) = to_normalized(matches, k);
    let n = x1.len();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Vec<usize> = Vec::new();
    let mut best_cost = f64::INFINITY;
    for iter in 1..=cfg.ransac_iters {
        let idx = sample(&mut rng, n, MIN_MATCHES).into_vec();
        let Some((e, _)) = eight_point(&select(&x1, &idx), &select(&x2, &idx)) else {
            continue;
        };
        let (inliers, cost) = consensus(&e, &x1, &x2, cfg.inlier_threshold);
        if cost < best_cost {
            best = inliers;
            best_cost = cost;
        }
        let fraction = best.len() as f64 / n as f64;
        if fraction > cfg.early_exit_fraction && iter >= samples_for_confidence(fraction) {
            break;
        }
    }
    if best.len() < cfg.min_inliers.max(MIN_MATCHES) {
        return Err(Error::EstimationFailed(format!(
            "consensus of {} below minimum {}",
            best.len(),
            cfg.min_inliers.max(MIN_MATCHES)
        )));
    }

    // Refit on the consensus set, then once more on the refit's consensus.
    let (mut e, mut spectrum) = eight_point(&select(&x1, &best), &select(&x2, &best))
        .ok_or_else(|| Error::EstimationFailed("refit failed".into()))?;
    let (refit_inliers, refit_cost) = consensus(&e, &x1, &x2, cfg.inlier_threshold);
    if refit_inliers != best && refit_inliers.len() >= MIN_MATCHES {
        if let Some(fit) = eight_point(&select(&x1, &refit_inliers), &select(&x2, &refit_inliers)) {
            if consensus(&fit.0, &x1, &x2, cfg.inlier_threshold).1 <= refit_cost {
                (e, spectrum) = fit;
            }
        }
    }
    let best = consensus(&e, &x1, &x2, cfg.inlier_threshold).0;
    let e = e * (std::f64::consts::SQRT_2 / e.norm());
    let in1 = select(&x1, &best);
    let in2 = select(&x2, &best);

    let ill_conditioned = spectrum[7] < cfg.conditioning_ratio * spectrum[0];
    let chosen = if ill_conditioned {
        None
    } else {
        let candidates = decompose_essential(&e)?;
        match select_pose_cheirality_normalized(&candidates, &in1, &in2) {
            Ok(c) => Some(c),
            Err(Error::AmbiguousCheirality(_)) => None,
            Err(other) => return Err(other),
        }
    };

    let (rotation, t_unit, rotation_only) = match chosen {
        Some((r, t)) => {
            let parallax = median(
                in1.iter()
                    .zip(&in2)
                    .map(|(a, b)| (r * a.normalize()).angle(&b.normalize()))
                    .collect(),
            );
            if parallax < cfg.min_parallax {
                (fit_rotation(&in1, &in2), Vector3::zeros(), true)
            } else {
                (r, t, false)
            }
        }
        None => (fit_rotation(&in1, &in2), Vector3::zeros(), true),
    };

    Ok(EssentialResult {
        essential: e,
        inliers: best,
        rotation,
        t_unit,
        rotation_only,
    })
}

/// The four `(R, t)` factorizations of an essential matrix. Each rotation
/// is proper and `t` is the unit left null vector up to sign.
pub fn decompose_essential(e: &Matrix3<f64>) -> Result<[(Matrix3<f64>, Vector3<f64>); 4]> {
    let svd = e.svd(true, true);
    let s = svd.singular_values;
    let mut sorted = [s[0], s[1], s[2]];
    sorted.sort_by(|a, b| b.total_cmp(a));
    if !(sorted[0] > 0.0) || sorted[2] > 1e-6 * sorted[0] {
        return Err(Error::invalid(format!(
            "matrix is not rank 2 (singular values {sorted:?})"
        )));
    }
    // nalgebra sorts singular values in descending order.
    let mut u = svd.u.expect("u requested");
    let mut v_t = svd.v_t.expect("v_t requested");
    if u.determinant() < 0.0 {
        u = -u;
    }
    if v_t.determinant() < 0.0 {
        v_t = -v_t;
    }
    let w = Matrix3::new(0.0, -1.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0);
    let ra = u * w * v_t;
    let rb = u * w.transpose() * v_t;
    let t: Vector3<f64> = u.column(2).into();
    let t = t.normalize();
    Ok([(ra, t), (ra, -t), (rb, t), (rb, -t)])
}

/// Picks the candidate with the most triangulated points in front of both
/// cameras.
pub fn select_pose_cheirality(
    candidates: &[(Matrix3<f64>, Vector3<f64>)],
    inliers: &[Match2D2D],
    k: &CameraIntrinsics,
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    let (x1, x2) = to_normalized(inliers, k);
    select_pose_cheirality_normalized(candidates, &x1, &x2)
}

pub fn cheirality_votes(r: &Matrix3<f64>, t: &Vector3<f64>, x1: &[Vector3<f64>], x2: &[Vector3<f64>]) -> usize {
    let first = Pose::identity();
    let second = Pose::from_matrix_projected(*r, *t);
    x1.iter()
        .zip(x2)
        .filter(|(a, b)| match triangulate_normalized(a, b, &first, &second) {
            Ok(p) => p.z > 0.0 && second.transform_point(&p).z > 0.0,
            Err(_) => false,
        })
        .count()
}

fn select_pose_cheirality_normalized(
    candidates: &[(Matrix3<f64>, Vector3<f64>)],
    x1: &[Vector3<f64>],
    x2: &[Vector3<f64>],
) -> Result<(Matrix3<f64>, Vector3<f64>)> {
    if x1.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let votes: Vec<usize> = candidates.iter().map(|(r, t)| cheirality_votes(r, t, x1, x2)).collect();
    let best = (0..votes.len())
        .max_by_key(|&i| (votes[i], std::cmp::Reverse(i)))
        .ok_or_else(|| Error::invalid("no candidates"))?;
    let tied = votes.iter().filter(|&&v| v == votes[best]).count() > 1;
    if votes[best] == 0 || tied {
        return Err(Error::AmbiguousCheirality(format!("votes {votes:?}")));
    }
    Ok(candidates[best])
}

/// One odometry increment.
#[derive(Debug, Clone, PartialEq)]
pub struct VoStep {
    /// Relative motion mapping previous-camera to current-camera coordinates.
    pub twist: Twist,
    pub inliers: usize,
    /// Set when the translation direction could not be observed; the twist
    /// then carries rotation only.
    pub low_confidence: bool,
}

/// Estimates the relative motion and scales the unit translation to
/// `speed * dt`, where `speed` is `previous_speed` or, when absent, the
/// configured expected speed.
pub fn vo_step(
    matches: &[Match2D2D],
    k: &CameraIntrinsics,
    cfg: &VoConfig,
    previous_speed: Option<f64>,
) -> Result<VoStep> {
    let est = estimate_essential(matches, k, cfg)?;
    let speed = previous_speed.unwrap_or(cfg.expected_speed);
    let rotation = crate::geometry::so3_log(&est.rotation);
    let translation = if est.rotation_only {
        Vector3::zeros()
    } else {
        est.t_unit * (speed * cfg.dt)
    };
    Ok(VoStep {
        twist: Twist::new(translation, rotation),
        inliers: est.inliers.len(),
        low_confidence: est.rotation_only,
    })
}

/// Constant-velocity scale state: an exponential moving average of the
/// speeds implied by accepted localisation displacements.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpeedModel {
    pub speed: f64,
    pub alpha: f64,
    /// Displacements implying a speed outside `[lo, hi] * speed` are rejected.
    pub accept_band: (f64, f64),
}

impl SpeedModel {
    pub fn new(initial_speed: f64) -> Self {
        Self {
            speed: initial_speed,
            alpha: 0.5,
            accept_band: (0.5, 1.5),
        }
    }

    /// Folds in a displacement observed over `dt`; returns whether it was accepted.
    pub fn update(&mut self, displacement: f64, dt: f64) -> bool {
        let observed = displacement / dt;
        let (lo, hi) = self.accept_band;
        let ok = observed.is_finite() && observed >= lo * self.speed && observed <= hi * self.speed;
        if ok {
            self.speed = self.alpha * observed + (1.0 - self.alpha) * self.speed;
        }
        ok
    }
}
