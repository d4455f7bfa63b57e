#![allow(dead_code)]

use featloc::geometry::project;
use featloc::vo::{epipolar_residual, essential_from_motion, Match2D2D};
use featloc::{CameraIntrinsics, Pixel, Pose, Twist};
use nalgebra::{Matrix3, Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn vga() -> CameraIntrinsics {
    CameraIntrinsics::new(300.0, 300.0, 320.0, 240.0, 640, 480).unwrap()
}

/// Two cameras viewing a random point cloud; `relative` maps
/// first-camera to second-camera coordinates.
pub struct Rig {
    pub k: CameraIntrinsics,
    pub relative: Pose,
    pub matches: Vec<Match2D2D>,
    /// Indices of matches generated from a true scene point.
    pub inliers: Vec<usize>,
}

impl Rig {
    pub fn essential(&self) -> Matrix3<f64> {
        essential_from_motion(self.relative.rotation(), self.relative.translation())
    }

    pub fn t_unit(&self) -> Vector3<f64> {
        self.relative.translation().normalize()
    }
}

pub fn random_motion(rng: &mut ChaCha8Rng) -> Pose {
    let axis = Vector3::new(
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
        rng.random::<f64>() - 0.5,
    )
    .normalize();
    let angle = rng.random_range(0.02..0.2);
    let t = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-0.3..0.3),
        rng.random_range(-1.0..1.0),
    );
    Pose::exp(&Twist::new(t.normalize() * rng.random_range(0.2..0.6), axis * angle))
}

/// Exact matches of points seen by both cameras, then a share of
/// outliers whose second pixel is redrawn uniformly until it is clearly
/// off the epipolar line.
pub fn rig_with(relative: Pose, inliers: usize, outlier_fraction: f64, threshold: f64, seed: u64) -> Rig {
    let k = vga();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let first = Pose::identity();
    let mut matches = Vec::new();
    while matches.len() < inliers {
        let q = Point3::new(
            rng.random_range(-4.0..4.0),
            rng.random_range(-3.0..3.0),
            rng.random_range(3.0..10.0),
        );
        if let (Some(a), Some(b)) = (project(&q, &k, &first), project(&q, &k, &relative)) {
            matches.push(Match2D2D { p1: a, p2: b });
        }
    }
    let e = essential_from_motion(relative.rotation(), relative.translation());
    let outliers = (inliers as f64 * outlier_fraction / (1.0 - outlier_fraction)).round() as usize;
    let inlier_idx: Vec<usize> = (0..inliers).collect();
    for _ in 0..outliers {
        let p1 = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
        let p2 = loop {
            let p = Pixel::new(rng.random_range(0.0..640.0), rng.random_range(0.0..480.0));
            let r = epipolar_residual(&e, &k.normalize(p1.u, p1.v), &k.normalize(p.u, p.v));
            if r > 10.0 * threshold {
                break p;
            }
        };
        matches.push(Match2D2D { p1, p2 });
    }
    Rig {
        k,
        relative,
        matches,
        inliers: inlier_idx,
    }
}

pub fn rotation_error(a: &Matrix3<f64>, b: &Matrix3<f64>) -> f64 {
    featloc::geometry::rotation_angle(&(a.transpose() * b))
}
