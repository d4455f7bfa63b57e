//! Rigid poses, the pinhole camera, and two-view triangulation.
//!
//! Camera frames are x-right, y-down, z-forward. A [`Pose`] handed to
//! [`project`] or [`backproject`] maps world coordinates into the camera
//! frame (`x_cam = R * x_world + t`). Trajectory files use the opposite
//! (camera-to-world) convention and are inverted on load.

use nalgebra::{Matrix3, Matrix4, Point3, UnitQuaternion, Vector3, Vector4};

use crate::error::{Error, Result};

const ORTHONORMAL_TOL: f64 = 1e-9;
const SMALL_ANGLE: f64 = 1e-6;
const TRIANGULATION_RANK_TOL: f64 = 1e-10;

/// Rigid transform in SE(3), stored as a rotation matrix and a translation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pose {
    rotation: Matrix3<f64>,
    translation: Vector3<f64>,
}

/// Tangent-space increment: translation in meters and an axis-angle rotation.
///
/// [`Pose::exp`] maps the rotational part through the SO(3) exponential and
/// uses the translational part as the translation directly, so the norm of
/// `translational` is the metric length of the motion.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Twist {
    pub translational: Vector3<f64>,
    pub rotational: Vector3<f64>,
}

impl Twist {
    pub fn new(translational: Vector3<f64>, rotational: Vector3<f64>) -> Self {
        Self {
            translational,
            rotational,
        }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Coordinates ordered translation first, then rotation.
    pub fn to_array(&self) -> [f64; 6] {
        let t = &self.translational;
        let r = &self.rotational;
        [t.x, t.y, t.z, r.x, r.y, r.z]
    }

    pub fn from_array(a: [f64; 6]) -> Self {
        Self {
            translational: Vector3::new(a[0], a[1], a[2]),
            rotational: Vector3::new(a[3], a[4], a[5]),
        }
    }
}

impl std::ops::Add for Twist {
    type Output = Twist;

    fn add(self, rhs: Twist) -> Twist {
        Twist {
            translational: self.translational + rhs.translational,
            rotational: self.rotational + rhs.rotational,
        }
    }
}

impl Pose {
    pub fn identity() -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation: Vector3::zeros(),
        }
    }

    /// Builds a pose, rejecting rotations that are not proper orthonormal.
    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Result<Self> {
        let residual = (rotation.transpose() * rotation - Matrix3::identity()).abs().max();
        if !(residual < ORTHONORMAL_TOL) || rotation.determinant() <= 0.0 {
            return Err(Error::invalid(format!(
                "rotation is not orthonormal with det +1 (residual {residual:e})"
            )));
        }
        if !translation.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("translation must be finite"));
        }
        Ok(Self { rotation, translation })
    }

    /// Rotation is re-orthonormalised through SVD.
    pub fn from_matrix_projected(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: nearest_rotation(&rotation),
            translation,
        }
    }

    pub fn from_quaternion(q: UnitQuaternion<f64>, translation: Vector3<f64>) -> Self {
        Self {
            rotation: *q.to_rotation_matrix().matrix(),
            translation,
        }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self {
            rotation: Matrix3::identity(),
            translation,
        }
    }

    pub fn rotation(&self) -> &Matrix3<f64> {
        &self.rotation
    }

    pub fn translation(&self) -> &Vector3<f64> {
        &self.translation
    }

    pub fn quaternion(&self) -> UnitQuaternion<f64> {
        UnitQuaternion::from_matrix(&self.rotation)
    }

    /// `self ∘ other`: applies `other` first, then `self`.
    pub fn compose(&self, other: &Pose) -> Pose {
        Pose {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> Pose {
        let rt = self.rotation.transpose();
        Pose {
            rotation: rt,
            translation: -(rt * self.translation),
        }
    }

    pub fn transform_point(&self, p: &Point3<f64>) -> Point3<f64> {
        Point3::from(self.rotation * p.coords + self.translation)
    }

    pub fn transform_vector(&self, v: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * v
    }

    /// Position of the camera center in world coordinates, for a world-to-camera pose.
    pub fn camera_center(&self) -> Point3<f64> {
        Point3::from(-(self.rotation.transpose() * self.translation))
    }

    pub fn exp(twist: &Twist) -> Pose {
        Pose {
            rotation: so3_exp(&twist.rotational),
            translation: twist.translational,
        }
    }

    pub fn log(&self) -> Twist {
        Twist {
            translational: self.translation,
            rotational: so3_log(&self.rotation),
        }
    }

    /// Geodesic angle between the two rotations, in radians.
    pub fn rotation_angle_to(&self, other: &Pose) -> f64 {
        rotation_angle(&(self.rotation * other.rotation.transpose()))
    }

    /// Parses a row-major 3×4 camera-to-world matrix into a world-to-camera pose.
    pub fn from_kitti_row(row: &[f64; 12]) -> Result<Pose> {
        let r = Matrix3::new(row[0], row[1], row[2], row[4], row[5], row[6], row[8], row[9], row[10]);
        let t = Vector3::new(row[3], row[7], row[11]);
        Ok(Pose::new(r, t)?.inverse())
    }

    /// Row-major 3×4 camera-to-world matrix of this world-to-camera pose.
    pub fn to_kitti_row(&self) -> [f64; 12] {
        let cw = self.inverse();
        let r = cw.rotation;
        let t = cw.translation;
        [
            r[(0, 0)],
            r[(0, 1)],
            r[(0, 2)],
            t.x,
            r[(1, 0)],
            r[(1, 1)],
            r[(1, 2)],
            t.y,
            r[(2, 0)],
            r[(2, 1)],
            r[(2, 2)],
            t.z,
        ]
    }

    pub fn orthonormality_residual(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity())
            .abs()
            .max()
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

/// Rodrigues formula, with a series expansion for tiny angles.
pub fn so3_exp(w: &Vector3<f64>) -> Matrix3<f64> {
    let theta_sq = w.norm_squared();
    let theta = theta_sq.sqrt();
    let k = skew(w);
    let (a, b) = if theta < SMALL_ANGLE {
        (1.0 - theta_sq / 6.0, 0.5 - theta_sq / 24.0)
    } else {
        (theta.sin() / theta, (1.0 - theta.cos()) / theta_sq)
    };
    Matrix3::identity() + k * a + k * k * b
}

pub fn so3_log(r: &Matrix3<f64>) -> Vector3<f64> {
    let vee = Vector3::new(r[(2, 1)] - r[(1, 2)], r[(0, 2)] - r[(2, 0)], r[(1, 0)] - r[(0, 1)]);
    let sin_theta = 0.5 * vee.norm();
    let cos_theta = 0.5 * (r.trace() - 1.0);
    let theta = sin_theta.atan2(cos_theta);

    if theta < SMALL_ANGLE {
        return vee * (0.5 * (1.0 + theta * theta / 6.0));
    }
    if theta < std::f64::consts::PI - 1e-3 {
        return vee * (theta / (2.0 * sin_theta));
    }

    // Near pi the antisymmetric part vanishes; recover the axis from the
    // symmetric part (1 - cos) k k^T instead.
    let sym = (r + r.transpose()) * 0.5 - Matrix3::identity() * cos_theta;
    let mut best = 0;
    for i in 1..3 {
        if sym[(i, i)] > sym[(best, best)] {
            best = i;
        }
    }
    let mut axis: Vector3<f64> = sym.column(best).into();
    axis /= axis.norm();
    if axis.dot(&vee) < 0.0 {
        axis = -axis;
    }
    axis * theta
}

pub fn rotation_angle(r: &Matrix3<f64>) -> f64 {
    so3_log(r).norm()
}

/// Closest rotation matrix in the Frobenius sense.
pub fn nearest_rotation(m: &Matrix3<f64>) -> Matrix3<f64> {
    let svd = m.svd(true, true);
    let u = svd.u.expect("u requested");
    let v_t = svd.v_t.expect("v_t requested");
    let mut r = u * v_t;
    if r.determinant() < 0.0 {
        let mut u2 = u;
        u2.column_mut(2).neg_mut();
        r = u2 * v_t;
    }
    r
}

/// Pinhole intrinsics plus image size.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CameraIntrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: u32,
    pub height: u32,
}

impl CameraIntrinsics {
    pub fn new(fx: f64, fy: f64, cx: f64, cy: f64, width: u32, height: u32) -> Result<Self> {
        let ok = fx > 0.0
            && fy > 0.0
            && fx.is_finite()
            && fy.is_finite()
            && (0.0..width as f64).contains(&cx)
            && (0.0..height as f64).contains(&cy);
        if !ok {
            return Err(Error::invalid(format!(
                "bad intrinsics fx={fx} fy={fy} cx={cx} cy={cy} size={width}x{height}"
            )));
        }
        Ok(Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        })
    }

    pub fn matrix(&self) -> Matrix3<f64> {
        Matrix3::new(self.fx, 0.0, self.cx, 0.0, self.fy, self.cy, 0.0, 0.0, 1.0)
    }

    /// Pixel to normalized image coordinates (the `K^-1 p` ray with z = 1).
    pub fn normalize(&self, u: f64, v: f64) -> Vector3<f64> {
        Vector3::new((u - self.cx) / self.fx, (v - self.cy) / self.fy, 1.0)
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        u >= 0.0 && v >= 0.0 && u < self.width as f64 && v < self.height as f64
    }

    pub fn pixel_count(&self) -> usize {
        self.width as usize * self.height as usize
    }
}

/// Image location, with the camera-frame depth when produced by projection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Pixel {
    pub u: f64,
    pub v: f64,
    pub depth: f64,
}

impl Pixel {
    pub fn new(u: f64, v: f64) -> Self {
        Self { u, v, depth: 0.0 }
    }
}

/// Projects a world point; `None` when behind the camera or outside the image.
pub fn project(q: &Point3<f64>, k: &CameraIntrinsics, pose: &Pose) -> Option<Pixel> {
    let c = pose.transform_point(q);
    project_camera_point(&c, k)
}

/// Projects a point already expressed in the camera frame.
pub fn project_camera_point(c: &Point3<f64>, k: &CameraIntrinsics) -> Option<Pixel> {
    if !(c.z > 0.0) {
        return None;
    }
    let u = k.fx * c.x / c.z + k.cx;
    let v = k.fy * c.y / c.z + k.cy;
    if !k.contains(u, v) {
        return None;
    }
    Some(Pixel { u, v, depth: c.z })
}

/// World point seen at pixel `p` with camera-frame depth `depth`.
pub fn backproject(p: &Pixel, depth: f64, k: &CameraIntrinsics, pose: &Pose) -> Result<Point3<f64>> {
    if !(depth > 0.0) || !depth.is_finite() {
        return Err(Error::invalid(format!("depth must be positive, got {depth}")));
    }
    let cam = Point3::from(k.normalize(p.u, p.v) * depth);
    Ok(pose.inverse().transform_point(&cam))
}

/// Linear (DLT) triangulation of one point seen in two views.
///
/// Rows are built in normalized coordinates and scaled to unit length. The
/// configuration is degenerate when the design matrix has a null space of
/// dimension two or more (`sigma_3 / sigma_1 < 1e-10`) or when the solution
/// lies at infinity.
pub fn triangulate(p1: &Pixel, p2: &Pixel, k: &CameraIntrinsics, pose1: &Pose, pose2: &Pose) -> Result<Point3<f64>> {
    let x1 = k.normalize(p1.u, p1.v);
    let x2 = k.normalize(p2.u, p2.v);
    triangulate_normalized(&x1, &x2, pose1, pose2)
}

/// Same as [`triangulate`] but takes normalized image coordinates directly.
pub fn triangulate_normalized(x1: &Vector3<f64>, x2: &Vector3<f64>, pose1: &Pose, pose2: &Pose) -> Result<Point3<f64>> {
    let mut a = Matrix4::zeros();
    let rows = [
        dlt_row(pose1, x1.x, 0),
        dlt_row(pose1, x1.y, 1),
        dlt_row(pose2, x2.x, 0),
        dlt_row(pose2, x2.y, 1),
    ];
    for (i, row) in rows.iter().enumerate() {
        let n = row.norm();
        if n == 0.0 {
            return Err(Error::DegenerateGeometry("zero DLT row".into()));
        }
        a.set_row(i, &(row / n).transpose());
    }

    let svd = a.svd(false, true);
    let v_t = svd.v_t.expect("v_t requested");
    let s = svd.singular_values;
    let mut order = [0usize, 1, 2, 3];
    order.sort_by(|&i, &j| s[j].total_cmp(&s[i]));
    if s[order[2]] < TRIANGULATION_RANK_TOL * s[order[0]] {
        return Err(Error::DegenerateGeometry("rays are parallel (zero baseline)".into()));
    }
    let h: Vector4<f64> = v_t.row(order[3]).transpose();
    if h.w.abs() < f64::EPSILON * h.xyz().norm() {
        return Err(Error::DegenerateGeometry("point at infinity".into()));
    }
    Ok(Point3::new(h.x / h.w, h.y / h.w, h.z / h.w))
}

fn dlt_row(pose: &Pose, coord: f64, axis: usize) -> Vector4<f64> {
    let r = pose.rotation();
    let t = pose.translation();
    let row = |i: usize| Vector4::new(r[(i, 0)], r[(i, 1)], r[(i, 2)], t[i]);
    row(2) * coord - row(axis)
}
