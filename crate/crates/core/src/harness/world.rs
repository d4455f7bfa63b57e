//! Procedural test world: a ground plane, bounding walls and boxes, with a
//! smooth descriptor field painted over every surface.

use nalgebra::{Matrix3, Point3, Vector3};

use crate::descriptor::{synth_descriptor_field, DescriptorField, DescriptorImage, FourierField, FrameGeometry};
use crate::error::{Error, Result};
use crate::featmap::DepthImage;
use crate::geometry::{CameraIntrinsics, Pose};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Surface {
    /// Infinite plane `{x : normal · x = offset}`.
    Plane { normal: Vector3<f64>, offset: f64 },
    /// Axis-aligned solid box.
    Cuboid { min: Point3<f64>, max: Point3<f64> },
}

impl Surface {
    /// Smallest positive ray parameter where `origin + s * dir` meets the surface.
    pub fn intersect(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        match *self {
            Surface::Plane { normal, offset } => {
                let denom = normal.dot(dir);
                if denom.abs() < 1e-15 {
                    return None;
                }
                let s = (offset - normal.dot(&origin.coords)) / denom;
                (s > 0.0).then_some(s)
            }
            Surface::Cuboid { min, max } => {
                let mut near = f64::NEG_INFINITY;
                let mut far = f64::INFINITY;
                for ax in 0..3 {
                    if dir[ax].abs() < 1e-15 {
                        if origin[ax] < min[ax] || origin[ax] > max[ax] {
                            return None;
                        }
                        continue;
                    }
                    let a = (min[ax] - origin[ax]) / dir[ax];
                    let b = (max[ax] - origin[ax]) / dir[ax];
                    near = near.max(a.min(b));
                    far = far.min(a.max(b));
                }
                if near > far || far <= 0.0 {
                    return None;
                }
                Some(if near > 0.0 { near } else { far })
            }
        }
    }
}

/// Everything needed to regenerate a world deterministically.
#[derive(Debug, Clone, PartialEq)]
pub struct WorldSpec {
    pub seed: u64,
    /// Horizontal extent of the room (walls sit on these bounds).
    pub bounds_min: [f64; 2],
    pub bounds_max: [f64; 2],
    pub ground_z: f64,
    pub walls: bool,
    pub boxes: Vec<(Point3<f64>, Point3<f64>)>,
    pub descriptor_dim: usize,
    pub field_terms: usize,
    pub field_scale: f64,
    pub field_min_frequency: f64,
    pub field_max_frequency: f64,
    /// Standard deviation of per-pixel descriptor noise.
    pub noise_sigma: f64,
    /// Standard deviation of the smooth appearance bias added at
    /// localisation time (0 disables it).
    pub nuisance_scale: f64,
    pub intrinsics: CameraIntrinsics,
    pub camera_height: f64,
    /// Downward tilt of the camera, radians.
    pub camera_pitch: f64,
}

impl WorldSpec {
    /// Desk-scale default: an 12.2 m × 8.2 m room with three boxes, surfaces
    /// placed on 0.2 m voxel mid-planes, 64×48 camera, 10-D descriptors.
    pub fn desk(seed: u64) -> Self {
        Self {
            seed,
            bounds_min: [-6.1, -4.1],
            bounds_max: [6.1, 4.1],
            ground_z: 0.1,
            walls: true,
            boxes: vec![
                (Point3::new(-0.5, 2.9, 0.1), Point3::new(0.5, 3.5, 1.3)),
                (Point3::new(-5.3, -3.5, 0.1), Point3::new(-4.7, -2.5, 2.1)),
                (Point3::new(4.5, 2.5, 0.1), Point3::new(5.3, 3.3, 0.9)),
            ],
            descriptor_dim: 10,
            field_terms: 12,
            field_scale: 0.5,
            field_min_frequency: 0.5,
            field_max_frequency: 2.5,
            noise_sigma: 0.05,
            nuisance_scale: 0.02,
            intrinsics: CameraIntrinsics::new(50.0, 50.0, 32.0, 24.0, 64, 48).expect("valid"),
            camera_height: 1.2,
            camera_pitch: 0.2,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.bounds_min[0] < self.bounds_max[0]) || !(self.bounds_min[1] < self.bounds_max[1]) {
            return Err(Error::invalid("degenerate world bounds"));
        }
        for (lo, hi) in &self.boxes {
            if !(lo.x < hi.x && lo.y < hi.y && lo.z < hi.z) {
                return Err(Error::invalid("degenerate box"));
            }
        }
        if self.descriptor_dim == 0 || self.field_terms == 0 {
            return Err(Error::invalid("descriptor dimension and field terms must be positive"));
        }
        if !(self.noise_sigma >= 0.0) || !(self.nuisance_scale >= 0.0) || !(self.field_scale > 0.0) {
            return Err(Error::invalid("noise and field scales must be non-negative"));
        }
        if !(self.field_min_frequency >= 0.0 && self.field_min_frequency <= self.field_max_frequency) {
            return Err(Error::invalid("bad field frequency range"));
        }
        Ok(())
    }
}

/// Descriptor field plus an optional additive bias field.
#[derive(Debug, Clone)]
pub struct BiasedField {
    pub base: FourierField,
    pub bias: Option<FourierField>,
}

impl DescriptorField for BiasedField {
    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn eval(&self, p: &Point3<f64>, out: &mut [f64]) {
        self.base.eval(p, out);
        if let Some(bias) = &self.bias {
            let mut extra = vec![0.0; out.len()];
            bias.eval(p, &mut extra);
            for (o, e) in out.iter_mut().zip(extra) {
                *o += e;
            }
        }
    }
}

#[derive(Debug, Clone)]
pub struct World {
    spec: WorldSpec,
    surfaces: Vec<Surface>,
    field: FourierField,
    nuisance: Option<FourierField>,
}

impl World {
    pub fn new(spec: WorldSpec) -> Result<Self> {
        spec.validate()?;
        let mut surfaces = vec![Surface::Plane {
            normal: Vector3::z(),
            offset: spec.ground_z,
        }];
        if spec.walls {
            surfaces.push(Surface::Plane {
                normal: Vector3::x(),
                offset: spec.bounds_min[0],
            });
            surfaces.push(Surface::Plane {
                normal: Vector3::x(),
                offset: spec.bounds_max[0],
            });
            surfaces.push(Surface::Plane {
                normal: Vector3::y(),
                offset: spec.bounds_min[1],
            });
            surfaces.push(Surface::Plane {
                normal: Vector3::y(),
                offset: spec.bounds_max[1],
            });
        }
        for (min, max) in &spec.boxes {
            surfaces.push(Surface::Cuboid { min: *min, max: *max });
        }
        let field = FourierField::new(
            spec.descriptor_dim,
            spec.field_terms,
            spec.field_scale,
            spec.field_min_frequency,
            spec.field_max_frequency,
            spec.seed,
        );
        let nuisance = (spec.nuisance_scale > 0.0).then(|| {
            FourierField::new(
                spec.descriptor_dim,
                4,
                spec.nuisance_scale,
                0.1,
                0.5,
                spec.seed ^ 0x5e_ed0f_b1a5,
            )
        });
        Ok(Self {
            spec,
            surfaces,
            field,
            nuisance,
        })
    }

    /// World with nothing but the ground plane.
    pub fn ground_only(mut spec: WorldSpec) -> Result<Self> {
        spec.walls = false;
        spec.boxes.clear();
        Self::new(spec)
    }

    pub fn spec(&self) -> &WorldSpec {
        &self.spec
    }

    pub fn set_noise_sigma(&mut self, sigma: f64) -> Result<()> {
        if !(sigma >= 0.0) {
            return Err(Error::invalid("noise sigma must be non-negative"));
        }
        self.spec.noise_sigma = sigma;
        Ok(())
    }

    pub fn intrinsics(&self) -> &CameraIntrinsics {
        &self.spec.intrinsics
    }

    pub fn field(&self) -> &FourierField {
        &self.field
    }

    /// Descriptor field as seen at localisation time (base plus appearance bias).
    pub fn observed_field(&self) -> BiasedField {
        BiasedField {
            base: self.field.clone(),
            bias: self.nuisance.clone(),
        }
    }

    pub fn contains_xy(&self, x: f64, y: f64) -> bool {
        x > self.spec.bounds_min[0]
            && x < self.spec.bounds_max[0]
            && y > self.spec.bounds_min[1]
            && y < self.spec.bounds_max[1]
    }

    pub fn raycast(&self, origin: &Point3<f64>, dir: &Vector3<f64>) -> Option<f64> {
        self.surfaces
            .iter()
            .filter_map(|s| s.intersect(origin, dir))
            .min_by(f64::total_cmp)
    }

    /// Camera-frame z-depth of the first surface behind every pixel center.
    pub fn render_depth(&self, k: &CameraIntrinsics, pose: &Pose) -> DepthImage {
        let origin = pose.camera_center();
        let r_wc: Matrix3<f64> = pose.rotation().transpose();
        let mut depth = DepthImage::filled(k.width, k.height, 0.0);
        for y in 0..k.height {
            for x in 0..k.width {
                let ray_cam = k.normalize(x as f64 + 0.5, y as f64 + 0.5);
                // ray_cam has unit z, so the ray parameter is the z-depth.
                let dir = r_wc * ray_cam;
                if let Some(s) = self.raycast(&origin, &dir) {
                    depth.set(x, y, s);
                }
            }
        }
        depth
    }

    /// Depth plus mapping-time descriptors (base field and noise).
    pub fn map_view(&self, k: &CameraIntrinsics, pose: &Pose, seed: u64) -> (DepthImage, DescriptorImage) {
        let depth = self.render_depth(k, pose);
        let frame = FrameGeometry {
            intrinsics: k,
            pose,
            depth: &depth,
        };
        let desc = synth_descriptor_field(&self.field, &frame, self.spec.noise_sigma, seed);
        (depth, desc)
    }

    /// Depth plus localisation-time descriptors (appearance bias and fresh noise).
    pub fn observe(&self, k: &CameraIntrinsics, pose: &Pose, seed: u64) -> (DepthImage, DescriptorImage) {
        let depth = self.render_depth(k, pose);
        let frame = FrameGeometry {
            intrinsics: k,
            pose,
            depth: &depth,
        };
        let desc = synth_descriptor_field(&self.observed_field(), &frame, self.spec.noise_sigma, seed);
        (depth, desc)
    }

    /// Camera-to-body mount: camera at `camera_height` above the body origin,
    /// looking along body +x and pitched down by `camera_pitch`.
    pub fn camera_mount(&self) -> Pose {
        camera_mount(self.spec.camera_height, self.spec.camera_pitch)
    }

    /// World-to-camera pose of a ground vehicle at `(x, y)` with heading `yaw`.
    pub fn vehicle_pose(&self, x: f64, y: f64, yaw: f64) -> Pose {
        vehicle_pose(&self.camera_mount(), self.spec.ground_z, x, y, yaw)
    }
}

pub fn camera_mount(height: f64, pitch: f64) -> Pose {
    let (s, c) = pitch.sin_cos();
    let forward = Vector3::new(c, 0.0, -s);
    let right = Vector3::new(0.0, -1.0, 0.0);
    let down = forward.cross(&right);
    let r = Matrix3::from_columns(&[right, down, forward]);
    Pose::from_matrix_projected(r, Vector3::new(0.0, 0.0, height))
}

pub fn vehicle_pose(mount: &Pose, ground_z: f64, x: f64, y: f64, yaw: f64) -> Pose {
    let body = Pose::from_matrix_projected(
        *nalgebra::Rotation3::from_axis_angle(&Vector3::z_axis(), yaw).matrix(),
        Vector3::new(x, y, ground_z),
    );
    body.compose(mount).inverse()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cuboid_hit_from_outside_and_inside() {
        let b = Surface::Cuboid {
            min: Point3::new(1.0, -1.0, -1.0),
            max: Point3::new(2.0, 1.0, 1.0),
        };
        let s = b.intersect(&Point3::origin(), &Vector3::x()).unwrap();
        assert!((s - 1.0).abs() < 1e-15);
        let s = b.intersect(&Point3::new(1.5, 0.0, 0.0), &Vector3::x()).unwrap();
        assert!((s - 0.5).abs() < 1e-15);
        assert!(b.intersect(&Point3::origin(), &-Vector3::x()).is_none());
    }

    #[test]
    fn mount_looks_forward_and_down() {
        let mount = camera_mount(1.0, 0.0);
        // Camera +z (forward) is body +x, camera +y (down) is body -z.
        let r = mount.rotation();
        assert!((r * Vector3::z() - Vector3::x()).norm() < 1e-15);
        assert!((r * Vector3::y() + Vector3::z()).norm() < 1e-15);
        assert!((r.determinant() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn invalid_bounds() {
        let mut spec = WorldSpec::desk(0);
        spec.bounds_max[0] = spec.bounds_min[0];
        assert!(World::new(spec).is_err());
    }
}
