//! Synthetic descriptor provider.
//!
//! A smooth pseudo-random vector field over 3D space stands in for a
//! learned per-pixel embedding: every view of a surface point yields the
//! same descriptor up to additive Gaussian noise.

use nalgebra::{Point3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, StandardNormal};

use super::DescriptorImage;
use crate::featmap::DepthImage;
use crate::geometry::{backproject, CameraIntrinsics, Pixel, Pose};

/// A deterministic n-vector defined at every point of space.
pub trait DescriptorField: Send + Sync {
    fn dim(&self) -> usize;
    fn eval(&self, p: &Point3<f64>, out: &mut [f64]);
}

/// Sum of random cosine waves per channel (random Fourier features).
///
/// Each channel has zero mean and standard deviation `scale`; the spatial
/// gradient is bounded by `scale * sqrt(2 * terms) * max_frequency`.
#[derive(Debug, Clone)]
pub struct FourierField {
    dim: usize,
    terms: usize,
    amplitude: f64,
    frequencies: Vec<Vector3<f64>>,
    phases: Vec<f64>,
}

impl FourierField {
    pub fn new(dim: usize, terms: usize, scale: f64, min_frequency: f64, max_frequency: f64, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut frequencies = Vec::with_capacity(dim * terms);
        let mut phases = Vec::with_capacity(dim * terms);
        for _ in 0..dim * terms {
            let dir = loop {
                let v = Vector3::new(
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                    StandardNormal.sample(&mut rng),
                );
                let n: f64 = v.norm();
                if n > 1e-6 {
                    break v / n;
                }
            };
            let magnitude = rng.random_range(min_frequency..=max_frequency);
            frequencies.push(dir * magnitude);
            phases.push(rng.random_range(0.0..std::f64::consts::TAU));
        }
        Self {
            dim,
            terms,
            amplitude: scale * (2.0 / terms as f64).sqrt(),
            frequencies,
            phases,
        }
    }

    /// Upper bound on the Euclidean norm of the field's spatial Jacobian.
    pub fn lipschitz_bound(&self) -> f64 {
        let per_channel = |c: usize| -> f64 {
            (0..self.terms)
                .map(|k| self.frequencies[c * self.terms + k].norm())
                .sum::<f64>()
                * self.amplitude
        };
        (0..self.dim).map(|c| per_channel(c).powi(2)).sum::<f64>().sqrt()
    }
}

impl DescriptorField for FourierField {
    fn dim(&self) -> usize {
        self.dim
    }

    fn eval(&self, p: &Point3<f64>, out: &mut [f64]) {
        let x = p.coords;
        for (c, o) in out.iter_mut().enumerate().take(self.dim) {
            let base = c * self.terms;
            let mut acc = 0.0;
            for k in base..base + self.terms {
                acc += (self.frequencies[k].dot(&x) + self.phases[k]).cos();
            }
            *o = acc * self.amplitude;
        }
    }
}

/// Geometry of one frame: intrinsics, world-to-camera pose and depth.
#[derive(Debug, Clone, Copy)]
pub struct FrameGeometry<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub pose: &'a Pose,
    pub depth: &'a DepthImage,
}

/// Something that turns a frame into a dense descriptor image.
pub trait DescriptorProvider {
    fn dim(&self) -> usize;
    fn describe(&self, frame: &FrameGeometry<'_>, seed: u64) -> DescriptorImage;
}

/// Evaluates `field` at the surface point behind each pixel and adds i.i.d.
/// Gaussian noise. Pixels without valid depth get a zero descriptor.
pub fn synth_descriptor_field<F: DescriptorField + ?Sized>(
    field: &F,
    frame: &FrameGeometry<'_>,
    noise_sigma: f64,
    seed: u64,
) -> DescriptorImage {
    let k = frame.intrinsics;
    let dim = field.dim();
    let mut img = DescriptorImage::zeros(k.width, k.height, dim);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let noise = (noise_sigma > 0.0).then(|| Normal::new(0.0, noise_sigma).expect("sigma > 0"));
    let mut value = vec![0.0; dim];
    for y in 0..k.height {
        for x in 0..k.width {
            let d = frame.depth.get(x, y);
            if !DepthImage::is_valid_depth(d) {
                continue;
            }
            let px = Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
            let q = backproject(&px, d, k, frame.pose).expect("depth checked");
            field.eval(&q, &mut value);
            for (dst, v) in img.get_mut(x, y).iter_mut().zip(&value) {
                let n = noise.as_ref().map_or(0.0, |n| n.sample(&mut rng));
                *dst = (v + n) as f32;
            }
        }
    }
    img
}

/// [`DescriptorProvider`] backed by a [`DescriptorField`] plus noise.
pub struct SyntheticProvider<F> {
    pub field: F,
    pub noise_sigma: f64,
}

impl<F: DescriptorField> DescriptorProvider for SyntheticProvider<F> {
    fn dim(&self) -> usize {
        self.field.dim()
    }

    fn describe(&self, frame: &FrameGeometry<'_>, seed: u64) -> DescriptorImage {
        synth_descriptor_field(&self.field, frame, self.noise_sigma, seed)
    }
}
