use nalgebra::{Matrix6, Vector6};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};
use crate::geometry::Twist;

/// Gaussian noise over twist coordinates (translation first, then rotation).
#[derive(Debug, Clone, PartialEq)]
pub struct MotionNoise {
    covariance: Matrix6<f64>,
    /// `factor * factorᵀ = covariance`.
    factor: Matrix6<f64>,
}

impl MotionNoise {
    pub fn new(covariance: Matrix6<f64>) -> Result<Self> {
        if !covariance.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid("covariance must be finite"));
        }
        let scale = covariance.abs().max().max(f64::MIN_POSITIVE);
        let asym = (covariance - covariance.transpose()).abs().max();
        if asym > 1e-12 * scale {
            return Err(Error::invalid("covariance is not symmetric"));
        }
        let eig = covariance.symmetric_eigen();
        if eig.eigenvalues.iter().any(|&l| l < -1e-12 * scale) {
            return Err(Error::invalid(format!(
                "covariance is not positive semidefinite (eigenvalues {:?})",
                eig.eigenvalues.as_slice()
            )));
        }
        let sqrt = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
        let factor = eig.eigenvectors * Matrix6::from_diagonal(&sqrt);
        Ok(Self { covariance, factor })
    }

    pub fn zero() -> Self {
        Self {
            covariance: Matrix6::zeros(),
            factor: Matrix6::zeros(),
        }
    }

    /// Independent per-axis standard deviations.
    pub fn diagonal(sigmas: [f64; 6]) -> Result<Self> {
        let v = Vector6::from_iterator(sigmas.iter().map(|s| s * s));
        Self::new(Matrix6::from_diagonal(&v))
    }

    pub fn covariance(&self) -> &Matrix6<f64> {
        &self.covariance
    }

    pub fn is_zero(&self) -> bool {
        self.factor.iter().all(|&v| v == 0.0)
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Twist {
        if self.is_zero() {
            return Twist::zero();
        }
        let z = Vector6::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let e = self.factor * z;
        Twist::from_array([e[0], e[1], e[2], e[3], e[4], e[5]])
    }
}
