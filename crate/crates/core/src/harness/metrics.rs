use std::fmt;

use crate::error::{Error, Result};
use crate::geometry::Pose;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrajectoryError {
    pub translation_rmse: f64,
    pub rotation_rmse: f64,
}

/// Camera-center distance and geodesic rotation angle between two poses.
pub fn pose_error(estimate: &Pose, truth: &Pose) -> (f64, f64) {
    (
        (estimate.camera_center() - truth.camera_center()).norm(),
        estimate.rotation_angle_to(truth),
    )
}

pub fn rms(values: impl IntoIterator<Item = f64>) -> f64 {
    let (sum, n) = values.into_iter().fold((0.0, 0usize), |(s, n), v| (s + v * v, n + 1));
    if n == 0 {
        0.0
    } else {
        (sum / n as f64).sqrt()
    }
}

/// Root-mean-square translation and rotation error, frame by frame.
pub fn ate_rmse(estimates: &[Pose], ground_truth: &[Pose]) -> Result<TrajectoryError> {
    if estimates.len() != ground_truth.len() {
        return Err(Error::invalid(format!(
            "{} estimates vs {} ground-truth poses",
            estimates.len(),
            ground_truth.len()
        )));
    }
    let errors: Vec<(f64, f64)> = estimates
        .iter()
        .zip(ground_truth)
        .map(|(e, g)| pose_error(e, g))
        .collect();
    Ok(TrajectoryError {
        translation_rmse: rms(errors.iter().map(|e| e.0)),
        rotation_rmse: rms(errors.iter().map(|e| e.1)),
    })
}

/// Sample mean and standard deviation (n - 1 denominator).
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct TimingSummary {
    pub mean: f64,
    pub std: f64,
    pub samples: usize,
}

impl TimingSummary {
    pub fn from_samples(values: &[f64]) -> Self {
        let n = values.len();
        if n == 0 {
            return Self::default();
        }
        let mean = values.iter().sum::<f64>() / n as f64;
        let var = if n > 1 {
            values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64
        } else {
            0.0
        };
        Self {
            mean,
            std: var.sqrt(),
            samples: n,
        }
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            mean: self.mean * factor,
            std: self.std * factor,
            samples: self.samples,
        }
    }

    /// `"1.93 ± 0.23 ms/frame"` style text.
    pub fn format(&self, unit: &str) -> String {
        format!("{} ± {} {unit}", sig3(self.mean), sig3(self.std))
    }
}

impl fmt::Display for TimingSummary {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format("ms"))
    }
}

/// Three significant digits, never scientific.
fn sig3(v: f64) -> String {
    if v == 0.0 || !v.is_finite() {
        return format!("{v:.2}");
    }
    let digits = (2 - v.abs().log10().floor() as i32).clamp(0, 9) as usize;
    format!("{v:.digits$}")
}

/// First frame from which every later error stays below `threshold`.
pub fn convergence_frame(errors: &[f64], threshold: f64) -> Option<usize> {
    let mut frame = None;
    for (i, &e) in errors.iter().enumerate() {
        if e < threshold {
            frame.get_or_insert(i);
        } else {
            frame = None;
        }
    }
    frame
}
