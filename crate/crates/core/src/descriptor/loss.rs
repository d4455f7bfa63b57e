use super::{CorrespondenceSet, DescriptorImage, Label};
use crate::error::{Error, Result};

pub const DEFAULT_MARGIN: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossConfig {
    pub margin: f64,
}

impl LossConfig {
    pub fn new(margin: f64) -> Result<Self> {
        if !(margin > 0.0) || !margin.is_finite() {
            return Err(Error::invalid(format!("margin must be positive, got {margin}")));
        }
        Ok(Self { margin })
    }
}

impl Default for LossConfig {
    fn default() -> Self {
        Self { margin: DEFAULT_MARGIN }
    }
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Margin loss on one descriptor pair: `d²/2` for matches,
/// `max(0, m - d)²/2` for non-matches, zero when ignored.
pub fn contrastive_loss(label: Label, f1: &[f64], f2: &[f64], cfg: &LossConfig) -> Result<f64> {
    if f1.len() != f2.len() {
        return Err(Error::invalid(format!(
            "descriptor dimensions differ: {} vs {}",
            f1.len(),
            f2.len()
        )));
    }
    Ok(contrastive_from_distance(label, euclidean(f1, f2), cfg.margin))
}

pub fn contrastive_from_distance(label: Label, d: f64, margin: f64) -> f64 {
    match label {
        Label::Match => 0.5 * d * d,
        Label::NonMatch => {
            let gap = (margin - d).max(0.0);
            0.5 * gap * gap
        }
        Label::Ignore => 0.0,
    }
}

/// Sum of per-pair losses over a correspondence set, reading both images
/// bilinearly. Ignored pairs are skipped without touching the images.
pub fn total_loss(
    pairs: &CorrespondenceSet,
    f1: &DescriptorImage,
    f2: &DescriptorImage,
    cfg: &LossConfig,
) -> Result<f64> {
    if f1.dim() != f2.dim() {
        return Err(Error::invalid("descriptor images differ in dimension"));
    }
    let mut a = vec![0.0; f1.dim()];
    let mut b = vec![0.0; f2.dim()];
    let mut total = 0.0;
    for pair in pairs.iter() {
        if pair.label == Label::Ignore {
            continue;
        }
        f1.sample_bilinear(pair.p1.u, pair.p1.v, &mut a)?;
        f2.sample_bilinear(pair.p2.u, pair.p2.v, &mut b)?;
        total += contrastive_loss(pair.label, &a, &b, cfg)?;
    }
    Ok(total)
}
