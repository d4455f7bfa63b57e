use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{Particle, ParticleSet};
use crate::error::{Error, Result};

/// `1 / Σ w²` over normalized weights.
pub fn effective_sample_size(weights: impl IntoIterator<Item = f64>) -> f64 {
    let sq: f64 = weights.into_iter().map(|w| w * w).sum();
    if sq > 0.0 {
        1.0 / sq
    } else {
        0.0
    }
}

/// Systematic resampling indices for normalized `weights` and an offset
/// `u0 ∈ [0, 1/N)`: stratum `j` picks the particle whose cumulative weight
/// interval contains `u0 + j / N`.
pub fn systematic_indices(weights: &[f64], u0: f64) -> Vec<usize> {
    let n = weights.len();
    let mut out = Vec::with_capacity(n);
    let mut cumulative = weights.first().copied().unwrap_or(0.0);
    let mut i = 0;
    for j in 0..n {
        let target = u0 + j as f64 / n as f64;
        while target >= cumulative && i + 1 < n {
            i += 1;
            cumulative += weights[i];
        }
        out.push(i);
    }
    out
}

fn check_weights(set: &ParticleSet) -> Result<()> {
    let total: f64 = set.iter().map(|p| p.weight).sum();
    if !(total > 0.0) || !total.is_finite() {
        return Err(Error::DegenerateWeights(format!("weight sum {total}")));
    }
    Ok(())
}

/// Unconditional systematic resampling to `N` equal-weight particles.
pub fn systematic_resample(set: &mut ParticleSet, seed: u64) -> Result<()> {
    check_weights(set)?;
    set.normalize()?;
    let n = set.len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let u0 = rng.random::<f64>() / n as f64;
    let weights: Vec<f64> = set.iter().map(|p| p.weight).collect();
    let picks = systematic_indices(&weights, u0);
    let w = 1.0 / n as f64;
    let particles = picks
        .into_iter()
        .map(|i| Particle {
            pose: set.particles[i].pose,
            weight: w,
        })
        .collect();
    set.particles = particles;
    Ok(())
}

/// Resamples only when `N_eff < N / 2`. Returns whether it did.
pub fn resample(set: &mut ParticleSet, seed: u64) -> Result<bool> {
    check_weights(set)?;
    set.normalize()?;
    let n_eff = effective_sample_size(set.iter().map(|p| p.weight));
    if n_eff < set.len() as f64 / 2.0 {
        systematic_resample(set, seed)?;
        Ok(true)
    } else {
        Ok(false)
    }
}
