//! Descriptor-quality evaluation on the synthetic field: class distance
//! statistics and dense matching error between two views of the world.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::HarnessConfig;
use super::trajectory::synth_trajectory;
use super::world::World;
use crate::descriptor::{
    dense_match_eval, distance_stats_from_distances, euclidean, generate_correspondences, CorrespondenceConfig,
    CorrespondenceSet, Label, PosedDepth,
};
use crate::error::{Error, Result};
use crate::geometry::{backproject, Pixel};
use crate::mcl::derive_seed;

/// One CSV row. Match errors are pooled over all view pairs; the
/// percentiles are averaged over pairs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescEvalRow {
    pub dim: usize,
    pub mean_match: f64,
    pub mean_nonmatch: f64,
    pub overlap: f64,
    pub rmse_px: f64,
    pub p50_px: f64,
    pub p95_px: f64,
    pub matches: usize,
}

pub const DESC_EVAL_HEADER: &str = "dim,mean_match,mean_nonmatch,overlap,rmse_px,p50_px,p95_px,matches";

impl DescEvalRow {
    pub fn to_csv_line(&self) -> String {
        format!(
            "{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}",
            self.dim,
            self.mean_match,
            self.mean_nonmatch,
            self.overlap,
            self.rmse_px,
            self.p50_px,
            self.p95_px,
            self.matches
        )
    }
}

/// Settings for [`eval_descriptor_dim`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DescEvalOptions {
    /// View pairs taken along the test trajectory.
    pub pairs: usize,
    /// Frames between the two views of a pair.
    pub frame_gap: usize,
    /// Scene points sampled per pair.
    pub points: usize,
    /// Search half-window for dense matching; `None` searches the whole image.
    pub window: Option<u32>,
}

impl Default for DescEvalOptions {
    fn default() -> Self {
        Self {
            pairs: 5,
            frame_gap: 4,
            points: 200,
            window: None,
        }
    }
}

/// Evaluates the synthetic descriptor field at dimension `dim`: the first
/// view of each pair carries mapping-time descriptors, the second the
/// localisation-time ones (fresh noise plus appearance bias).
pub fn eval_descriptor_dim(cfg: &HarnessConfig, dim: usize, opts: &DescEvalOptions, seed: u64) -> Result<DescEvalRow> {
    let mut cfg = cfg.clone();
    cfg.descriptor_dim = dim;
    let world = World::new(cfg.world_spec()?)?;
    let k = *world.intrinsics();
    let poses = synth_trajectory(&world, &cfg.trajectory_spec())?;
    if poses.len() <= opts.frame_gap {
        return Err(Error::invalid("trajectory too short for the requested frame gap"));
    }
    let stride = ((poses.len() - opts.frame_gap) / opts.pairs.max(1)).max(1);

    let mut match_d = Vec::new();
    let mut nonmatch_d = Vec::new();
    let mut errors2 = Vec::new();
    let mut p50 = Vec::new();
    let mut p95 = Vec::new();
    for pair in 0..opts.pairs {
        let a = pair * stride;
        let b = a + opts.frame_gap;
        if b >= poses.len() {
            break;
        }
        let pair_seed = derive_seed(seed, pair as u64);
        let (depth1, f1) = world.map_view(&k, &poses[a], derive_seed(pair_seed, 1));
        let (depth2, f2) = world.observe(&k, &poses[b], derive_seed(pair_seed, 2));

        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(pair_seed, 3));
        let mut points = Vec::with_capacity(opts.points);
        for _ in 0..opts.points * 10 {
            if points.len() == opts.points {
                break;
            }
            let x = rng.random_range(0..k.width);
            let y = rng.random_range(0..k.height);
            let d = depth1.get(x, y);
            if crate::featmap::DepthImage::is_valid_depth(d) {
                let p = Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
                points.push(backproject(&p, d, &k, &poses[a])?);
            }
        }
        let view1 = PosedDepth {
            intrinsics: &k,
            pose: &poses[a],
            depth: &depth1,
        };
        let view2 = PosedDepth {
            intrinsics: &k,
            pose: &poses[b],
            depth: &depth2,
        };
        let corr: CorrespondenceSet = generate_correspondences(
            &points,
            &view1,
            &view2,
            &CorrespondenceConfig {
                negatives_per_match: 4,
                seed: derive_seed(pair_seed, 4),
                ..CorrespondenceConfig::default()
            },
        );

        let mut d1 = vec![0.0; dim];
        let mut d2 = vec![0.0; dim];
        for c in corr.iter() {
            let target = match c.label {
                Label::Match => &mut match_d,
                Label::NonMatch => &mut nonmatch_d,
                Label::Ignore => continue,
            };
            f1.sample_bilinear(c.p1.u, c.p1.v, &mut d1)?;
            f2.sample_bilinear(c.p2.u, c.p2.v, &mut d2)?;
            target.push(euclidean(&d1, &d2));
        }
        let err = dense_match_eval(&f1, &f2, &corr, opts.window)?;
        if err.count > 0 {
            errors2.push((err.rmse_px * err.rmse_px, err.count));
            p50.push(err.p50);
            p95.push(err.p95);
        }
    }
    let count: usize = errors2.iter().map(|e| e.1).sum();
    if count == 0 {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let stats = distance_stats_from_distances(&match_d, &nonmatch_d)?;
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    Ok(DescEvalRow {
        dim,
        mean_match: stats.mean_match,
        mean_nonmatch: stats.mean_nonmatch,
        overlap: stats.overlap,
        rmse_px: (errors2.iter().map(|(e2, n)| e2 * *n as f64).sum::<f64>() / count as f64).sqrt(),
        p50_px: mean(&p50),
        p95_px: mean(&p95),
        matches: count,
    })
}

pub fn desc_eval_csv(rows: &[DescEvalRow]) -> String {
    let mut s = String::from(DESC_EVAL_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&r.to_csv_line());
        s.push('\n');
    }
    s
}
