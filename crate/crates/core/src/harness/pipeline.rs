//! Map building and closed-loop localisation runs over a synthetic world.

use std::time::Instant;

use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::config::{HarnessConfig, InitMode, VoSource};
use super::metrics::{ate_rmse, convergence_frame, pose_error, TimingSummary, TrajectoryError};
use super::trajectory::synth_trajectory;
use super::world::World;
use crate::descriptor::DescriptorField;
use crate::error::{Error, Result};
use crate::featmap::{Observation, VoxelMap};
use crate::geometry::{project, CameraIntrinsics, Pose, Twist};
use crate::mcl::{self, derive_seed, init_particles, InitRegion, MotionNoise, ParticleSet, StepDiagnostics};
use crate::vo::{vo_step, Match2D2D, SpeedModel};

/// Renders depth and noisy descriptors at each pose and fuses them.
pub fn build_map_pipeline(
    world: &World,
    k: &CameraIntrinsics,
    poses: &[Pose],
    voxel_size: f64,
    noise_sigma: f64,
    seed: u64,
) -> Result<VoxelMap> {
    let mut map = VoxelMap::new(voxel_size, world.field().dim())?;
    let mut noisy = world.clone();
    noisy.set_noise_sigma(noise_sigma)?;
    for (i, pose) in poses.iter().enumerate() {
        let (depth, desc) = noisy.map_view(k, pose, derive_seed(seed, i as u64));
        map.insert_observation(&Observation {
            descriptors: &desc,
            depth: &depth,
            intrinsics: k,
            pose,
        })?;
    }
    map.finalize();
    Ok(map)
}

/// Builds the map from every mapping pass described by `cfg`.
pub fn build_map_from_config(world: &World, cfg: &HarnessConfig) -> Result<VoxelMap> {
    let mut poses = Vec::new();
    for spec in cfg.mapping_specs() {
        poses.extend(synth_trajectory(world, &spec)?);
    }
    build_map_pipeline(
        world,
        world.intrinsics(),
        &poses,
        cfg.voxel_size,
        cfg.noise_sigma,
        cfg.world_seed,
    )
}

/// Feature matches between two ground-truth views: random pixels of the
/// first view are lifted onto the scene, kept if visible in the second,
/// perturbed by Gaussian pixel noise, and a fraction are replaced by
/// uniformly random outliers.
#[allow(clippy::too_many_arguments)]
pub fn synth_matches(
    world: &World,
    k: &CameraIntrinsics,
    first: &Pose,
    second: &Pose,
    count: usize,
    pixel_noise: f64,
    outlier_fraction: f64,
    seed: u64,
) -> Vec<Match2D2D> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let origin1 = first.camera_center();
    let origin2 = second.camera_center();
    let r1 = first.rotation().transpose();
    let (w, h) = (k.width as f64, k.height as f64);
    let mut out = Vec::with_capacity(count);
    let mut attempts = 0;
    while out.len() < count && attempts < count * 50 {
        attempts += 1;
        let u1: f64 = rng.random_range(0.0..w);
        let v1: f64 = rng.random_range(0.0..h);
        let dir = r1 * k.normalize(u1, v1);
        let Some(s) = world.raycast(&origin1, &dir) else {
            continue;
        };
        let q = origin1 + dir * s;
        let Some(p2) = project(&q, k, second) else {
            continue;
        };
        let to_q = q - origin2;
        match world.raycast(&origin2, &to_q) {
            Some(s2) if s2 > 1.0 - 1e-6 => {}
            _ => continue,
        }
        let n = |rng: &mut ChaCha8Rng| pixel_noise * rng.sample::<f64, _>(StandardNormal);
        out.push(Match2D2D::new(
            u1 + n(&mut rng),
            v1 + n(&mut rng),
            p2.u + n(&mut rng),
            p2.v + n(&mut rng),
        ));
    }
    let outliers = (outlier_fraction * out.len() as f64).round() as usize;
    for m in out.iter_mut().take(outliers) {
        m.p2 = crate::geometry::Pixel::new(rng.random_range(0.0..w), rng.random_range(0.0..h));
    }
    out
}

/// Integrates increments from `start` with no correction.
pub fn vo_only_baseline(start: &Pose, twists: &[Twist]) -> Vec<Pose> {
    let mut poses = Vec::with_capacity(twists.len() + 1);
    poses.push(*start);
    for t in twists {
        let last = *poses.last().expect("non-empty");
        poses.push(Pose::exp(t).compose(&last));
    }
    poses
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrameRecord {
    pub estimate: Pose,
    pub baseline: Pose,
    pub translation_error: f64,
    pub rotation_error: f64,
    pub baseline_error: f64,
    pub odometry: Twist,
    /// Odometry fell back to constant velocity or reported rotation only.
    pub vo_degraded: bool,
    pub diagnostics: StepDiagnostics,
    pub ms_vo: f64,
    pub ms_observe: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunReport {
    pub frames: Vec<FrameRecord>,
    pub particles: usize,
    pub ate: TrajectoryError,
    pub baseline_ate: TrajectoryError,
    pub convergence_threshold: f64,
    pub convergence_frame: Option<usize>,
    pub kidnap_frame: Option<usize>,
    /// Frames from the kidnapping until the error stays below the threshold.
    pub recovery_frames: Option<usize>,
}

/// Mean ± std of one processing stage.
#[derive(Debug, Clone, PartialEq)]
pub struct StageTiming {
    pub name: &'static str,
    pub summary: TimingSummary,
    pub unit: &'static str,
}

impl RunReport {
    pub fn estimates(&self) -> Vec<Pose> {
        self.frames.iter().map(|f| f.estimate).collect()
    }

    pub fn translation_errors(&self) -> Vec<f64> {
        self.frames.iter().map(|f| f.translation_error).collect()
    }

    pub fn diagnostics(&self) -> Vec<StepDiagnostics> {
        self.frames.iter().map(|f| f.diagnostics).collect()
    }

    /// Same estimates, errors and filter statistics, ignoring wall-clock times.
    pub fn same_outcome(&self, other: &RunReport) -> bool {
        let strip = |r: &RunReport| -> Vec<FrameRecord> {
            r.frames
                .iter()
                .map(|f| FrameRecord {
                    diagnostics: StepDiagnostics {
                        ms_predict: 0.0,
                        ms_weight: 0.0,
                        ms_resample: 0.0,
                        ms_cluster: 0.0,
                        ms_total: 0.0,
                        ..f.diagnostics
                    },
                    ms_vo: 0.0,
                    ms_observe: 0.0,
                    ..f.clone()
                })
                .collect()
        };
        strip(self) == strip(other)
            && self.ate == other.ate
            && self.baseline_ate == other.baseline_ate
            && self.convergence_frame == other.convergence_frame
            && self.recovery_frames == other.recovery_frames
    }

    pub fn timing(&self) -> Vec<StageTiming> {
        timing_from_rows(&diagnostic_rows(self))
    }
}

/// One diagnostics CSV row.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DiagnosticRow {
    pub frame: usize,
    pub n_eff: f64,
    pub n_clusters: usize,
    pub ms_predict: f64,
    pub ms_weight: f64,
    pub ms_resample: f64,
    pub ms_cluster: f64,
    pub ms_total: f64,
    pub ms_vo: f64,
    pub ms_observe: f64,
    pub particles: usize,
}

pub const DIAGNOSTICS_HEADER: &str =
    "frame,n_eff,n_clusters,ms_predict,ms_weight,ms_resample,ms_cluster,ms_total,ms_vo,ms_observe,particles";

pub fn diagnostic_rows(report: &RunReport) -> Vec<DiagnosticRow> {
    report
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| DiagnosticRow {
            frame: i,
            n_eff: f.diagnostics.n_eff,
            n_clusters: f.diagnostics.n_clusters,
            ms_predict: f.diagnostics.ms_predict,
            ms_weight: f.diagnostics.ms_weight,
            ms_resample: f.diagnostics.ms_resample,
            ms_cluster: f.diagnostics.ms_cluster,
            ms_total: f.diagnostics.ms_total,
            ms_vo: f.ms_vo,
            ms_observe: f.ms_observe,
            particles: report.particles,
        })
        .collect()
}

pub fn diagnostics_csv(rows: &[DiagnosticRow]) -> String {
    let mut s = String::from(DIAGNOSTICS_HEADER);
    s.push('\n');
    for r in rows {
        s.push_str(&format!(
            "{},{:.6},{},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{:.6},{}\n",
            r.frame,
            r.n_eff,
            r.n_clusters,
            r.ms_predict,
            r.ms_weight,
            r.ms_resample,
            r.ms_cluster,
            r.ms_total,
            r.ms_vo,
            r.ms_observe,
            r.particles
        ));
    }
    s
}

pub fn parse_diagnostics_csv(text: &str) -> Result<Vec<DiagnosticRow>> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == DIAGNOSTICS_HEADER => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected header '{DIAGNOSTICS_HEADER}'"),
            })
        }
        None => return Ok(Vec::new()),
    }
    lines
        .map(|(i, line)| {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 11 {
                return Err(bad(format!("expected 11 fields, found {}", f.len())));
            }
            let num = |j: usize| -> Result<f64> {
                f[j].parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| bad(format!("bad number '{}'", f[j])))
            };
            let int = |j: usize| -> Result<usize> { f[j].parse().map_err(|_| bad(format!("bad integer '{}'", f[j]))) };
            Ok(DiagnosticRow {
                frame: int(0)?,
                n_eff: num(1)?,
                n_clusters: int(2)?,
                ms_predict: num(3)?,
                ms_weight: num(4)?,
                ms_resample: num(5)?,
                ms_cluster: num(6)?,
                ms_total: num(7)?,
                ms_vo: num(8)?,
                ms_observe: num(9)?,
                particles: int(10)?,
            })
        })
        .collect()
}

/// Per-stage summaries in the order the filter runs them; weighting is
/// reported per particle as well as per frame.
pub fn timing_from_rows(rows: &[DiagnosticRow]) -> Vec<StageTiming> {
    let col = |f: fn(&DiagnosticRow) -> f64| TimingSummary::from_samples(&rows.iter().map(f).collect::<Vec<_>>());
    vec![
        StageTiming {
            name: "Observation",
            summary: col(|r| r.ms_observe),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Visual odometry",
            summary: col(|r| r.ms_vo),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Particle prediction",
            summary: col(|r| r.ms_predict),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Particle weighting",
            summary: col(|r| r.ms_weight),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Likelihood per particle",
            summary: col(|r| r.ms_weight / r.particles.max(1) as f64),
            unit: "ms/particle",
        },
        StageTiming {
            name: "Resampling",
            summary: col(|r| r.ms_resample),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Mean-shift clustering",
            summary: col(|r| r.ms_cluster),
            unit: "ms/frame",
        },
        StageTiming {
            name: "Filter step total",
            summary: col(|r| r.ms_total),
            unit: "ms/frame",
        },
    ]
}

/// Table of stage timings plus the stage-sum to wall-time ratio.
pub fn timing_table(rows: &[DiagnosticRow]) -> String {
    let mut s = String::from("Subsystem                  Time\n");
    for t in timing_from_rows(rows) {
        s.push_str(&format!("{:<26} {}\n", t.name, t.summary.format(t.unit)));
    }
    let stages: f64 = rows
        .iter()
        .map(|r| r.ms_predict + r.ms_weight + r.ms_resample + r.ms_cluster)
        .sum();
    let total: f64 = rows.iter().map(|r| r.ms_total).sum();
    if total > 0.0 {
        s.push_str(&format!("Stage sum / wall time      {:.1}%\n", 100.0 * stages / total));
    }
    s
}

/// Ratio of summed stage times to measured step time over all rows.
pub fn stage_coverage(rows: &[DiagnosticRow]) -> f64 {
    let stages: f64 = rows
        .iter()
        .map(|r| r.ms_predict + r.ms_weight + r.ms_resample + r.ms_cluster)
        .sum();
    let total: f64 = rows.iter().map(|r| r.ms_total).sum();
    if total > 0.0 {
        stages / total
    } else {
        1.0
    }
}

/// Uniform placements over the room interior (0.5 m from the walls) and
/// every heading, at the vehicle's ground height.
pub fn global_region(world: &World) -> InitRegion {
    let spec = world.spec();
    let margin = 0.5;
    InitRegion::Uniform {
        mount: world.camera_mount(),
        lower: [
            spec.bounds_min[0] + margin,
            spec.bounds_min[1] + margin,
            spec.ground_z,
            0.0,
            0.0,
            -std::f64::consts::PI,
        ],
        upper: [
            spec.bounds_max[0] - margin,
            spec.bounds_max[1] - margin,
            spec.ground_z,
            0.0,
            0.0,
            std::f64::consts::PI,
        ],
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

fn gaussian_twist(rng: &mut ChaCha8Rng, sigma_t: f64, sigma_r: f64) -> Twist {
    let mut g = || rng.sample::<f64, _>(StandardNormal);
    let t = Vector3::new(g(), g(), g()) * sigma_t;
    let r = Vector3::new(g(), g(), g()) * sigma_r;
    Twist::new(t, r)
}

/// Odometry increment for frame `t` (from `t - 1`), scaled by `speed`.
fn odometry(
    world: &World,
    truth: &[Pose],
    t: usize,
    cfg: &HarnessConfig,
    speed: f64,
    fallback: &Twist,
    seed: u64,
) -> (Twist, bool) {
    match cfg.vo {
        VoSource::Oracle => {
            let exact = truth[t].compose(&truth[t - 1].inverse()).log();
            if cfg.oracle_sigma_t == 0.0 && cfg.oracle_sigma_r == 0.0 {
                return (exact, false);
            }
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (
                exact + gaussian_twist(&mut rng, cfg.oracle_sigma_t, cfg.oracle_sigma_r),
                false,
            )
        }
        VoSource::Internal => {
            let k = world.intrinsics();
            let matches = synth_matches(
                world,
                k,
                &truth[t - 1],
                &truth[t],
                cfg.vo_matches,
                cfg.vo_pixel_noise,
                cfg.vo_outliers,
                seed,
            );
            let vo_cfg = crate::vo::VoConfig {
                seed: derive_seed(seed, 3),
                ..cfg.vo_config()
            };
            match vo_step(&matches, k, &vo_cfg, Some(speed)) {
                Ok(step) => (step.twist, step.low_confidence),
                Err(_) => (*fallback, true),
            }
        }
    }
}

/// Runs the filter along `truth`, with the VO-only baseline alongside.
pub fn run_localization(
    world: &World,
    map: &VoxelMap,
    truth: &[Pose],
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<RunReport> {
    if truth.is_empty() {
        return Err(Error::invalid("empty test trajectory"));
    }
    if cfg.particles == 0 {
        return Err(Error::invalid("particle count must be at least 1"));
    }
    let k = world.intrinsics();
    let filter_cfg = cfg.filter_config()?;
    let init_region = match cfg.init {
        InitMode::Tracking => {
            let (st, sr) = (cfg.init_sigma_t, cfg.init_sigma_r);
            InitRegion::Gaussian {
                prior: truth[0],
                spread: MotionNoise::diagonal([st, st, st, sr, sr, sr])?,
            }
        }
        InitMode::Global => global_region(world),
    };
    let mut set: ParticleSet = init_particles(cfg.particles, &init_region, derive_seed(seed, 10))?;
    let kidnap = (cfg.kidnap_frame > 0 && cfg.kidnap_frame < truth.len()).then_some(cfg.kidnap_frame);

    let mut speed = SpeedModel::new(cfg.speed);
    let mut baseline_speed = speed;
    let mut last_delta = Twist::zero();
    let mut baseline = truth[0];
    let mut frames: Vec<FrameRecord> = Vec::with_capacity(truth.len());

    for t in 0..truth.len() {
        let frame_seed = derive_seed(seed, 100 + t as u64);
        if Some(t) == kidnap {
            set = init_particles(cfg.particles, &global_region(world), derive_seed(frame_seed, 11))?;
        }

        let clock = Instant::now();
        let (delta, vo_degraded) = if t == 0 {
            (Twist::zero(), false)
        } else {
            odometry(
                world,
                truth,
                t,
                cfg,
                speed.speed,
                &last_delta,
                derive_seed(frame_seed, 12),
            )
        };
        let ms_vo = ms_since(clock);
        last_delta = delta;

        if t > 0 {
            // Internal VO is scaled by the filter's speed; the baseline keeps
            // its own constant-velocity scale.
            let ratio = match cfg.vo {
                VoSource::Internal if speed.speed > 0.0 => baseline_speed.speed / speed.speed,
                _ => 1.0,
            };
            let base_delta = Twist::new(delta.translational * ratio, delta.rotational);
            let next = Pose::exp(&base_delta).compose(&baseline);
            let (disp, _) = pose_error(&next, &baseline);
            baseline_speed.update(disp, cfg.dt);
            baseline = next;
        }

        let clock = Instant::now();
        let (_, observed) = world.observe(k, &truth[t], derive_seed(frame_seed, 13));
        let ms_observe = ms_since(clock);

        let (estimate, diagnostics) = mcl::step(
            &mut set,
            &delta,
            &observed,
            map,
            k,
            &filter_cfg,
            derive_seed(frame_seed, 14),
        )?;

        if let Some(prev) = frames.last() {
            let (disp, _) = pose_error(&estimate, &prev.estimate);
            speed.update(disp, cfg.dt);
        }

        let (translation_error, rotation_error) = pose_error(&estimate, &truth[t]);
        let (baseline_error, _) = pose_error(&baseline, &truth[t]);
        frames.push(FrameRecord {
            estimate,
            baseline,
            translation_error,
            rotation_error,
            baseline_error,
            odometry: delta,
            vo_degraded,
            diagnostics,
            ms_vo,
            ms_observe,
        });
    }

    let estimates: Vec<Pose> = frames.iter().map(|f| f.estimate).collect();
    let baselines: Vec<Pose> = frames.iter().map(|f| f.baseline).collect();
    let ate = ate_rmse(&estimates, truth)?;
    let baseline_ate = ate_rmse(&baselines, truth)?;
    let threshold = 3.0 * map.voxel_size();
    let errors: Vec<f64> = frames.iter().map(|f| f.translation_error).collect();
    let recovery_frames = kidnap.and_then(|k0| convergence_frame(&errors[k0..], threshold));
    Ok(RunReport {
        frames,
        particles: cfg.particles,
        ate,
        baseline_ate,
        convergence_threshold: threshold,
        convergence_frame: convergence_frame(&errors, threshold),
        kidnap_frame: kidnap,
        recovery_frames,
    })
}

/// World, test trajectory and map for a configuration.
pub struct Experiment {
    pub world: World,
    pub truth: Vec<Pose>,
    pub map: VoxelMap,
}

impl Experiment {
    pub fn prepare(cfg: &HarnessConfig) -> Result<Self> {
        let world = World::new(cfg.world_spec()?)?;
        let truth = synth_trajectory(&world, &cfg.trajectory_spec())?;
        let map = build_map_from_config(&world, cfg)?;
        Ok(Self { world, truth, map })
    }

    pub fn run(&self, cfg: &HarnessConfig, seed: u64) -> Result<RunReport> {
        run_localization(&self.world, &self.map, &self.truth, cfg, seed)
    }
}

/// Filter output for a recorded sequence with no ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceOutput {
    pub estimates: Vec<Pose>,
    pub rows: Vec<DiagnosticRow>,
}

/// Runs the filter over recorded descriptor frames. `odometry` holds either
/// one increment per frame (the first is applied before frame 0) or one per
/// consecutive frame pair.
pub fn localize_sequence<I>(
    map: &VoxelMap,
    k: &CameraIntrinsics,
    frames: I,
    odometry: &[Twist],
    init: &InitRegion,
    cfg: &HarnessConfig,
    seed: u64,
) -> Result<SequenceOutput>
where
    I: IntoIterator<Item = Result<crate::descriptor::DescriptorImage>>,
    I::IntoIter: ExactSizeIterator,
{
    let frames = frames.into_iter();
    let n = frames.len();
    let offset = match odometry.len() {
        l if l == n => 0,
        l if l + 1 == n => 1,
        l => {
            return Err(Error::invalid(format!("{l} odometry increments for {n} frames")));
        }
    };
    let filter_cfg = cfg.filter_config()?;
    let mut set = init_particles(cfg.particles, init, derive_seed(seed, 10))?;
    let mut out = SequenceOutput {
        estimates: Vec::with_capacity(n),
        rows: Vec::with_capacity(n),
    };
    for (t, frame) in frames.enumerate() {
        let clock = Instant::now();
        let observed = frame?;
        let ms_observe = ms_since(clock);
        let delta = match (offset, t) {
            (0, _) => odometry[t],
            (_, 0) => Twist::zero(),
            _ => odometry[t - 1],
        };
        let frame_seed = derive_seed(seed, 100 + t as u64);
        let (estimate, d) = mcl::step(
            &mut set,
            &delta,
            &observed,
            map,
            k,
            &filter_cfg,
            derive_seed(frame_seed, 14),
        )?;
        out.estimates.push(estimate);
        out.rows.push(DiagnosticRow {
            frame: t,
            n_eff: d.n_eff,
            n_clusters: d.n_clusters,
            ms_predict: d.ms_predict,
            ms_weight: d.ms_weight,
            ms_resample: d.ms_resample,
            ms_cluster: d.ms_cluster,
            ms_total: d.ms_total,
            ms_vo: 0.0,
            ms_observe,
            particles: cfg.particles,
        });
    }
    Ok(out)
}

/// Synthetic feature matches for every consecutive frame pair, keyed by
/// the index of the second frame.
pub fn synth_match_sequence(
    world: &World,
    truth: &[Pose],
    cfg: &HarnessConfig,
    seed: u64,
) -> Vec<(usize, Vec<Match2D2D>)> {
    (1..truth.len())
        .map(|t| {
            let frame_seed = derive_seed(derive_seed(seed, 100 + t as u64), 12);
            let m = synth_matches(
                world,
                world.intrinsics(),
                &truth[t - 1],
                &truth[t],
                cfg.vo_matches,
                cfg.vo_pixel_noise,
                cfg.vo_outliers,
                frame_seed,
            );
            (t, m)
        })
        .collect()
}

/// Odometry increments from the configured source at the nominal speed,
/// one per consecutive frame pair.
pub fn synth_odometry(world: &World, truth: &[Pose], cfg: &HarnessConfig, seed: u64) -> Vec<Twist> {
    let mut last = Twist::zero();
    (1..truth.len())
        .map(|t| {
            let frame_seed = derive_seed(seed, 100 + t as u64);
            let (delta, _) = odometry(world, truth, t, cfg, cfg.speed, &last, derive_seed(frame_seed, 12));
            last = delta;
            delta
        })
        .collect()
}
