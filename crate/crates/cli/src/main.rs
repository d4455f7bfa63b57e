//! `featloc` command-line front end.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 numerical failure.

use std::fmt;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use featloc::descriptor::DescriptorImage;
use featloc::featmap::{render_imagined, VoxelMap};
use featloc::harness::{
    build_map_pipeline, desc_eval_csv, diagnostic_rows, diagnostics_csv, eval_descriptor_dim, format_kitti_poses,
    format_matches, format_twists, global_region, load_kitti_poses, localize_sequence, parse_diagnostics_csv,
    parse_kitti_line, parse_matches, parse_twists, run_localization, synth_match_sequence, synth_odometry,
    synth_trajectory, timing_table, DescEvalOptions, HarnessConfig, VoSource, World,
};
use featloc::mcl::{InitRegion, MotionNoise};
use featloc::vo::vo_step;

#[derive(Parser)]
#[command(
    name = "featloc",
    version,
    about = "Localisation against a feature-embedded voxel map"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone, Default)]
struct ConfigArgs {
    /// Experiment config file (`key = value` lines).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override one config key, e.g. `--set voxel_size=0.1`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic world: ground truth, mapping poses, odometry and matches.
    Synth {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out_dir: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write per-frame observed descriptor images (FDESC1).
        #[arg(long)]
        observations: bool,
    },
    /// Build a feature-embedded voxel map (FEMAP1).
    BuildMap {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
        /// KITTI pose file of mapping viewpoints; defaults to the configured passes.
        #[arg(long)]
        poses: Option<PathBuf>,
        #[arg(long)]
        voxel_size: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Render the imagined descriptor view of a map from one pose.
    Imagine {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        map: PathBuf,
        /// Camera-to-world pose as 12 numbers (KITTI row).
        #[arg(long, allow_hyphen_values = true)]
        pose: Option<String>,
        /// KITTI pose file; use with --index.
        #[arg(long)]
        pose_file: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        index: usize,
        #[arg(long)]
        ppm: Option<PathBuf>,
        #[arg(long)]
        fdesc: Option<PathBuf>,
    },
    /// Run the particle filter over a synthetic world or recorded frames.
    Localize {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        map: PathBuf,
        /// Synthetic-world config file, or a list of FDESC1 frame paths.
        #[arg(long)]
        frames: PathBuf,
        /// `internal`, `oracle`, or an odometry file (6 numbers per line).
        #[arg(long, default_value = "internal")]
        vo: String,
        #[arg(long)]
        particles: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Estimated trajectory, KITTI pose lines.
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        diag: Option<PathBuf>,
        /// Prior pose (first line of a KITTI file) for tracking on recorded frames.
        #[arg(long)]
        init_pose: Option<PathBuf>,
    },
    /// Descriptor-quality table over descriptor dimensions, as CSV.
    EvalDesc {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "3,10,32")]
        dims: Vec<usize>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
        /// Dense-matching search half-window in pixels; whole image if omitted.
        #[arg(long)]
        window: Option<u32>,
        #[arg(long, default_value_t = 5)]
        pairs: usize,
    },
    /// Essential-matrix odometry from a matches CSV.
    Vo {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        matches: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Per-stage timing table from a diagnostics CSV.
    Report {
        #[arg(long)]
        diag: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

enum CliError {
    Usage(String),
    Lib(featloc::Error),
}

impl From<featloc::Error> for CliError {
    fn from(e: featloc::Error) -> Self {
        CliError::Lib(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Lib(e.into())
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage: {m}"),
            CliError::Lib(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Lib(e) if e.is_numerical() => 3,
            CliError::Lib(_) => 2,
        }
    }
}

type CliResult<T> = std::result::Result<T, CliError>;

fn load_config(args: &ConfigArgs) -> CliResult<HarnessConfig> {
    let mut cfg = match &args.config {
        Some(path) => HarnessConfig::load(path)?,
        None => HarnessConfig::default(),
    };
    apply_overrides(&mut cfg, &args.overrides)?;
    Ok(cfg)
}

fn apply_overrides(cfg: &mut HarnessConfig, overrides: &[String]) -> CliResult<()> {
    for o in overrides {
        let (k, v) = o
            .split_once('=')
            .ok_or_else(|| CliError::Usage(format!("--set expects KEY=VALUE, got '{o}'")))?;
        cfg.set(k.trim(), v).map_err(|e| CliError::Usage(e.to_string()))?;
    }
    Ok(())
}

fn write_output(path: Option<&Path>, text: &str) -> CliResult<()> {
    match path {
        Some(p) => fs::write(p, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn synth(cfg: HarnessConfig, out_dir: &Path, observations: bool) -> CliResult<()> {
    let world = World::new(cfg.world_spec()?)?;
    let truth = synth_trajectory(&world, &cfg.trajectory_spec())?;
    let mut mapping = Vec::new();
    for spec in cfg.mapping_specs() {
        mapping.extend(synth_trajectory(&world, &spec)?);
    }
    fs::create_dir_all(out_dir)?;
    fs::write(out_dir.join("config.txt"), cfg.to_text())?;
    fs::write(out_dir.join("groundtruth.txt"), format_kitti_poses(&truth))?;
    fs::write(out_dir.join("mapping.txt"), format_kitti_poses(&mapping))?;
    fs::write(
        out_dir.join("odometry.txt"),
        format_twists(&synth_odometry(&world, &truth, &cfg, cfg.seed)),
    )?;
    fs::write(
        out_dir.join("matches.csv"),
        format_matches(&synth_match_sequence(&world, &truth, &cfg, cfg.seed)),
    )?;
    if observations {
        let dir = out_dir.join("frames");
        fs::create_dir_all(&dir)?;
        let mut list = String::new();
        for (t, pose) in truth.iter().enumerate() {
            let seed = featloc::mcl::derive_seed(cfg.seed, 100 + t as u64);
            let (_, desc) = world.observe(world.intrinsics(), pose, featloc::mcl::derive_seed(seed, 13));
            let name = format!("frame_{t:04}.fdesc");
            desc.save_fdesc(dir.join(&name))?;
            list.push_str(&format!("frames/{name}\n"));
        }
        fs::write(out_dir.join("frames.txt"), list)?;
    }
    println!(
        "frames={} mapping_poses={} out_dir={}",
        truth.len(),
        mapping.len(),
        out_dir.display()
    );
    Ok(())
}

fn build_map(cfg: HarnessConfig, out: &Path, poses: Option<&Path>) -> CliResult<()> {
    let world = World::new(cfg.world_spec()?)?;
    let poses = match poses {
        Some(p) => load_kitti_poses(p)?,
        None => {
            let mut all = Vec::new();
            for spec in cfg.mapping_specs() {
                all.extend(synth_trajectory(&world, &spec)?);
            }
            all
        }
    };
    let map = build_map_pipeline(
        &world,
        world.intrinsics(),
        &poses,
        cfg.voxel_size,
        cfg.noise_sigma,
        cfg.world_seed,
    )?;
    map.save(out)?;
    println!(
        "voxels={} poses={} bytes={}",
        map.len(),
        poses.len(),
        map.to_bytes().len()
    );
    Ok(())
}

fn imagine(
    cfg: HarnessConfig,
    map: &Path,
    pose: Option<&str>,
    pose_file: Option<&Path>,
    index: usize,
    ppm: Option<&Path>,
    fdesc: Option<&Path>,
) -> CliResult<()> {
    let pose = match (pose, pose_file) {
        (Some(text), None) => parse_kitti_line(text, 1)?,
        (None, Some(path)) => *load_kitti_poses(path)?.get(index).ok_or_else(|| {
            CliError::Lib(featloc::Error::InvalidArgument(format!(
                "pose index {index} out of range"
            )))
        })?,
        _ => return Err(CliError::Usage("give exactly one of --pose or --pose-file".into())),
    };
    if ppm.is_none() && fdesc.is_none() {
        return Err(CliError::Usage("nothing to write: pass --ppm and/or --fdesc".into()));
    }
    let map = VoxelMap::load(map)?;
    let k = cfg.intrinsics()?;
    let view = render_imagined(&map, &k, &pose);
    if let Some(p) = ppm {
        fs::write(p, view.to_ppm_bytes())?;
    }
    if let Some(p) = fdesc {
        view.descriptors.save_fdesc(p)?;
    }
    println!("valid_pixels={} total_pixels={}", view.valid_count(), k.pixel_count());
    Ok(())
}

/// A frames file is a list of paths when no line looks like `key = value`.
fn is_frame_list(text: &str) -> bool {
    text.lines()
        .map(|l| l.split('#').next().unwrap_or("").trim())
        .filter(|l| !l.is_empty())
        .all(|l| !l.contains('='))
}

#[allow(clippy::too_many_arguments)]
fn localize(
    mut cfg: HarnessConfig,
    overrides: &[String],
    map_path: &Path,
    frames: &Path,
    vo: &str,
    out: &Path,
    diag: Option<&Path>,
    init_pose: Option<&Path>,
) -> CliResult<()> {
    let map = VoxelMap::load(map_path)?;
    let text = fs::read_to_string(frames)?;
    if is_frame_list(&text) {
        let base = frames.parent().unwrap_or(Path::new("."));
        let paths: Vec<PathBuf> = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'))
            .map(|l| base.join(l))
            .collect();
        let odometry = match vo {
            "internal" | "oracle" => {
                return Err(CliError::Usage("recorded frames need an odometry file for --vo".into()))
            }
            path => parse_twists(&fs::read_to_string(path)?)?,
        };
        let k = cfg.intrinsics()?;
        let init = match init_pose {
            Some(p) => {
                let prior = *load_kitti_poses(p)?
                    .first()
                    .ok_or_else(|| CliError::Lib(featloc::Error::InvalidArgument("empty prior pose file".into())))?;
                let (st, sr) = (cfg.init_sigma_t, cfg.init_sigma_r);
                InitRegion::Gaussian {
                    prior,
                    spread: MotionNoise::diagonal([st, st, st, sr, sr, sr])?,
                }
            }
            None => global_region(&World::new(cfg.world_spec()?)?),
        };
        let frames_iter = paths.iter().map(DescriptorImage::load_fdesc);
        let result = localize_sequence(&map, &k, frames_iter, &odometry, &init, &cfg, cfg.seed)?;
        fs::write(out, format_kitti_poses(&result.estimates))?;
        if let Some(d) = diag {
            fs::write(d, diagnostics_csv(&result.rows))?;
        }
        println!("frames={}", result.estimates.len());
        return Ok(());
    }

    // Synthetic world: the frames file is a config layered over --config,
    // then --set overrides and explicit flags already applied by the caller.
    cfg.apply_text(&text)?;
    apply_overrides(&mut cfg, overrides)?;
    match vo {
        "internal" => cfg.vo = VoSource::Internal,
        "oracle" => cfg.vo = VoSource::Oracle,
        _ => {
            return Err(CliError::Usage(
                "synthetic runs take --vo internal or --vo oracle".into(),
            ))
        }
    }
    if (map.voxel_size() - cfg.voxel_size).abs() > 1e-12 || map.descriptor_dim() != cfg.descriptor_dim {
        return Err(CliError::Lib(featloc::Error::InvalidArgument(format!(
            "map (voxel {} m, {} channels) does not match config (voxel {} m, {} channels)",
            map.voxel_size(),
            map.descriptor_dim(),
            cfg.voxel_size,
            cfg.descriptor_dim
        ))));
    }
    let world = World::new(cfg.world_spec()?)?;
    let truth = synth_trajectory(&world, &cfg.trajectory_spec())?;
    let report = run_localization(&world, &map, &truth, &cfg, cfg.seed)?;
    fs::write(out, format_kitti_poses(&report.estimates()))?;
    if let Some(d) = diag {
        fs::write(d, diagnostics_csv(&diagnostic_rows(&report)))?;
    }
    let fmt_opt = |o: Option<usize>| o.map_or("none".to_string(), |v| v.to_string());
    println!(
        "frames={} ate_rmse_m={:.6} rotation_rmse_rad={:.6} baseline_ate_rmse_m={:.6} convergence_frame={} recovery_frames={}",
        report.frames.len(),
        report.ate.translation_rmse,
        report.ate.rotation_rmse,
        report.baseline_ate.translation_rmse,
        fmt_opt(report.convergence_frame),
        fmt_opt(report.recovery_frames),
    );
    Ok(())
}

fn vo(cfg: HarnessConfig, matches: &Path, out: Option<&Path>) -> CliResult<()> {
    let groups = parse_matches(&fs::read_to_string(matches)?)?;
    let k = cfg.intrinsics()?;
    let mut twists = Vec::with_capacity(groups.len());
    for (frame, m) in &groups {
        let vo_cfg = featloc::vo::VoConfig {
            seed: featloc::mcl::derive_seed(cfg.seed, *frame as u64),
            ..cfg.vo_config()
        };
        let step = vo_step(m, &k, &vo_cfg, Some(cfg.speed)).map_err(|e| {
            CliError::Lib(match e {
                featloc::Error::EstimationFailed(msg) => {
                    featloc::Error::EstimationFailed(format!("frame {frame}: {msg}"))
                }
                other => other,
            })
        })?;
        twists.push(step.twist);
    }
    write_output(out, &format_twists(&twists))
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Synth {
            cfg,
            out_dir,
            seed,
            observations,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            synth(c, &out_dir, observations)
        }
        Command::BuildMap {
            cfg,
            out,
            poses,
            voxel_size,
            seed,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(v) = voxel_size {
                c.voxel_size = v;
            }
            if let Some(s) = seed {
                c.world_seed = s;
            }
            build_map(c, &out, poses.as_deref())
        }
        Command::Imagine {
            cfg,
            map,
            pose,
            pose_file,
            index,
            ppm,
            fdesc,
        } => imagine(
            load_config(&cfg)?,
            &map,
            pose.as_deref(),
            pose_file.as_deref(),
            index,
            ppm.as_deref(),
            fdesc.as_deref(),
        ),
        Command::Localize {
            cfg,
            map,
            frames,
            vo,
            particles,
            seed,
            out,
            diag,
            init_pose,
        } => {
            let mut c = load_config(&cfg)?;
            // Explicit flags win over both config layers.
            let mut flags = cfg.overrides.clone();
            if let Some(p) = particles {
                c.particles = p;
                flags.push(format!("particles={p}"));
            }
            if let Some(s) = seed {
                c.seed = s;
                flags.push(format!("seed={s}"));
            }
            localize(
                c,
                &flags,
                &map,
                &frames,
                &vo,
                &out,
                diag.as_deref(),
                init_pose.as_deref(),
            )
        }
        Command::EvalDesc {
            cfg,
            dims,
            out,
            seed,
            window,
            pairs,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            if dims.is_empty() || dims.contains(&0) {
                return Err(CliError::Usage("--dims needs positive dimensions".into()));
            }
            let opts = DescEvalOptions {
                pairs,
                window,
                ..DescEvalOptions::default()
            };
            let rows = dims
                .iter()
                .map(|&d| eval_descriptor_dim(&c, d, &opts, c.seed))
                .collect::<featloc::Result<Vec<_>>>()?;
            write_output(out.as_deref(), &desc_eval_csv(&rows))
        }
        Command::Vo {
            cfg,
            matches,
            out,
            seed,
        } => {
            let mut c = load_config(&cfg)?;
            if let Some(s) = seed {
                c.seed = s;
            }
            vo(c, &matches, out.as_deref())
        }
        Command::Report { diag, out } => {
            let rows = parse_diagnostics_csv(&fs::read_to_string(&diag)?)?;
            if rows.is_empty() {
                return Err(CliError::Lib(featloc::Error::InsufficientData { needed: 1, got: 0 }));
            }
            write_output(out.as_deref(), &timing_table(&rows))
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("featloc: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
