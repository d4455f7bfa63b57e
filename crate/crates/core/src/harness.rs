//! Synthetic worlds, trajectories, end-to-end runs and trajectory metrics.

mod config;
mod desc_eval;
mod files;
mod kitti;
mod metrics;
mod pipeline;
mod trajectory;
mod world;

pub use config::{HarnessConfig, InitMode, VoSource};
pub use desc_eval::{desc_eval_csv, eval_descriptor_dim, DescEvalOptions, DescEvalRow, DESC_EVAL_HEADER};
pub use files::{format_matches, format_twists, parse_matches, parse_twists, MATCHES_HEADER};
pub use kitti::{
    format_kitti_line, format_kitti_poses, load_kitti_poses, parse_kitti_line, parse_kitti_poses, save_kitti_poses,
};
pub use metrics::{ate_rmse, convergence_frame, pose_error, rms, TimingSummary, TrajectoryError};
pub use pipeline::{
    build_map_from_config, build_map_pipeline, diagnostic_rows, diagnostics_csv, global_region, localize_sequence,
    parse_diagnostics_csv, run_localization, stage_coverage, synth_match_sequence, synth_matches, synth_odometry,
    timing_from_rows, timing_table, vo_only_baseline, DiagnosticRow, Experiment, FrameRecord, RunReport,
    SequenceOutput, StageTiming, DIAGNOSTICS_HEADER,
};
pub use trajectory::{relative_twists, synth_trajectory, wrap_angle, TrajectoryKind, TrajectorySpec};
pub use world::{camera_mount, vehicle_pose, BiasedField, Surface, World, WorldSpec};
