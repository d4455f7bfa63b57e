//! Localisation against a feature-embedded voxel map.
//!
//! Dense descriptors are fused into a sparse voxel grid ([`featmap`]),
//! descriptor views are rendered from candidate poses, and a particle filter
//! ([`mcl`]) driven by visual odometry ([`vo`]) scores those imagined views
//! against live observations.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod descriptor;
pub mod error;
pub mod featmap;
pub mod geometry;
pub mod harness;
pub mod mcl;
pub mod vo;

pub use error::{Error, Result};
pub use geometry::{CameraIntrinsics, Pixel, Pose, Twist};
