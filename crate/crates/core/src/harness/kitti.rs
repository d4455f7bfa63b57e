//! KITTI odometry pose files: one camera-to-world `[R | t]` per line as 12
//! row-major numbers.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Pose;

pub fn parse_kitti_line(line: &str, line_no: usize) -> Result<Pose> {
    let values: Vec<f64> = line
        .split_whitespace()
        .map(|tok| {
            tok.parse::<f64>().map_err(|_| Error::Parse {
                line: line_no,
                message: format!("'{tok}' is not a number"),
            })
        })
        .collect::<Result<_>>()?;
    let row: [f64; 12] = values.as_slice().try_into().map_err(|_| Error::Parse {
        line: line_no,
        message: format!("expected 12 numbers, found {}", values.len()),
    })?;
    if row.iter().any(|v| !v.is_finite()) {
        return Err(Error::Parse {
            line: line_no,
            message: "non-finite value".into(),
        });
    }
    Pose::from_kitti_row(&row).map_err(|e| Error::Parse {
        line: line_no,
        message: e.to_string(),
    })
}

/// Parses every non-blank line; line numbers in errors are 1-based.
pub fn parse_kitti_poses(text: &str) -> Result<Vec<Pose>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| parse_kitti_line(l, i + 1))
        .collect()
}

pub fn format_kitti_line(pose: &Pose) -> String {
    let row = pose.to_kitti_row();
    let mut s = String::new();
    for (i, v) in row.iter().enumerate() {
        if i > 0 {
            s.push(' ');
        }
        // Normalise negative zero so output does not depend on rounding paths.
        let v = if *v == 0.0 { 0.0 } else { *v };
        write!(s, "{v:.12e}").expect("write to string");
    }
    s
}

pub fn format_kitti_poses(poses: &[Pose]) -> String {
    poses.iter().map(|p| format_kitti_line(p) + "\n").collect()
}

pub fn load_kitti_poses(path: impl AsRef<Path>) -> Result<Vec<Pose>> {
    parse_kitti_poses(&std::fs::read_to_string(path)?)
}

pub fn save_kitti_poses(path: impl AsRef<Path>, poses: &[Pose]) -> Result<()> {
    std::fs::write(path, format_kitti_poses(poses))?;
    Ok(())
}
