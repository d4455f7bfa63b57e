//! Forward-facing ground-vehicle trajectories.

use std::f64::consts::{PI, TAU};
use std::fmt;
use std::str::FromStr;

use super::world::World;
use crate::error::{Error, Result};
use crate::geometry::{Pose, Twist};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrajectoryKind {
    Straight,
    Arc,
    FigureEight,
}

impl FromStr for TrajectoryKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "straight" => Ok(Self::Straight),
            "arc" => Ok(Self::Arc),
            "figure-eight" | "figure8" => Ok(Self::FigureEight),
            other => Err(Error::invalid(format!("unknown trajectory kind '{other}'"))),
        }
    }
}

impl fmt::Display for TrajectoryKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Self::Straight => "straight",
            Self::Arc => "arc",
            Self::FigureEight => "figure-eight",
        })
    }
}

/// Planar path description. `start`/`heading` anchor straight lines; arcs
/// circle `center` counter-clockwise starting at angle `heading`; the
/// figure-eight joins two circles of `radius` that touch at `center`,
/// first counter-clockwise around the right-hand lobe.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectorySpec {
    pub kind: TrajectoryKind,
    pub speed: f64,
    pub dt: f64,
    pub frames: usize,
    pub radius: f64,
    pub center: [f64; 2],
    pub start: [f64; 2],
    pub heading: f64,
    /// Drive the path backwards in time (reverse direction, same footprint).
    pub reverse: bool,
    /// Sideways shift of every position, meters to the left of travel.
    pub lateral_offset: f64,
}

impl TrajectorySpec {
    pub fn figure_eight(speed: f64, dt: f64, frames: usize, radius: f64) -> Self {
        Self {
            kind: TrajectoryKind::FigureEight,
            speed,
            dt,
            frames,
            radius,
            center: [0.0, 0.0],
            start: [0.0, 0.0],
            heading: 0.0,
            reverse: false,
            lateral_offset: 0.0,
        }
    }

    pub fn straight(start: [f64; 2], heading: f64, speed: f64, dt: f64, frames: usize) -> Self {
        Self {
            kind: TrajectoryKind::Straight,
            start,
            heading,
            ..Self::figure_eight(speed, dt, frames, 1.0)
        }
    }

    pub fn arc(center: [f64; 2], radius: f64, speed: f64, dt: f64, frames: usize) -> Self {
        Self {
            kind: TrajectoryKind::Arc,
            center,
            ..Self::figure_eight(speed, dt, frames, radius)
        }
    }

    /// Planar state `(x, y, yaw)` after travelling arc length `s`.
    pub fn state_at(&self, s: f64) -> (f64, f64, f64) {
        let (x, y, yaw) = match self.kind {
            TrajectoryKind::Straight => {
                let (sn, cs) = self.heading.sin_cos();
                (self.start[0] + s * cs, self.start[1] + s * sn, self.heading)
            }
            TrajectoryKind::Arc => {
                let a = self.heading + s / self.radius;
                (
                    self.center[0] + self.radius * a.cos(),
                    self.center[1] + self.radius * a.sin(),
                    a + PI / 2.0,
                )
            }
            TrajectoryKind::FigureEight => {
                let r = self.radius;
                let lap = TAU * r;
                let k = (s / lap).floor();
                let a = (s - k * lap) / r;
                if (k as i64).rem_euclid(2) == 0 {
                    // Right lobe, counter-clockwise from its leftmost point.
                    let phi = PI + a;
                    (
                        self.center[0] + r + r * phi.cos(),
                        self.center[1] + r * phi.sin(),
                        phi + PI / 2.0,
                    )
                } else {
                    // Left lobe, clockwise from its rightmost point.
                    let phi = -a;
                    (
                        self.center[0] - r + r * phi.cos(),
                        self.center[1] + r * phi.sin(),
                        phi - PI / 2.0,
                    )
                }
            }
        };
        let yaw = if self.reverse { yaw + PI } else { yaw };
        let (sn, cs) = yaw.sin_cos();
        let x = x - self.lateral_offset * sn;
        let y = y + self.lateral_offset * cs;
        (x, y, wrap_angle(yaw))
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.speed >= 0.0) || !(self.dt > 0.0) || self.frames == 0 {
            return Err(Error::invalid("speed must be non-negative, dt positive, frames ≥ 1"));
        }
        if self.kind != TrajectoryKind::Straight && !(self.radius > 0.0) {
            return Err(Error::invalid("radius must be positive"));
        }
        Ok(())
    }

    /// Planar states for every frame.
    pub fn states(&self) -> Result<Vec<(f64, f64, f64)>> {
        self.validate()?;
        let total = self.speed * self.dt * (self.frames - 1) as f64;
        Ok((0..self.frames)
            .map(|i| {
                let s = self.speed * self.dt * i as f64;
                self.state_at(if self.reverse { total - s } else { s })
            })
            .collect())
    }
}

pub fn wrap_angle(a: f64) -> f64 {
    let w = (a + PI).rem_euclid(TAU) - PI;
    if w == -PI {
        PI
    } else {
        w
    }
}

/// World-to-camera poses along the path; every position must lie inside
/// the world bounds.
pub fn synth_trajectory(world: &World, spec: &TrajectorySpec) -> Result<Vec<Pose>> {
    let states = spec.states()?;
    if let Some(&(x, y, _)) = states.iter().find(|&&(x, y, _)| !world.contains_xy(x, y)) {
        return Err(Error::invalid(format!(
            "trajectory leaves the world at ({x:.3}, {y:.3})"
        )));
    }
    Ok(states
        .into_iter()
        .map(|(x, y, yaw)| world.vehicle_pose(x, y, yaw))
        .collect())
}

/// `Δ_t` with `pose_t = exp(Δ_t) ∘ pose_{t-1}`; one fewer entry than poses.
pub fn relative_twists(poses: &[Pose]) -> Vec<Twist> {
    poses.windows(2).map(|w| w[1].compose(&w[0].inverse()).log()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn figure_eight_is_continuous() {
        let spec = TrajectorySpec::figure_eight(1.0, 0.01, 2600, 2.0);
        let states = spec.states().unwrap();
        for w in states.windows(2) {
            let step = ((w[1].0 - w[0].0).powi(2) + (w[1].1 - w[0].1).powi(2)).sqrt();
            assert!(step < 0.0101, "jump {step}");
            assert!(wrap_angle(w[1].2 - w[0].2).abs() < 0.006);
        }
        let (x, y, _) = states[0];
        assert!(x.abs() < 1e-12 && y.abs() < 1e-12);
    }

    #[test]
    fn wrap_angle_range() {
        for a in [-7.0, -PI, 0.0, PI, 3.5, 100.0] {
            let w = wrap_angle(a);
            assert!(w > -PI && w <= PI);
            assert!(((a - w) / TAU - ((a - w) / TAU).round()).abs() < 1e-9);
        }
    }

    #[test]
    fn parse_kinds() {
        for k in [
            TrajectoryKind::Straight,
            TrajectoryKind::Arc,
            TrajectoryKind::FigureEight,
        ] {
            assert_eq!(k.to_string().parse::<TrajectoryKind>().unwrap(), k);
        }
        assert!("zigzag".parse::<TrajectoryKind>().is_err());
    }
}
