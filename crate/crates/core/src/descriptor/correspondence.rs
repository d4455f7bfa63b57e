use std::fmt::Write as _;
use std::path::Path;

use nalgebra::Point3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::featmap::DepthImage;
use crate::geometry::{project, CameraIntrinsics, Pixel, Pose};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Label {
    Match,
    NonMatch,
    Ignore,
}

impl Label {
    /// CSV encoding: 1 match, 0 non-match, -1 ignore.
    pub fn code(self) -> i32 {
        match self {
            Label::Match => 1,
            Label::NonMatch => 0,
            Label::Ignore => -1,
        }
    }

    pub fn from_code(code: i32) -> Option<Self> {
        match code {
            1 => Some(Label::Match),
            0 => Some(Label::NonMatch),
            -1 => Some(Label::Ignore),
            _ => None,
        }
    }
}

/// A labelled pixel pair. Ignored pairs may carry NaN coordinates for a
/// view the point does not project into.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Correspondence {
    pub p1: Pixel,
    pub p2: Pixel,
    pub label: Label,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorrespondenceSet {
    pairs: Vec<Correspondence>,
}

impl CorrespondenceSet {
    pub fn from_pairs(pairs: Vec<Correspondence>) -> Self {
        Self { pairs }
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Correspondence> {
        self.pairs.iter()
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    pub fn pairs(&self) -> &[Correspondence] {
        &self.pairs
    }

    pub fn matches(&self) -> impl Iterator<Item = &Correspondence> {
        self.pairs.iter().filter(|p| p.label == Label::Match)
    }

    pub fn count(&self, label: Label) -> usize {
        self.pairs.iter().filter(|p| p.label == label).count()
    }

    /// `u1,v1,u2,v2,label` lines with a header row.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("u1,v1,u2,v2,label\n");
        for p in &self.pairs {
            let _ = writeln!(out, "{},{},{},{},{}", p.p1.u, p.p1.v, p.p2.u, p.p2.v, p.label.code());
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut pairs = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') || (i == 0 && line.starts_with('u')) {
                continue;
            }
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let parse_err = |message: String| Error::Parse { line: i + 1, message };
            if fields.len() != 5 {
                return Err(parse_err(format!("expected 5 fields, got {}", fields.len())));
            }
            let mut coords = [0.0; 4];
            for (c, f) in coords.iter_mut().zip(&fields) {
                *c = f.parse().map_err(|_| parse_err(format!("bad number '{f}'")))?;
            }
            let label = fields[4]
                .parse::<i32>()
                .ok()
                .and_then(Label::from_code)
                .ok_or_else(|| parse_err(format!("bad label '{}'", fields[4])))?;
            pairs.push(Correspondence {
                p1: Pixel::new(coords[0], coords[1]),
                p2: Pixel::new(coords[2], coords[3]),
                label,
            });
        }
        Ok(Self { pairs })
    }

    pub fn save_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_csv())?;
        Ok(())
    }

    pub fn load_csv(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv(&std::fs::read_to_string(path)?)
    }
}

/// A calibrated view with its depth image, used for occlusion rejection.
#[derive(Debug, Clone, Copy)]
pub struct PosedDepth<'a> {
    pub intrinsics: &'a CameraIntrinsics,
    pub pose: &'a Pose,
    pub depth: &'a DepthImage,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CorrespondenceConfig {
    /// Random non-matches drawn per match.
    pub negatives_per_match: usize,
    /// Non-matches closer than this to the true correspondence are redrawn.
    pub exclusion_px: f64,
    /// Allowed gap between projected depth and the depth image, as
    /// `max(abs, rel * depth)`.
    pub occlusion_abs: f64,
    pub occlusion_rel: f64,
    pub seed: u64,
}

impl Default for CorrespondenceConfig {
    fn default() -> Self {
        Self {
            negatives_per_match: 10,
            exclusion_px: 8.0,
            occlusion_abs: 0.05,
            occlusion_rel: 0.01,
            seed: 0,
        }
    }
}

const MAX_NEGATIVE_DRAWS: usize = 1000;

fn visible(q: &Point3<f64>, view: &PosedDepth<'_>, cfg: &CorrespondenceConfig) -> Option<Pixel> {
    let px = project(q, view.intrinsics, view.pose)?;
    let x = px.u.floor() as u32;
    let y = px.v.floor() as u32;
    if x >= view.depth.width() || y >= view.depth.height() {
        return None;
    }
    let d = view.depth.get(x, y);
    if !DepthImage::is_valid_depth(d) {
        return None;
    }
    let tol = cfg.occlusion_abs.max(cfg.occlusion_rel * px.depth);
    (px.depth <= d + tol).then_some(px)
}

/// Co-projects world points into two views. Points visible in both become
/// matches and each spawns random non-matches; the rest are ignored.
pub fn generate_correspondences(
    world_points: &[Point3<f64>],
    view1: &PosedDepth<'_>,
    view2: &PosedDepth<'_>,
    cfg: &CorrespondenceConfig,
) -> CorrespondenceSet {
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let nan = Pixel::new(f64::NAN, f64::NAN);
    let (w2, h2) = (view2.intrinsics.width as f64, view2.intrinsics.height as f64);
    let mut pairs = Vec::new();
    for q in world_points {
        let a = visible(q, view1, cfg);
        let b = visible(q, view2, cfg);
        match (a, b) {
            (Some(p1), Some(p2)) => {
                pairs.push(Correspondence {
                    p1,
                    p2,
                    label: Label::Match,
                });
                for _ in 0..cfg.negatives_per_match {
                    let negative = (0..MAX_NEGATIVE_DRAWS).find_map(|_| {
                        let u = rng.random::<f64>() * w2;
                        let v = rng.random::<f64>() * h2;
                        let far = (u - p2.u).hypot(v - p2.v) >= cfg.exclusion_px;
                        far.then(|| Pixel::new(u, v))
                    });
                    if let Some(n) = negative {
                        pairs.push(Correspondence {
                            p1,
                            p2: n,
                            label: Label::NonMatch,
                        });
                    }
                }
            }
            (a, b) => pairs.push(Correspondence {
                p1: a.unwrap_or(nan),
                p2: b.unwrap_or(nan),
                label: Label::Ignore,
            }),
        }
    }
    CorrespondenceSet { pairs }
}
