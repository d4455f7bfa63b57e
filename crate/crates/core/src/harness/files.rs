//! Plain-text odometry and feature-match files.
//!
//! Odometry: one increment per line, `tx ty tz rx ry rz` (translation then
//! rotation vector). Matches: CSV with header `frame,u1,v1,u2,v2`, where
//! `frame` is the index of the second view.

use std::collections::BTreeMap;
use std::fmt::Write as _;

use crate::error::{Error, Result};
use crate::geometry::Twist;
use crate::vo::Match2D2D;

pub fn parse_twists(text: &str) -> Result<Vec<Twist>> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .map(|(i, l)| {
            let bad = |message: String| Error::Parse { line: i + 1, message };
            let v: Vec<f64> = l
                .split_whitespace()
                .map(|t| {
                    t.parse::<f64>()
                        .ok()
                        .filter(|v| v.is_finite())
                        .ok_or_else(|| bad(format!("bad number '{t}'")))
                })
                .collect::<Result<_>>()?;
            let a: [f64; 6] = v
                .as_slice()
                .try_into()
                .map_err(|_| bad(format!("expected 6 numbers, found {}", v.len())))?;
            Ok(Twist::from_array(a))
        })
        .collect()
}

pub fn format_twists(twists: &[Twist]) -> String {
    let mut s = String::new();
    for t in twists {
        let a = t.to_array();
        let line: Vec<String> = a
            .iter()
            .map(|v| format!("{:.12e}", if *v == 0.0 { 0.0 } else { *v }))
            .collect();
        writeln!(s, "{}", line.join(" ")).expect("write to string");
    }
    s
}

pub const MATCHES_HEADER: &str = "frame,u1,v1,u2,v2";

pub fn format_matches(frames: &[(usize, Vec<Match2D2D>)]) -> String {
    let mut s = String::from(MATCHES_HEADER);
    s.push('\n');
    for (frame, matches) in frames {
        for m in matches {
            writeln!(s, "{frame},{:.6},{:.6},{:.6},{:.6}", m.p1.u, m.p1.v, m.p2.u, m.p2.v).expect("write to string");
        }
    }
    s
}

/// Matches grouped by frame, in ascending frame order.
pub fn parse_matches(text: &str) -> Result<BTreeMap<usize, Vec<Match2D2D>>> {
    let mut out: BTreeMap<usize, Vec<Match2D2D>> = BTreeMap::new();
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == MATCHES_HEADER => {}
        Some((i, _)) => {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("expected header '{MATCHES_HEADER}'"),
            })
        }
        None => return Ok(out),
    }
    for (i, line) in lines {
        let bad = |message: String| Error::Parse { line: i + 1, message };
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        if f.len() != 5 {
            return Err(bad(format!("expected 5 fields, found {}", f.len())));
        }
        let frame: usize = f[0].parse().map_err(|_| bad(format!("bad frame '{}'", f[0])))?;
        let mut v = [0.0; 4];
        for (j, slot) in v.iter_mut().enumerate() {
            *slot = f[j + 1]
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| bad(format!("bad number '{}'", f[j + 1])))?;
        }
        out.entry(frame)
            .or_default()
            .push(Match2D2D::new(v[0], v[1], v[2], v[3]));
    }
    Ok(out)
}
