//! Descriptor quality metrics: class distance statistics and dense
//! nearest-descriptor matching error.

use super::{euclidean, CorrespondenceSet, DescriptorImage};
use crate::error::{Error, Result};

pub const OVERLAP_BINS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistanceStats {
    pub mean_match: f64,
    pub mean_nonmatch: f64,
    /// Histogram-intersection area of the two normalized distance
    /// histograms, in [0, 1].
    pub overlap: f64,
}

pub type DescriptorPair = (Vec<f64>, Vec<f64>);

pub fn distance_stats(matches: &[DescriptorPair], nonmatches: &[DescriptorPair]) -> Result<DistanceStats> {
    let d = |pairs: &[DescriptorPair]| -> Vec<f64> { pairs.iter().map(|(a, b)| euclidean(a, b)).collect() };
    distance_stats_from_distances(&d(matches), &d(nonmatches))
}

/// Same as [`distance_stats`] but over precomputed distances.
pub fn distance_stats_from_distances(matches: &[f64], nonmatches: &[f64]) -> Result<DistanceStats> {
    if matches.is_empty() || nonmatches.is_empty() {
        return Err(Error::invalid("both match and non-match sets must be non-empty"));
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    let max = matches.iter().chain(nonmatches).fold(0.0f64, |m, &d| m.max(d));
    let histogram = |v: &[f64]| -> Vec<f64> {
        let mut h = vec![0.0; OVERLAP_BINS];
        for &d in v {
            let bin = if max > 0.0 {
                ((d / max * OVERLAP_BINS as f64) as usize).min(OVERLAP_BINS - 1)
            } else {
                0
            };
            h[bin] += 1.0 / v.len() as f64;
        }
        h
    };
    let hm = histogram(matches);
    let hn = histogram(nonmatches);
    let overlap = hm.iter().zip(&hn).map(|(a, b)| a.min(*b)).sum::<f64>().min(1.0);
    Ok(DistanceStats {
        mean_match: mean(matches),
        mean_nonmatch: mean(nonmatches),
        overlap,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MatchError {
    pub rmse_px: f64,
    pub p50: f64,
    pub p95: f64,
    pub count: usize,
}

/// For every ground-truth match, searches `f2` for the pixel whose
/// descriptor is nearest to `f1` read at `p1`.
///
/// The search covers the square of half-width `window` pixels around the
/// pixel containing the true `p2` (`None` searches the whole image). The
/// error is the distance in pixels between the winning pixel and the pixel
/// containing `p2`. Percentiles use the nearest-rank rule.
pub fn dense_match_eval(
    f1: &DescriptorImage,
    f2: &DescriptorImage,
    gt: &CorrespondenceSet,
    window: Option<u32>,
) -> Result<MatchError> {
    if f1.dim() != f2.dim() {
        return Err(Error::invalid("descriptor images differ in dimension"));
    }
    let dim = f1.dim();
    let mut query = vec![0.0; dim];
    let mut errors = Vec::new();
    for pair in gt.matches() {
        f1.sample_bilinear(pair.p1.u, pair.p1.v, &mut query)?;
        let tx = pair.p2.u.floor() as i64;
        let ty = pair.p2.v.floor() as i64;
        let (x0, x1, y0, y1) = match window {
            Some(w) => {
                let w = w as i64;
                (
                    (tx - w).max(0),
                    (tx + w).min(f2.width() as i64 - 1),
                    (ty - w).max(0),
                    (ty + w).min(f2.height() as i64 - 1),
                )
            }
            None => (0, f2.width() as i64 - 1, 0, f2.height() as i64 - 1),
        };
        let mut best = (f64::INFINITY, tx, ty);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let cand = f2.get(x as u32, y as u32);
                let d2: f64 = query.iter().zip(cand).map(|(a, &b)| (a - b as f64).powi(2)).sum();
                if d2 < best.0 {
                    best = (d2, x, y);
                }
            }
        }
        errors.push(((best.1 - tx) as f64).hypot((best.2 - ty) as f64));
    }
    if errors.is_empty() {
        return Ok(MatchError {
            rmse_px: 0.0,
            p50: 0.0,
            p95: 0.0,
            count: 0,
        });
    }
    let rmse = (errors.iter().map(|e| e * e).sum::<f64>() / errors.len() as f64).sqrt();
    errors.sort_by(f64::total_cmp);
    let pct = |p: f64| {
        let rank = ((p * errors.len() as f64).ceil() as usize).clamp(1, errors.len());
        errors[rank - 1]
    };
    Ok(MatchError {
        rmse_px: rmse,
        p50: pct(0.5),
        p95: pct(0.95),
        count: errors.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::descriptor::{Correspondence, Label};
    use crate::geometry::Pixel;

    #[test]
    fn identical_pairs_have_zero_match_mean() {
        let pairs = vec![(vec![1.0, 2.0], vec![1.0, 2.0]); 5];
        let non = vec![(vec![0.0, 0.0], vec![3.0, 4.0])];
        let s = distance_stats(&pairs, &non).unwrap();
        assert_eq!(s.mean_match, 0.0);
        assert_eq!(s.mean_nonmatch, 5.0);
        assert_eq!(s.overlap, 0.0);
    }

    #[test]
    fn disjoint_supports_do_not_overlap() {
        let s = distance_stats_from_distances(&[0.1; 50], &[1.0; 70]).unwrap();
        assert_eq!(s.overlap, 0.0);
        let s = distance_stats_from_distances(&[0.4; 3], &[0.4; 9]).unwrap();
        assert!((s.overlap - 1.0).abs() < 1e-12);
    }

    #[test]
    fn empty_class_rejected() {
        assert!(distance_stats_from_distances(&[], &[1.0]).is_err());
        assert!(distance_stats(&[(vec![0.0], vec![0.0])], &[]).is_err());
    }

    fn one_hot_image(w: u32, h: u32) -> DescriptorImage {
        let n = (w * h) as usize;
        let mut img = DescriptorImage::zeros(w, h, n);
        for i in 0..n {
            img.pixel_mut(i)[i] = 1.0;
        }
        img
    }

    fn center_pairs(w: u32, h: u32) -> CorrespondenceSet {
        let mut pairs = Vec::new();
        for y in 0..h {
            for x in 0..w {
                let p = Pixel::new(x as f64 + 0.5, y as f64 + 0.5);
                pairs.push(Correspondence {
                    p1: p,
                    p2: p,
                    label: Label::Match,
                });
            }
        }
        CorrespondenceSet::from_pairs(pairs)
    }

    #[test]
    fn one_hot_descriptors_match_perfectly() {
        let img = one_hot_image(6, 5);
        let gt = center_pairs(6, 5);
        for window in [Some(0), Some(1), Some(3), None] {
            let e = dense_match_eval(&img, &img, &gt, window).unwrap();
            assert_eq!((e.rmse_px, e.p50, e.p95, e.count), (0.0, 0.0, 0.0, 30));
        }
    }

    #[test]
    fn shifted_field_reports_the_shift() {
        // f2 is f1 shifted right by two pixels; ground truth ignores the shift.
        let f1 = one_hot_image(8, 1);
        let mut f2 = DescriptorImage::zeros(8, 1, 8);
        for x in 0..6u32 {
            f2.get_mut(x + 2, 0).copy_from_slice(f1.get(x, 0));
        }
        let gt = CorrespondenceSet::from_pairs(vec![Correspondence {
            p1: Pixel::new(1.5, 0.5),
            p2: Pixel::new(1.5, 0.5),
            label: Label::Match,
        }]);
        let e = dense_match_eval(&f1, &f2, &gt, None).unwrap();
        assert_eq!(e.rmse_px, 2.0);
        let e = dense_match_eval(&f1, &f2, &gt, Some(1)).unwrap();
        assert!(e.rmse_px <= 1.0);
    }
}
