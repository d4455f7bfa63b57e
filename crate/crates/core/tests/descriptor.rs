use featloc::descriptor::{
    contrastive_loss, dense_match_eval, distance_stats, distance_stats_from_distances, generate_correspondences,
    synth_descriptor_field, total_loss, Correspondence, CorrespondenceConfig, CorrespondenceSet, DescriptorField,
    DescriptorImage, FourierField, FrameGeometry, Label, LossConfig, PosedDepth,
};
use featloc::featmap::DepthImage;
use featloc::geometry::{backproject, project};
use featloc::{CameraIntrinsics, Error, Pixel, Pose, Twist};
use nalgebra::{Point3, Vector3};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

fn reference_loss(label: Label, a: &[f64], b: &[f64], m: f64) -> f64 {
    let mut d2 = 0.0;
    for i in 0..a.len() {
        d2 += (a[i] - b[i]) * (a[i] - b[i]);
    }
    let d = d2.sqrt();
    match label {
        Label::Match => d2 / 2.0,
        Label::NonMatch if d < m => (m - d) * (m - d) / 2.0,
        _ => 0.0,
    }
}

fn random_label(rng: &mut ChaCha8Rng) -> Label {
    match rng.random_range(0..3) {
        0 => Label::Match,
        1 => Label::NonMatch,
        _ => Label::Ignore,
    }
}

#[test]
fn loss_examples() {
    let cfg = LossConfig::default();
    assert_eq!(cfg.margin, 0.5);
    let f = [0.3, -0.2, 1.0];
    assert_eq!(contrastive_loss(Label::Match, &f, &f, &cfg).unwrap(), 0.0);
    assert_eq!(contrastive_loss(Label::NonMatch, &[0.0], &[0.7], &cfg).unwrap(), 0.0);
    assert!((contrastive_loss(Label::Match, &[0.0, 0.0], &[0.3, 0.0], &cfg).unwrap() - 0.045).abs() < 1e-15);
    assert!((contrastive_loss(Label::NonMatch, &[0.0], &[0.2], &cfg).unwrap() - 0.045).abs() < 1e-15);
    assert_eq!(contrastive_loss(Label::Ignore, &[0.0], &[9.0], &cfg).unwrap(), 0.0);
}

#[test]
fn loss_dimension_mismatch() {
    let r = contrastive_loss(Label::Match, &[0.0, 1.0], &[0.0], &LossConfig::default());
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
    assert!(LossConfig::new(0.0).is_err());
}

#[test]
fn loss_matches_reference_on_random_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    for _ in 0..1000 {
        let n = rng.random_range(1..40);
        let m = rng.random_range(0.05..2.0);
        let a: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let b: Vec<f64> = (0..n).map(|_| rng.random_range(-0.5..0.5)).collect();
        let label = random_label(&mut rng);
        let got = contrastive_loss(label, &a, &b, &LossConfig::new(m).unwrap()).unwrap();
        assert!((got - reference_loss(label, &a, &b, m)).abs() <= 1e-12 * (1.0 + got.abs()));
    }
}

proptest! {
    #[test]
    fn loss_is_non_negative_and_continuous_at_margin(
        a in prop::collection::vec(-2.0..2.0f64, 4),
        b in prop::collection::vec(-2.0..2.0f64, 4),
        m in 0.01..3.0f64,
    ) {
        let cfg = LossConfig::new(m).unwrap();
        for label in [Label::Match, Label::NonMatch, Label::Ignore] {
            prop_assert!(contrastive_loss(label, &a, &b, &cfg).unwrap() >= 0.0);
        }
        let eps = 1e-9;
        let at = |d: f64| contrastive_loss(Label::NonMatch, &[0.0], &[d], &cfg).unwrap();
        prop_assert!(at(m - eps) < 1e-16 && at(m + eps) == 0.0 && at(m) == 0.0);
    }
}

fn random_image(w: u32, h: u32, dim: usize, rng: &mut ChaCha8Rng) -> DescriptorImage {
    let data = (0..w as usize * h as usize * dim)
        .map(|_| rng.random_range(-1.0f32..1.0))
        .collect();
    DescriptorImage::from_data(w, h, dim, data).unwrap()
}

/// Bilinear interpolation written out per corner weight.
fn reference_sample(img: &DescriptorImage, u: f64, v: f64) -> Vec<f64> {
    let (w, h) = (img.width() as f64, img.height() as f64);
    let x = (u - 0.5).max(0.0).min(w - 1.0);
    let y = (v - 0.5).max(0.0).min(h - 1.0);
    let mut out = vec![0.0; img.dim()];
    for (cx, wx) in [(x.floor(), 1.0 - x.fract()), (x.floor() + 1.0, x.fract())] {
        for (cy, wy) in [(y.floor(), 1.0 - y.fract()), (y.floor() + 1.0, y.fract())] {
            if wx * wy == 0.0 {
                continue;
            }
            let px = img.get(cx.min(w - 1.0) as u32, cy.min(h - 1.0) as u32);
            for (o, &p) in out.iter_mut().zip(px) {
                *o += wx * wy * p as f64;
            }
        }
    }
    out
}

fn random_pairs(n: usize, w: u32, h: u32, rng: &mut ChaCha8Rng) -> Vec<Correspondence> {
    (0..n)
        .map(|_| Correspondence {
            p1: Pixel::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)),
            p2: Pixel::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64)),
            label: random_label(rng),
        })
        .collect()
}

#[test]
fn total_loss_matches_naive_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let f1 = random_image(20, 15, 6, &mut rng);
    let f2 = random_image(20, 15, 6, &mut rng);
    let pairs = random_pairs(100, 20, 15, &mut rng);
    let cfg = LossConfig::default();
    let mut oracle = 0.0;
    for p in &pairs {
        let a = reference_sample(&f1, p.p1.u, p.p1.v);
        let b = reference_sample(&f2, p.p2.u, p.p2.v);
        oracle += reference_loss(p.label, &a, &b, cfg.margin);
    }
    let got = total_loss(&CorrespondenceSet::from_pairs(pairs.clone()), &f1, &f2, &cfg).unwrap();
    assert!((got - oracle).abs() < 1e-9, "{got} vs {oracle}");

    let (left, right) = pairs.split_at(37);
    let a = total_loss(&CorrespondenceSet::from_pairs(left.to_vec()), &f1, &f2, &cfg).unwrap();
    let b = total_loss(&CorrespondenceSet::from_pairs(right.to_vec()), &f1, &f2, &cfg).unwrap();
    assert!((a + b - got).abs() < 1e-9);
}

#[test]
fn total_loss_trivial_cases() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let f1 = random_image(8, 8, 3, &mut rng);
    let f2 = random_image(8, 8, 3, &mut rng);
    let cfg = LossConfig::default();
    let mut pairs = random_pairs(20, 8, 8, &mut rng);
    pairs.iter_mut().for_each(|p| p.label = Label::Ignore);
    assert_eq!(
        total_loss(&CorrespondenceSet::from_pairs(pairs), &f1, &f2, &cfg).unwrap(),
        0.0
    );

    let p = Correspondence {
        p1: Pixel::new(2.5, 3.5),
        p2: Pixel::new(6.5, 1.5),
        label: Label::Match,
    };
    let single = total_loss(&CorrespondenceSet::from_pairs(vec![p]), &f1, &f2, &cfg).unwrap();
    let a: Vec<f64> = f1.get(2, 3).iter().map(|&v| v as f64).collect();
    let b: Vec<f64> = f2.get(6, 1).iter().map(|&v| v as f64).collect();
    assert!((single - contrastive_loss(Label::Match, &a, &b, &cfg).unwrap()).abs() < 1e-12);

    let out = Correspondence {
        p1: Pixel::new(9.0, 1.0),
        p2: Pixel::new(1.0, 1.0),
        label: Label::NonMatch,
    };
    let r = total_loss(&CorrespondenceSet::from_pairs(vec![out]), &f1, &f2, &cfg);
    assert!(matches!(r, Err(Error::InvalidArgument(_))));
}

fn rig() -> (CameraIntrinsics, Pose, Pose) {
    let k = CameraIntrinsics::new(80.0, 80.0, 40.0, 30.0, 80, 60).unwrap();
    let p1 = Pose::identity();
    let p2 = Pose::exp(&Twist::new(
        Vector3::new(-0.3, 0.05, 0.1),
        Vector3::new(0.02, 0.08, -0.01),
    ));
    (k, p1, p2)
}

/// Depth of a fronto-parallel wall at z = 4 in the first camera frame,
/// as seen from `pose`.
fn wall_depth(k: &CameraIntrinsics, pose: &Pose) -> DepthImage {
    let inv = pose.inverse();
    let origin = inv.transform_point(&Point3::origin());
    let mut data = Vec::new();
    for y in 0..k.height {
        for x in 0..k.width {
            let ray = inv.transform_vector(&k.normalize(x as f64 + 0.5, y as f64 + 0.5));
            let s = (4.0 - origin.z) / ray.z;
            data.push(if s > 0.0 { s } else { 0.0 });
        }
    }
    DepthImage::new(k.width, k.height, data).unwrap()
}

#[test]
fn correspondences_on_a_wall_are_consistent() {
    let (k, p1, p2) = rig();
    let d1 = wall_depth(&k, &p1);
    let d2 = wall_depth(&k, &p2);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let points: Vec<Point3<f64>> = (0..300)
        .map(|_| Point3::new(rng.random_range(-2.5..2.5), rng.random_range(-2.0..2.0), 4.0))
        .collect();
    let v1 = PosedDepth {
        intrinsics: &k,
        pose: &p1,
        depth: &d1,
    };
    let v2 = PosedDepth {
        intrinsics: &k,
        pose: &p2,
        depth: &d2,
    };
    let cfg = CorrespondenceConfig::default();
    let set = generate_correspondences(&points, &v1, &v2, &cfg);
    let matches: Vec<_> = set.matches().collect();
    assert!(matches.len() > 100);
    for m in &matches {
        let q1 = backproject(&m.p1, d1.get(m.p1.u as u32, m.p1.v as u32), &k, &p1).unwrap();
        let q2 = backproject(&m.p2, d2.get(m.p2.u as u32, m.p2.v as u32), &k, &p2).unwrap();
        assert!((q1 - q2).norm() < 0.2, "backprojections {q1} vs {q2}");
        let re = project(&q1, &k, &p2).unwrap();
        assert!((re.u - m.p2.u).hypot(re.v - m.p2.v) < 0.5);
    }
    assert!(set.count(Label::NonMatch) <= cfg.negatives_per_match * matches.len());
    for pair in set.iter().filter(|p| p.label == Label::NonMatch) {
        let truth = matches.iter().find(|m| m.p1 == pair.p1).unwrap();
        assert!((pair.p2.u - truth.p2.u).hypot(pair.p2.v - truth.p2.v) >= cfg.exclusion_px);
    }
}

#[test]
fn identical_frames_give_identical_pixels() {
    let (k, p1, _) = rig();
    let d = wall_depth(&k, &p1);
    let v = PosedDepth {
        intrinsics: &k,
        pose: &p1,
        depth: &d,
    };
    let points: Vec<_> = (0..50).map(|i| Point3::new(-1.0 + 0.04 * i as f64, 0.3, 4.0)).collect();
    let set = generate_correspondences(&points, &v, &v, &CorrespondenceConfig::default());
    assert_eq!(set.count(Label::Match), 50);
    for m in set.matches() {
        assert_eq!((m.p1.u, m.p1.v), (m.p2.u, m.p2.v));
    }
}

#[test]
fn point_behind_second_camera_is_ignored() {
    let (k, p1, _) = rig();
    let p2 = Pose::from_translation(Vector3::new(0.0, 0.0, -6.0));
    let d1 = wall_depth(&k, &p1);
    let d2 = DepthImage::filled(k.width, k.height, 1.0);
    let v1 = PosedDepth {
        intrinsics: &k,
        pose: &p1,
        depth: &d1,
    };
    let v2 = PosedDepth {
        intrinsics: &k,
        pose: &p2,
        depth: &d2,
    };
    let set = generate_correspondences(
        &[Point3::new(0.0, 0.0, 4.0)],
        &v1,
        &v2,
        &CorrespondenceConfig::default(),
    );
    assert_eq!(set.len(), 1);
    assert_eq!(set.pairs()[0].label, Label::Ignore);
}

fn flat_frame() -> (CameraIntrinsics, DepthImage) {
    let k = CameraIntrinsics::new(100.0, 100.0, 50.0, 50.0, 100, 100).unwrap();
    (k, DepthImage::filled(100, 100, 3.0))
}

fn distances(a: &DescriptorImage, b: &DescriptorImage) -> Vec<f64> {
    (0..(a.width() * a.height()) as usize)
        .map(|i| {
            a.pixel(i)
                .iter()
                .zip(b.pixel(i))
                .map(|(x, y)| ((x - y) as f64).powi(2))
                .sum::<f64>()
                .sqrt()
        })
        .collect()
}

#[test]
fn noiseless_views_of_a_point_agree() {
    let field = FourierField::new(10, 12, 0.5, 0.5, 2.5, 1);
    let (k, depth) = flat_frame();
    let pose = Pose::identity();
    let frame = FrameGeometry {
        intrinsics: &k,
        pose: &pose,
        depth: &depth,
    };
    let a = synth_descriptor_field(&field, &frame, 0.0, 1);
    let b = synth_descriptor_field(&field, &frame, 0.0, 2);
    assert_eq!(a, b);
    assert_eq!(a, synth_descriptor_field(&field, &frame, 0.0, 1));
}

#[test]
fn match_distance_follows_noise_level() {
    let sigma = 0.05;
    let n = 10;
    let field = FourierField::new(n, 12, 0.5, 0.5, 2.5, 1);
    let (k, depth) = flat_frame();
    let pose = Pose::identity();
    let frame = FrameGeometry {
        intrinsics: &k,
        pose: &pose,
        depth: &depth,
    };
    let a = synth_descriptor_field(&field, &frame, sigma, 10);
    let b = synth_descriptor_field(&field, &frame, sigma, 11);
    let d = distances(&a, &b);
    assert_eq!(d.len(), 10_000);
    let mean = d.iter().sum::<f64>() / d.len() as f64;
    let expected = sigma * ((2 * n - 1) as f64).sqrt();
    assert!((mean / expected - 1.0).abs() < 0.1, "mean {mean} expected {expected}");

    let other = FourierField::new(n, 12, 0.5, 0.5, 2.5, 99);
    let c = synth_descriptor_field(&other, &frame, sigma, 12);
    let non = distances(&a, &c);
    let non_mean = non.iter().sum::<f64>() / non.len() as f64;
    assert!(non_mean >= 5.0 * mean, "non-match {non_mean} vs match {mean}");
}

#[test]
fn field_is_smooth_at_centimetre_scale() {
    let field = FourierField::new(10, 12, 0.5, 0.5, 2.5, 5);
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let (mut a, mut b) = (vec![0.0; 10], vec![0.0; 10]);
    for _ in 0..1000 {
        let p = Point3::new(
            rng.random_range(-5.0..5.0),
            rng.random_range(-5.0..5.0),
            rng.random_range(0.0..3.0),
        );
        let dir = Vector3::new(
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
            rng.random::<f64>() - 0.5,
        )
        .normalize();
        field.eval(&p, &mut a);
        field.eval(&(p + dir * 0.01), &mut b);
        let d = featloc::descriptor::euclidean(&a, &b);
        assert!(d < 0.1);
        assert!(d <= field.lipschitz_bound() * 0.01 + 1e-12);
    }
}

fn gaussian_pdf(x: f64, mu: f64, s: f64) -> f64 {
    (-(x - mu).powi(2) / (2.0 * s * s)).exp() / (s * (2.0 * std::f64::consts::PI).sqrt())
}

#[test]
fn overlap_matches_gaussian_intersection() {
    let (m1, s1, m2, s2) = (1.0, 0.2, 1.6, 0.3);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let a: Vec<f64> = Normal::new(m1, s1)
        .unwrap()
        .sample_iter(&mut rng)
        .take(200_000)
        .collect();
    let b: Vec<f64> = Normal::new(m2, s2)
        .unwrap()
        .sample_iter(&mut rng)
        .take(200_000)
        .collect();
    let stats = distance_stats_from_distances(&a, &b).unwrap();

    let steps = 200_000;
    let (lo, hi) = (-2.0, 5.0);
    let h = (hi - lo) / steps as f64;
    let analytic: f64 = (0..steps)
        .map(|i| {
            let x = lo + (i as f64 + 0.5) * h;
            gaussian_pdf(x, m1, s1).min(gaussian_pdf(x, m2, s2)) * h
        })
        .sum();
    assert!(
        (stats.overlap - analytic).abs() < 0.02,
        "{} vs {analytic}",
        stats.overlap
    );
    assert!((stats.mean_match - m1).abs() < 0.01 && (stats.mean_nonmatch - m2).abs() < 0.01);
}

#[test]
fn distance_stats_trivial_cases() {
    let same = vec![(vec![0.5, 0.5], vec![0.5, 0.5]); 4];
    let far = vec![(vec![0.0, 0.0], vec![1.0, 0.0]); 4];
    let s = distance_stats(&same, &far).unwrap();
    assert_eq!(s.mean_match, 0.0);
    let s = distance_stats_from_distances(&[0.1; 10], &[1.0; 10]).unwrap();
    assert_eq!(s.overlap, 0.0);
    assert!(matches!(distance_stats(&[], &far), Err(Error::InvalidArgument(_))));
}

fn grid_matches(w: u32, h: u32, shift: (i32, i32)) -> CorrespondenceSet {
    let mut pairs = Vec::new();
    for y in 0..h as i32 {
        for x in 0..w as i32 {
            let (x2, y2) = (x + shift.0, y + shift.1);
            if x2 < 0 || y2 < 0 || x2 >= w as i32 || y2 >= h as i32 {
                continue;
            }
            pairs.push(Correspondence {
                p1: Pixel::new(x as f64 + 0.5, y as f64 + 0.5),
                p2: Pixel::new(x2 as f64 + 0.5, y2 as f64 + 0.5),
                label: Label::Match,
            });
        }
    }
    CorrespondenceSet::from_pairs(pairs)
}

#[test]
fn dense_match_identity_is_exact() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f = random_image(16, 12, 8, &mut rng);
    let e = dense_match_eval(&f, &f, &grid_matches(16, 12, (0, 0)), None).unwrap();
    assert_eq!((e.rmse_px, e.p50, e.p95, e.count), (0.0, 0.0, 0.0, 192));
}

#[test]
fn one_hot_descriptors_match_under_any_window() {
    let (w, h) = (8u32, 6u32);
    let n = (w * h) as usize;
    let one_hot = |shift: (i32, i32)| {
        let mut img = DescriptorImage::zeros(w, h, n);
        for y in 0..h as i32 {
            for x in 0..w as i32 {
                let (sx, sy) = (x - shift.0, y - shift.1);
                let id = (sy.rem_euclid(h as i32) * w as i32 + sx.rem_euclid(w as i32)) as usize;
                img.get_mut(x as u32, y as u32)[id] = 1.0;
            }
        }
        img
    };
    let shift = (2, 1);
    let f1 = one_hot((0, 0));
    let f2 = one_hot(shift);
    let gt = grid_matches(w, h, shift);
    for window in [Some(0), Some(1), Some(3), None] {
        let e = dense_match_eval(&f1, &f2, &gt, window).unwrap();
        assert_eq!(e.rmse_px, 0.0, "window {window:?}");
    }
}

#[test]
fn fdesc_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let f = random_image(7, 5, 3, &mut rng);
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("f.fdesc");
    f.save_fdesc(&path).unwrap();
    assert_eq!(DescriptorImage::load_fdesc(&path).unwrap(), f);
    let bytes = f.to_fdesc_bytes();
    assert_eq!(&bytes[..8], b"FDESC1\0\0");
    assert!(matches!(
        DescriptorImage::from_fdesc_bytes(&bytes[..bytes.len() - 2]),
        Err(Error::Format { .. })
    ));
}

#[test]
fn correspondence_csv_round_trip() {
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let set = CorrespondenceSet::from_pairs(random_pairs(30, 10, 10, &mut rng));
    let back = CorrespondenceSet::from_csv(&set.to_csv()).unwrap();
    assert_eq!(back.len(), 30);
    for (a, b) in set.iter().zip(back.iter()) {
        assert_eq!(a.label, b.label);
        assert!((a.p1.u - b.p1.u).abs() < 1e-9 && (a.p2.v - b.p2.v).abs() < 1e-9);
    }
}
