use std::fs;
use std::path::Path;
use std::process::{Command, Output};

const SMALL: &str = "frames = 12\nparticles = 40\nmapping_offsets = 0\nvoxel_size = 0.2\n";

fn featloc(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_featloc"))
        .args(args)
        .current_dir(dir)
        .output()
        .expect("run featloc")
}

fn ok(args: &[&str], dir: &Path) -> Output {
    let out = featloc(args, dir);
    assert!(
        out.status.success(),
        "featloc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn code(args: &[&str], dir: &Path) -> i32 {
    featloc(args, dir).status.code().expect("exit code")
}

fn workspace() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("small.cfg"), SMALL).unwrap();
    dir
}

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap_or_else(|e| panic!("{name}: {e}"))
}

#[test]
fn help_and_version_exit_zero() {
    let dir = workspace();
    assert_eq!(code(&["--help"], dir.path()), 0);
    assert_eq!(code(&["--version"], dir.path()), 0);
    assert_eq!(code(&["localize", "--help"], dir.path()), 0);
}

#[test]
fn usage_errors_exit_one() {
    let dir = workspace();
    let d = dir.path();
    assert_eq!(code(&[], d), 1);
    assert_eq!(code(&["frobnicate"], d), 1);
    assert_eq!(code(&["build-map"], d), 1);
    assert_eq!(code(&["build-map", "--out", "m.femap", "--set", "voxel_size"], d), 1);
    assert_eq!(code(&["build-map", "--out", "m.femap", "--set", "no_such_key=1"], d), 1);
    assert_eq!(code(&["eval-desc", "--dims", "0"], d), 1);
}

#[test]
fn data_errors_exit_two() {
    let dir = workspace();
    let d = dir.path();
    fs::write(d.join("garbage.femap"), b"not a map").unwrap();
    assert_eq!(
        code(
            &[
                "imagine",
                "--map",
                "garbage.femap",
                "--pose",
                "1 0 0 0 0 1 0 0 0 0 1 0",
                "--ppm",
                "x.ppm"
            ],
            d
        ),
        2
    );
    assert_eq!(
        code(
            &[
                "imagine",
                "--map",
                "missing.femap",
                "--pose",
                "1 0 0 0 0 1 0 0 0 0 1 0",
                "--ppm",
                "x.ppm"
            ],
            d
        ),
        2
    );
    fs::write(d.join("bad.diag"), "frame,n_eff\n1,2\n").unwrap();
    assert_eq!(code(&["report", "--diag", "bad.diag"], d), 2);
    fs::write(d.join("short.txt"), "1 0 0 0 0 1 0 0 0 0 1\n").unwrap();
    assert_eq!(
        code(
            &[
                "build-map",
                "--config",
                "small.cfg",
                "--poses",
                "short.txt",
                "--out",
                "m.femap"
            ],
            d
        ),
        2
    );
}

#[test]
fn failed_estimation_exits_three() {
    let dir = workspace();
    let d = dir.path();
    // uniformly scattered pairs carry no epipolar structure
    let mut csv = String::from("frame,u1,v1,u2,v2\n");
    let mut state = 12345u64;
    let mut next = || {
        state = state
            .wrapping_mul(6364136223846793005)
            .wrapping_add(1442695040888963407);
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    for _ in 0..120 {
        let (a, b, c, e) = (next() * 64.0, next() * 48.0, next() * 64.0, next() * 48.0);
        csv.push_str(&format!("1,{a:.4},{b:.4},{c:.4},{e:.4}\n"));
    }
    fs::write(d.join("noise.csv"), csv).unwrap();
    assert_eq!(code(&["vo", "--matches", "noise.csv"], d), 3);
}

#[test]
fn synthetic_pipeline_round_trip() {
    let dir = workspace();
    let d = dir.path();
    ok(
        &["synth", "--config", "small.cfg", "--out-dir", "world", "--observations"],
        d,
    );
    for f in [
        "config.txt",
        "groundtruth.txt",
        "mapping.txt",
        "odometry.txt",
        "matches.csv",
        "frames.txt",
    ] {
        assert!(d.join("world").join(f).exists(), "missing {f}");
    }
    let truth = String::from_utf8(read(d, "world/groundtruth.txt")).unwrap();
    assert_eq!(truth.lines().count(), 12);

    ok(&["build-map", "--config", "small.cfg", "--out", "map.femap"], d);
    ok(
        &[
            "build-map",
            "--config",
            "small.cfg",
            "--poses",
            "world/mapping.txt",
            "--out",
            "map2.femap",
        ],
        d,
    );
    assert!(read(d, "map2.femap").starts_with(b"FEMAP1"));

    let first = truth.lines().next().unwrap();
    ok(
        &[
            "imagine",
            "--map",
            "map.femap",
            "--pose",
            first,
            "--ppm",
            "view.ppm",
            "--fdesc",
            "view.fdesc",
        ],
        d,
    );
    assert!(read(d, "view.ppm").starts_with(b"P6"));
    ok(
        &[
            "imagine",
            "--map",
            "map.femap",
            "--pose-file",
            "world/groundtruth.txt",
            "--index",
            "3",
            "--ppm",
            "v3.ppm",
        ],
        d,
    );

    let out = ok(
        &[
            "localize",
            "--config",
            "small.cfg",
            "--map",
            "map.femap",
            "--frames",
            "small.cfg",
            "--out",
            "est.txt",
            "--diag",
            "diag.csv",
        ],
        d,
    );
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.contains("ate_rmse_m="), "{summary}");
    assert_eq!(String::from_utf8(read(d, "est.txt")).unwrap().lines().count(), 12);

    ok(
        &[
            "localize",
            "--config",
            "small.cfg",
            "--map",
            "map.femap",
            "--frames",
            "world/frames.txt",
            "--vo",
            "world/odometry.txt",
            "--init-pose",
            "world/groundtruth.txt",
            "--out",
            "rec.txt",
        ],
        d,
    );
    assert_eq!(String::from_utf8(read(d, "rec.txt")).unwrap().lines().count(), 12);

    let vo_out = ok(&["vo", "--config", "small.cfg", "--matches", "world/matches.csv"], d);
    assert_eq!(String::from_utf8(vo_out.stdout).unwrap().lines().count(), 11);

    let table = ok(&["report", "--diag", "diag.csv"], d);
    let table = String::from_utf8(table.stdout).unwrap();
    assert!(table.contains("Likelihood per particle"));
    assert!(table.contains("ms/particle"));
    assert!(table.contains(" ± "));
}

#[test]
fn reruns_are_byte_identical() {
    let dir = workspace();
    let d = dir.path();
    for run in ["a", "b"] {
        ok(
            &[
                "synth",
                "--config",
                "small.cfg",
                "--out-dir",
                &format!("w{run}"),
                "--seed",
                "9",
            ],
            d,
        );
        ok(
            &["build-map", "--config", "small.cfg", "--out", &format!("{run}.femap")],
            d,
        );
        ok(
            &[
                "localize",
                "--config",
                "small.cfg",
                "--map",
                &format!("{run}.femap"),
                "--frames",
                "small.cfg",
                "--seed",
                "3",
                "--out",
                &format!("{run}.txt"),
            ],
            d,
        );
        ok(
            &[
                "eval-desc",
                "--dims",
                "3,5",
                "--pairs",
                "2",
                "--window",
                "8",
                "--out",
                &format!("{run}.csv"),
            ],
            d,
        );
        ok(
            &[
                "vo",
                "--matches",
                &format!("w{run}/matches.csv"),
                "--out",
                &format!("{run}.vo"),
            ],
            d,
        );
        ok(
            &[
                "imagine",
                "--map",
                &format!("{run}.femap"),
                "--pose-file",
                &format!("w{run}/groundtruth.txt"),
                "--index",
                "5",
                "--ppm",
                &format!("{run}.ppm"),
                "--fdesc",
                &format!("{run}.fdesc"),
            ],
            d,
        );
    }
    for f in ["groundtruth.txt", "mapping.txt", "odometry.txt", "matches.csv"] {
        assert_eq!(read(d, &format!("wa/{f}")), read(d, &format!("wb/{f}")), "{f}");
    }
    for ext in ["femap", "txt", "csv", "vo", "ppm", "fdesc"] {
        assert_eq!(read(d, &format!("a.{ext}")), read(d, &format!("b.{ext}")), "{ext}");
    }
    let csv = String::from_utf8(read(d, "a.csv")).unwrap();
    assert!(csv.starts_with("dim,mean_match,mean_nonmatch,overlap,rmse_px,p50_px,p95_px,matches\n"));
    assert_eq!(csv.lines().count(), 3);
}
