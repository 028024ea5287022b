use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use handeye_core::simulate::{generate_base_trajectory, GroundTruth};
use handeye_core::trajectory::save_tum;
use handeye_core::{Extrinsic, RotVec, Trajectory, Transform};
use nalgebra::Vector3;

fn handeye(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_handeye")).args(args).output().unwrap()
}

fn simulate(dir: &Path) {
    let out = handeye(&[
        "--set",
        "trajectories=1",
        "--set",
        "poses_per_trajectory=120",
        "simulate",
        "--out",
        dir.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
}

fn value(report: &str, key: &str) -> f64 {
    let line = report.lines().find(|l| l.starts_with(key)).unwrap();
    line.split_whitespace().nth(1).unwrap().parse().unwrap()
}

#[test]
fn calibrates_noiseless_pair_with_every_solver() {
    let dir = tempfile::tempdir().unwrap();
    simulate(dir.path());
    let clean = dir.path().join("traj_000/clean");
    for solver in ["separable", "dnl", "dnlo"] {
        let out = handeye(&[
            "calibrate",
            clean.join("sensor1.tum").to_str().unwrap(),
            clean.join("sensor2.tum").to_str().unwrap(),
            "--strategy",
            "B5",
            "--solver",
            solver,
            "--c",
            "0.01",
            "--d",
            "0.5",
            "--ground-truth",
            clean.join("manifest.json").to_str().unwrap(),
        ]);
        assert_eq!(out.status.code(), Some(0), "{}", String::from_utf8_lossy(&out.stderr));
        let text = String::from_utf8(out.stdout).unwrap();
        assert!(value(&text, "e_at") < 1e-6, "{solver}: {text}");
        assert!(text.contains("quaternion") && text.contains("rotvec"));
    }
}

#[test]
fn missing_file_is_an_input_error_naming_the_path() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("missing.tum");
    let out = handeye(&["calibrate", missing.to_str().unwrap(), missing.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("missing.tum"));
}

#[test]
fn malformed_file_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.tum");
    fs::write(&bad, "0 1 2 3\n").unwrap();
    let out = handeye(&["calibrate", bad.to_str().unwrap(), bad.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.tum"));
}

#[test]
fn single_axis_motion_is_degenerate() {
    let dir = tempfile::tempdir().unwrap();
    let t1 = Trajectory::from_transforms(
        (0..40)
            .map(|k| {
                let k = k as f64;
                Transform::from_parts(
                    RotVec::from_components(0.0, 0.0, 0.1 * k).to_matrix(),
                    Vector3::new(k, 0.0, 0.0),
                )
            })
            .collect(),
        0.1,
    );
    let gt = GroundTruth::new(t1, Extrinsic::new(RotVec::from_components(0.1, 0.2, 0.3), Vector3::new(0.5, 0.0, 0.2)));
    let (p1, p2) = (dir.path().join("a.tum"), dir.path().join("b.tum"));
    save_tum(&gt.clean1, &p1).unwrap();
    save_tum(&gt.clean2, &p2).unwrap();
    let out = handeye(&["calibrate", p1.to_str().unwrap(), p2.to_str().unwrap(), "--solver", "dnl"]);
    assert_eq!(out.status.code(), Some(3), "{}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn csv_output_and_plain_ground_truth() {
    let dir = tempfile::tempdir().unwrap();
    let base = generate_base_trajectory(80, 4);
    let x = Extrinsic::new(RotVec::from_components(0.4, -0.2, 1.0), Vector3::new(0.3, -0.1, 0.8));
    let gt = GroundTruth::new(base, x);
    let (p1, p2, g) = (dir.path().join("a.tum"), dir.path().join("b.tum"), dir.path().join("gt.txt"));
    save_tum(&gt.clean1, &p1).unwrap();
    save_tum(&gt.clean2, &p2).unwrap();
    let q = x.to_transform().quaternion_xyzw();
    fs::write(&g, format!("{} {} {} {} {} {} {}\n", x.t.x, x.t.y, x.t.z, q[0], q[1], q[2], q[3])).unwrap();
    let out = handeye(&[
        "calibrate",
        p1.to_str().unwrap(),
        p2.to_str().unwrap(),
        "--strategy",
        "A",
        "--ground-truth",
        g.to_str().unwrap(),
        "--csv",
    ]);
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let row: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| row[header.iter().position(|h| *h == name).unwrap()];
    assert_eq!(col("strategy"), "A");
    assert!(col("e_at").parse::<f64>().unwrap() < 1e-6);
}

#[test]
fn validate_noise_reports_every_point() {
    let out = handeye(&["--set", "trajectories=2", "--set", "poses_per_trajectory=100", "validate-noise"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.lines().any(|l| l.starts_with("clean") && l.contains("0.000000")));
    assert!(text.contains("mixed"));
    assert!(text.contains("info:"));
}

#[test]
fn bad_override_is_rejected() {
    let out = handeye(&["--set", "no_such_key=1", "validate-noise"]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("no_such_key"));
}

#[test]
fn config_file_and_sweep() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("exp.json");
    fs::write(
        &cfg,
        r#"{"trajectories": 2, "poses_per_trajectory": 60,
            "noise": {"gaussian_sigma2": [0.0], "outlier_fraction": [0.0, 0.05], "drift_rate": [0.0], "include_mixed": false},
            "strategies": ["B1"], "solvers": ["dnlo"]}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = handeye(&["--config", cfg.to_str().unwrap(), "sweep", "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let runs = fs::read_to_string(out_dir.join("runs.csv")).unwrap();
    assert_eq!(runs.lines().count(), 1 + 2 * 2);
    let timings = fs::read_to_string(out_dir.join("timings.csv")).unwrap();
    assert_eq!(timings.lines().count(), 1 + 2 * 2);
    assert!(!runs.lines().next().unwrap().contains("wall"));
}
