//! Acceptance checks. Each check prints one PASS/FAIL line with the measured
//! numbers; the process exits non-zero if any check fails.

use std::time::{Duration, Instant};

use handeye_core::metrics::ErrorReport;
use handeye_core::se3::{matrix_to_rotvec, rotvec_to_matrix};
use handeye_core::simulate::{apply_gaussian, apply_outliers};
use handeye_core::solvers::{
    alpha_step, dnlo_cost_from_pairs, initial_guess, pair_jacobian, pair_residual, solve_dnl_with, solve_dnlo,
    solve_separable,
};
use handeye_core::trajectory::build_motion_pairs;
use handeye_core::{DnloParams, Extrinsic, RotVec, SelectionStrategy, SolverKind, Trajectory, Transform};
use handeye_harness::config::NoisePoint;
use handeye_harness::dataset::{ground_truths, Scenario};
use handeye_harness::stats::median;
use handeye_harness::sweep::{cmd_sweep, run_sweep, RunRecord, RUNS_FILE, SUMMARY_FILE};
use handeye_harness::validate::validate_noise;
use handeye_harness::ExperimentConfig;
use nalgebra::{Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

const STRATEGIES: [&str; 6] = ["A", "B1", "B5", "B10", "C5", "C10"];

fn strategy(s: &str) -> SelectionStrategy {
    s.parse().unwrap()
}

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

/// Config with `n` trajectories and only the given noise point.
fn single_point_config(n: usize, gaussian: f64, outliers: f64, drift: f64) -> ExperimentConfig {
    let mut c = ExperimentConfig::default();
    c.trajectories = n;
    c.noise.gaussian_sigma2 = vec![gaussian];
    c.noise.outlier_fraction = vec![outliers];
    c.noise.drift_rate = vec![drift];
    c.noise.include_mixed = false;
    c
}

/// Cells of the given config at its last noise point (the non-clean one if
/// present).
fn scenarios_at(config: &ExperimentConfig, pick: impl Fn(&NoisePoint) -> bool) -> Vec<Scenario> {
    let gts = ground_truths(config);
    let points = config.noise.points();
    let (p, point) = points.iter().enumerate().find(|(_, q)| pick(q)).expect("noise point");
    gts.par_iter()
        .enumerate()
        .map(|(k, gt)| Scenario::generate(config, gt, k, p, point))
        .collect()
}

fn median_of(records: &[RunRecord], s: SelectionStrategy, solver: SolverKind, f: fn(&ErrorReport) -> f64) -> f64 {
    let v: Vec<f64> = records
        .iter()
        .filter(|r| r.strategy == s && r.solver == solver)
        .map(|r| f(r.errors.as_ref().expect("run produced an estimate")))
        .collect();
    median(&v)
}

fn exact_recovery() -> Outcome {
    let config = single_point_config(20, 0.0, 0.0, 0.0);
    let scenarios = scenarios_at(&config, |p| p.label == "clean");
    let dnlo = DnloParams::default();
    let mut worst_at: f64 = 0.0;
    let mut worst_ar: f64 = 0.0;
    let mut worst_spread: f64 = 0.0;
    let mut slowest = Duration::ZERO;
    for s in &scenarios {
        for solver in SolverKind::ALL {
            let mut at = Vec::new();
            for st in STRATEGIES {
                let mps = build_motion_pairs(&s.sensor1, &s.sensor2, strategy(st)).unwrap();
                let start = Instant::now();
                let r = solver.solve(&mps, &dnlo).unwrap();
                slowest = slowest.max(start.elapsed());
                let e = ErrorReport::compute(&r.extrinsic, &mps, &s.x_gt);
                worst_at = worst_at.max(e.e_at);
                worst_ar = worst_ar.max(e.e_ar);
                at.push(e.e_at);
            }
            let spread = at.iter().cloned().fold(f64::MIN, f64::max) - at.iter().cloned().fold(f64::MAX, f64::min);
            worst_spread = worst_spread.max(spread);
        }
    }
    outcome(
        worst_at < 1e-6 && worst_ar < 1e-6 && worst_spread < 1e-6 && slowest < Duration::from_secs(5),
        format!(
            "max e_at {worst_at:.2e} m, max e_aR {worst_ar:.2e} rad, strategy spread {worst_spread:.2e} m, slowest solve {:.3} s",
            slowest.as_secs_f64()
        ),
    )
}

/// Minimum of the DNLO objective over the vertices of
/// `{α ∈ [0,1]^n : Σα ≥ d}`.
fn brute_force_alpha(costs: &[f64], c: f64, d: f64) -> (f64, Vec<Vec<f64>>) {
    let n = costs.len();
    let mut vertices: Vec<Vec<f64>> = Vec::new();
    for mask in 0u32..(1 << n) {
        let a: Vec<f64> = (0..n).map(|k| f64::from((mask >> k) & 1)).collect();
        if a.iter().sum::<f64>() >= d {
            vertices.push(a.clone());
        }
        // the weight constraint active, one coordinate strictly inside
        for free in 0..n {
            if (mask >> free) & 1 == 1 {
                continue;
            }
            let rest: f64 = a.iter().sum();
            let v = d - rest;
            if v > 0.0 && v < 1.0 {
                let mut b = a.clone();
                b[free] = v;
                vertices.push(b);
            }
        }
    }
    let best = vertices
        .iter()
        .map(|a| dnlo_cost_from_pairs(costs, a, c))
        .fold(f64::INFINITY, f64::min);
    let argmins = vertices
        .into_iter()
        .filter(|a| dnlo_cost_from_pairs(costs, a, c) == best)
        .collect();
    (best, argmins)
}

fn alpha_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut mismatches = 0;
    for i in 0..200 {
        let n = rng.random_range(1..=10usize);
        let c = 0.01;
        let costs: Vec<f64> = (0..n).map(|_| rng.random_range(0.0..0.03)).collect();
        let d = if i % 2 == 0 {
            rng.random_range(0..=n) as f64
        } else {
            rng.random_range(0.0..n as f64)
        };
        let alpha = alpha_step(&costs, c, d);
        let (best, argmins) = brute_force_alpha(&costs, c, d);
        let value = dnlo_cost_from_pairs(&costs, &alpha, c);
        let feasible = alpha.iter().all(|a| (0.0..=1.0).contains(a)) && alpha.iter().sum::<f64>() >= d - 1e-12;
        if !feasible || value != best || !argmins.contains(&alpha) {
            mismatches += 1;
        }
    }
    let elapsed = start.elapsed();
    outcome(
        mismatches == 0 && elapsed < Duration::from_secs(10),
        format!("{mismatches} mismatches in 200 instances, {:.3} s", elapsed.as_secs_f64()),
    )
}

fn dnlo_infinite_c() -> Outcome {
    let config = single_point_config(10, 1e-3, 0.0, 0.0);
    let scenarios = scenarios_at(&config, |p| p.label != "clean");
    let params = DnloParams {
        c: f64::INFINITY,
        ..DnloParams::default()
    };
    let mut worst: f64 = 0.0;
    for s in &scenarios {
        let mps = build_motion_pairs(&s.sensor1, &s.sensor2, strategy("B5")).unwrap();
        let init = initial_guess(&mps);
        let a = solve_dnl_with(&mps, Some(init), &params.lm).unwrap().extrinsic;
        let b = solve_dnlo(&mps, &params, Some(init)).unwrap().extrinsic;
        let dt = (a.t - b.t).norm();
        let dr = (a.rotation() - b.rotation()).norm();
        worst = worst.max(dt).max(dr);
    }
    outcome(worst < 1e-8, format!("max minimizer difference {worst:.2e} over 10 datasets"))
}

fn outlier_ordering() -> Outcome {
    let start = Instant::now();
    let mut config = single_point_config(20, 0.0, 0.05, 0.0);
    config.strategies = vec![strategy("B1")];
    let scenarios = scenarios_at(&config, |p| p.label != "clean");
    let records = run_sweep(&config, &scenarios);
    let b1 = strategy("B1");
    let at = |s| median_of(&records, b1, s, |e| e.e_at);
    let (dnlo, dnl, sep) = (at(SolverKind::Dnlo), at(SolverKind::Dnl), at(SolverKind::Separable));
    outcome(
        dnlo < dnl && dnlo < sep && start.elapsed() < Duration::from_secs(300),
        format!("median e_at dnlo {dnlo:.4} m, dnl {dnl:.4} m, separable {sep:.4} m"),
    )
}

fn separable_rotation_immunity() -> Outcome {
    let config = single_point_config(20, 0.0, 0.05, 0.0);
    let clean = scenarios_at(&config, |p| p.label == "clean");
    let noisy = scenarios_at(&config, |p| p.label != "clean");
    let mut worst: f64 = 0.0;
    for (c, n) in clean.iter().zip(&noisy) {
        assert!(!n.outliers1.is_empty());
        for st in STRATEGIES {
            let err = |s: &Scenario| {
                let mps = build_motion_pairs(&s.sensor1, &s.sensor2, strategy(st)).unwrap();
                let x = solve_separable(&mps).unwrap().extrinsic;
                ErrorReport::compute(&x, &mps, &s.x_gt).e_ar
            };
            worst = worst.max((err(c) - err(n)).abs());
        }
    }
    outcome(worst < 1e-9, format!("max change in separable e_aR {worst:.2e} rad"))
}

fn gaussian_ordering() -> Outcome {
    let mut config = single_point_config(20, 5e-3, 0.0, 0.0);
    config.strategies = vec![strategy("A"), strategy("B1"), strategy("B10")];
    config.solvers = vec![SolverKind::Dnl, SolverKind::Dnlo];
    let scenarios = scenarios_at(&config, |p| p.label != "clean");
    let records = run_sweep(&config, &scenarios);
    let mut pass = true;
    let mut parts = Vec::new();
    for solver in [SolverKind::Dnl, SolverKind::Dnlo] {
        let at = |s: &str| median_of(&records, strategy(s), solver, |e| e.e_at);
        let (a, b1, b10) = (at("A"), at("B1"), at("B10"));
        pass &= b10 < b1 && a > b10;
        parts.push(format!("{solver}: A {a:.4}, B1 {b1:.4}, B10 {b10:.4}"));
    }
    outcome(pass, format!("median e_at (m) {}", parts.join("; ")))
}

fn mixed_findings() -> Outcome {
    let start = Instant::now();
    let mut config = ExperimentConfig::default();
    config.strategies = vec![strategy("B1"), strategy("B5")];
    config.solvers = vec![SolverKind::Dnlo];
    let scenarios = scenarios_at(&config, |p| p.is_mixed());
    assert_eq!(scenarios.len(), 38);
    let records = run_sweep(&config, &scenarios);
    let m = |s: &str, f: fn(&ErrorReport) -> f64| median_of(&records, strategy(s), SolverKind::Dnlo, f);
    let (at_b1, at_b5) = (m("B1", |e| e.e_at), m("B5", |e| e.e_at));
    let (rt_b1, rt_b5) = (m("B1", |e| e.e_rt), m("B5", |e| e.e_rt));
    outcome(
        at_b5 < at_b1 && rt_b1 < rt_b5 && start.elapsed() < Duration::from_secs(900),
        format!("dnlo median e_at B5 {at_b5:.4} < B1 {at_b1:.4}; median e_rt B1 {rt_b1:.4} < B5 {rt_b5:.4}"),
    )
}

fn noise_realism() -> Outcome {
    let rows = validate_noise(&ExperimentConfig::default());
    let mixed = rows.iter().find(|r| r.noise == "mixed").unwrap();
    outcome(
        (0.15..=0.75).contains(&mixed.mean),
        format!("mean RMS ATE of mixed noise {:.4} m over {} trajectories", mixed.mean, mixed.count),
    )
}

fn numerical_hygiene() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    fn unit_in(rng: &mut ChaCha8Rng, s: f64) -> Vector3<f64> {
        Vector3::from_fn(|_, _| rng.random_range(-s..s))
    }
    let mut worst_jac: f64 = 0.0;
    for _ in 0..100 {
        let theta = unit_in(&mut rng, 1.5);
        let t = unit_in(&mut rng, 2.0);
        let a = Transform::from_rotvec(&RotVec::new(unit_in(&mut rng, 1.0)), unit_in(&mut rng, 3.0));
        let b = Transform::from_rotvec(&RotVec::new(unit_in(&mut rng, 1.0)), unit_in(&mut rng, 3.0));
        let x = Extrinsic::new(RotVec::new(theta), t);
        let jac = pair_jacobian(&x, &a, &b);
        let h = 1e-6;
        let mut fd = jac;
        for k in 0..6 {
            let shifted = |sign: f64| {
                let mut th = theta;
                let mut tt = t;
                if k < 3 {
                    th[k] += sign * h;
                } else {
                    tt[k - 3] += sign * h;
                }
                pair_residual(&Extrinsic::new(RotVec::new(th), tt), &a, &b)
            };
            fd.set_column(k, &((shifted(1.0) - shifted(-1.0)) / (2.0 * h)));
        }
        worst_jac = worst_jac.max((jac - fd).norm() / jac.norm().max(1.0));
    }
    let mut worst_rot: f64 = 0.0;
    for _ in 0..10_000 {
        let axis = unit_in(&mut rng, 1.0).normalize();
        let angle = rng.random_range(0.0..std::f64::consts::PI);
        let r = RotVec::new(axis * angle);
        let m = rotvec_to_matrix(&r);
        let back = matrix_to_rotvec(&m).unwrap();
        let m2 = rotvec_to_matrix(&back);
        worst_rot = worst_rot.max((m - m2).norm());
        let tf = Transform::from_parts(m, Vector3::zeros());
        let q = Transform::from_quaternion_xyzw(Vector3::zeros(), tf.quaternion_xyzw());
        worst_rot = worst_rot.max((q.rotation() - m).norm());
    }
    let mut config = ExperimentConfig::default();
    config.trajectories = 3;
    config.poses_per_trajectory = 100;
    config.noise.gaussian_sigma2 = vec![5e-3];
    config.noise.outlier_fraction = vec![0.05];
    config.noise.drift_rate = vec![0.0];
    let (d1, d2) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    cmd_sweep(&config, d1.path(), None).unwrap();
    cmd_sweep(&config, d2.path(), None).unwrap();
    let same = [RUNS_FILE, SUMMARY_FILE]
        .iter()
        .all(|f| std::fs::read(d1.path().join(f)).unwrap() == std::fs::read(d2.path().join(f)).unwrap());
    outcome(
        worst_jac < 1e-5 && worst_rot < 1e-9 && same,
        format!(
            "jacobian rel. error {worst_jac:.2e}, rotation round trip {worst_rot:.2e}, CSV identical: {same}"
        ),
    )
}

fn zyx_angles(r: &Matrix3<f64>) -> [f64; 3] {
    [
        r[(1, 0)].atan2(r[(0, 0)]),
        (-r[(2, 0)]).asin(),
        r[(2, 1)].atan2(r[(2, 2)]),
    ]
}

fn sample_variance(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (v.len() - 1) as f64
}

fn noise_statistics() -> Outcome {
    let n = 10_000;
    let sigma2 = 5e-3;
    let identity = Trajectory::from_transforms(vec![Transform::identity(); n], 0.1);
    let noisy = apply_gaussian(&identity, sigma2, 10);
    let mut worst: f64 = 0.0;
    let mut check = |values: Vec<f64>, expected: f64| {
        worst = worst.max((sample_variance(&values) / expected - 1.0).abs());
    };
    for axis in 0..3 {
        check(noisy.transforms().map(|t| t.translation()[axis]).collect(), sigma2);
        check(noisy.transforms().map(|t| zyx_angles(t.rotation())[axis]).collect(), 2.0 * sigma2);
    }
    let (jumped, idx) = apply_outliers(&identity, 1.0, 0.02, 11);
    assert_eq!(idx.len(), n);
    for axis in 0..3 {
        check(jumped.transforms().map(|t| t.translation()[axis]).collect(), 0.02);
    }
    outcome(worst < 0.10, format!("largest relative variance deviation {:.2}%", 100.0 * worst))
}

fn main() {
    let checks: [(&str, fn() -> Outcome); 10] = [
        ("1 exact recovery on noiseless data", exact_recovery),
        ("2 alpha update equals vertex enumeration", alpha_oracle),
        ("3 dnlo with c = inf equals dnl", dnlo_infinite_c),
        ("4 outlier robustness ordering", outlier_ordering),
        ("5 separable rotation unaffected by position outliers", separable_rotation_immunity),
        ("6 gaussian-noise strategy ordering", gaussian_ordering),
        ("7 mixed-noise absolute vs relative divergence", mixed_findings),
        ("8 mixed-noise RMS ATE bracket", noise_realism),
        ("9 numerical hygiene", numerical_hygiene),
        ("10 noise generator variances", noise_statistics),
    ];
    let mut failed = 0;
    for (name, check) in checks {
        let start = Instant::now();
        let o = check();
        if !o.pass {
            failed += 1;
        }
        println!(
            "[{}] {name}: {} ({:.1} s)",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!("{} of 10 acceptance checks passed", 10 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
