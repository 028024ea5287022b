//! Extrinsic estimation from a [`MotionPairSet`].
//!
//! Three solvers share one parameterization, `X = [θ, t]` with `θ` a rotation
//! vector:
//!
//! * [`solve_separable`]: rotation by Kabsch alignment of the rotation vectors
//!   of `A` onto those of `B`, then translation by linear least squares.
//! * [`solve_dnl`]: Levenberg-Marquardt on `Σ ‖A X − X B‖²_F`.
//! * [`solve_dnlo`]: the same cost with per-pair weights `α ∈ [0, 1]`, a
//!   constant penalty `c` for every rejected pair and a floor `d` on `Σ α`.
//!   Solved by alternating an exact `α` update with a weighted LM run.
//!
//! All solvers are deterministic; summation over pairs is sequential.

use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector, Matrix3, Matrix4, Matrix6, SMatrix, SVector, Vector3, Vector6};
use thiserror::Error;

use crate::align::kabsch_rotation;
use crate::se3::{right_jacobian, skew, RotVec, Transform};
use crate::trajectory::{motion_sufficiency, MotionPairSet};

type Residual = SVector<f64, 12>;
type PairJacobian = SMatrix<f64, 12, 6>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("degenerate motion: rotation axes span fewer than two directions (second singular value {second_singular_value:.3e})")]
    DegenerateMotion { second_singular_value: f64 },
    #[error("need at least 2 motion pairs, got {0}")]
    TooFewPairs(usize),
    #[error("minimum weight sum d = {d} exceeds the number of pairs {pairs}")]
    InfeasibleD { d: f64, pairs: usize },
    #[error("invalid solver parameters: {0}")]
    InvalidParams(String),
}

/// The sensor-to-sensor transform `X`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Extrinsic {
    pub theta: RotVec,
    pub t: Vector3<f64>,
}

impl Default for Extrinsic {
    fn default() -> Self {
        Extrinsic::identity()
    }
}

impl Extrinsic {
    pub fn new(theta: RotVec, t: Vector3<f64>) -> Self {
        Extrinsic { theta, t }
    }

    pub fn identity() -> Self {
        Extrinsic::new(RotVec::zero(), Vector3::zeros())
    }

    pub fn from_transform(x: &Transform) -> Self {
        Extrinsic::new(x.rotvec(), *x.translation())
    }

    pub fn to_transform(&self) -> Transform {
        Transform::from_rotvec(&self.theta, self.t)
    }

    pub fn rotation(&self) -> Matrix3<f64> {
        self.theta.to_matrix()
    }

    fn params(&self) -> Vector6<f64> {
        let r = self.theta.vector();
        Vector6::new(r.x, r.y, r.z, self.t.x, self.t.y, self.t.z)
    }

    fn from_params(p: &Vector6<f64>) -> Self {
        Extrinsic::new(
            RotVec::from_components(p[0], p[1], p[2]),
            Vector3::new(p[3], p[4], p[5]),
        )
    }
}

impl fmt::Display for Extrinsic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.to_transform().fmt(f)
    }
}

/// Levenberg-Marquardt controls.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LmOptions {
    pub initial_damping: f64,
    pub damping_increase: f64,
    pub damping_decrease: f64,
    pub max_iterations: usize,
    /// Relative cost decrease below which an accepted step ends the run.
    pub cost_tolerance: f64,
    /// Relative parameter change below which an accepted step ends the run.
    pub step_tolerance: f64,
    /// Absolute cost at which the residuals are considered exactly zero.
    pub cost_floor: f64,
    /// Damping above which no descent is possible at working precision.
    pub max_damping: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        LmOptions {
            initial_damping: 1e-3,
            damping_increase: 10.0,
            damping_decrease: 3.0,
            max_iterations: 200,
            cost_tolerance: 1e-12,
            step_tolerance: 1e-12,
            cost_floor: 1e-26,
            max_damping: 1e12,
        }
    }
}

/// Floor `d` on the DNLO weight sum.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MinWeight {
    /// Absolute number of pairs.
    Count(f64),
    /// Proportion of |S|.
    Fraction(f64),
}

impl MinWeight {
    pub fn resolve(&self, pairs: usize) -> f64 {
        match *self {
            MinWeight::Count(d) => d,
            MinWeight::Fraction(f) => f * pairs as f64,
        }
    }

    /// Values in `(0, 1)` are fractions of |S|, anything else a count.
    pub fn from_cli_value(v: f64) -> Self {
        if v > 0.0 && v < 1.0 {
            MinWeight::Fraction(v)
        } else {
            MinWeight::Count(v)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DnloParams {
    /// Squared-residual threshold separating inliers from outliers.
    pub c: f64,
    pub d: MinWeight,
    pub max_outer_iters: usize,
    pub convergence_tol: f64,
    pub lm: LmOptions,
}

impl Default for DnloParams {
    fn default() -> Self {
        DnloParams {
            c: 0.01,
            d: MinWeight::Fraction(0.5),
            max_outer_iters: 50,
            convergence_tol: 1e-10,
            lm: LmOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SolveResult {
    pub extrinsic: Extrinsic,
    /// Per-pair weights; all ones except for DNLO.
    pub alpha: Vec<f64>,
    pub cost: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Solver identifiers used by the CLI and experiment configs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SolverKind {
    Separable,
    Dnl,
    Dnlo,
}

impl SolverKind {
    pub const ALL: [SolverKind; 3] = [SolverKind::Separable, SolverKind::Dnl, SolverKind::Dnlo];

    /// Runs the solver with its default initialization.
    pub fn solve(&self, mps: &MotionPairSet, dnlo: &DnloParams) -> Result<SolveResult, SolverError> {
        match self {
            SolverKind::Separable => solve_separable(mps),
            SolverKind::Dnl => solve_dnl_with(mps, None, &dnlo.lm),
            SolverKind::Dnlo => solve_dnlo(mps, dnlo, None),
        }
    }
}

impl fmt::Display for SolverKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SolverKind::Separable => "separable",
            SolverKind::Dnl => "dnl",
            SolverKind::Dnlo => "dnlo",
        })
    }
}

impl FromStr for SolverKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "separable" => Ok(SolverKind::Separable),
            "dnl" => Ok(SolverKind::Dnl),
            "dnlo" => Ok(SolverKind::Dnlo),
            other => Err(format!("unknown solver {other:?} (expected separable, dnl or dnlo)")),
        }
    }
}

/// `M = A [θ,t]_T − [θ,t]_T B`; the bottom row is identically zero.
pub fn residual_matrix(x: &Extrinsic, a: &Transform, b: &Transform) -> Matrix4<f64> {
    let xh = x.to_transform().to_homogeneous();
    a.to_homogeneous() * xh - xh * b.to_homogeneous()
}

fn residual_with_rotation(r: &Matrix3<f64>, t: &Vector3<f64>, a: &Transform, b: &Transform) -> Residual {
    let rot = a.rotation() * r - r * b.rotation();
    let trans = a.rotation() * t + a.translation() - r * b.translation() - t;
    let mut out = Residual::zeros();
    for i in 0..3 {
        for j in 0..3 {
            out[3 * i + j] = rot[(i, j)];
        }
        out[9 + i] = trans[i];
    }
    out
}

/// Residual vector of one pair: row-major rotation block, then translation.
pub fn pair_residual(x: &Extrinsic, a: &Transform, b: &Transform) -> SVector<f64, 12> {
    residual_with_rotation(&x.rotation(), &x.t, a, b)
}

/// Analytic Jacobian of [`pair_residual`] with respect to `(θ, t)`.
pub fn pair_jacobian(x: &Extrinsic, a: &Transform, b: &Transform) -> SMatrix<f64, 12, 6> {
    let r = x.rotation();
    let jr = right_jacobian(&x.theta.vector());
    let ra = a.rotation();
    let rb = b.rotation();
    let tb = b.translation();
    let mut jac = PairJacobian::zeros();
    for k in 0..3 {
        let w = skew(&jr.column(k).into_owned());
        let dr = r * w;
        let drot = ra * dr - dr * rb;
        let dtrans = -(dr * tb);
        for i in 0..3 {
            for j in 0..3 {
                jac[(3 * i + j, k)] = drot[(i, j)];
            }
            jac[(9 + i, k)] = dtrans[i];
        }
    }
    let dt = ra - Matrix3::identity();
    for i in 0..3 {
        for j in 0..3 {
            jac[(9 + i, 3 + j)] = dt[(i, j)];
        }
    }
    jac
}

/// Squared Frobenius norm of every pair's residual matrix.
pub fn pair_costs(x: &Extrinsic, mps: &MotionPairSet) -> Vec<f64> {
    let r = x.rotation();
    mps.iter()
        .map(|(a, b)| residual_with_rotation(&r, &x.t, a, b).norm_squared())
        .collect()
}

/// `Σ ‖M‖²_F` over all pairs.
pub fn dnl_cost(x: &Extrinsic, mps: &MotionPairSet) -> f64 {
    pair_costs(x, mps).iter().sum()
}

/// `Σ α ‖M‖² + (1 − α) c`; terms with `α = 1` contribute no penalty so that
/// `c = ∞` is well defined.
pub fn dnlo_cost_from_pairs(costs: &[f64], alpha: &[f64], c: f64) -> f64 {
    costs
        .iter()
        .zip(alpha)
        .map(|(&r, &a)| {
            let kept = if a > 0.0 { a * r } else { 0.0 };
            let penalty = if a < 1.0 { (1.0 - a) * c } else { 0.0 };
            kept + penalty
        })
        .sum()
}

pub fn dnlo_cost(x: &Extrinsic, mps: &MotionPairSet, alpha: &[f64], c: f64) -> f64 {
    dnlo_cost_from_pairs(&pair_costs(x, mps), alpha, c)
}

/// Exact minimizer of `Σ α_k (r_k − c)` over `{0 ≤ α ≤ 1, Σ α ≥ d}`.
///
/// Pairs with `r ≤ c` get weight 1, the rest 0. If the sum falls short of `d`
/// the rejected pairs with the smallest excess `r − c` are raised in turn;
/// the last one raised receives the fractional remainder.
pub fn alpha_step(costs: &[f64], c: f64, d: f64) -> Vec<f64> {
    let mut alpha: Vec<f64> = costs.iter().map(|&r| if r <= c { 1.0 } else { 0.0 }).collect();
    let mut total: f64 = alpha.iter().sum();
    if total >= d {
        return alpha;
    }
    let mut rejected: Vec<usize> = (0..costs.len()).filter(|&k| alpha[k] == 0.0).collect();
    rejected.sort_by(|&i, &j| costs[i].total_cmp(&costs[j]).then(i.cmp(&j)));
    for k in rejected {
        let need = d - total;
        if need <= 0.0 {
            break;
        }
        let w = need.min(1.0);
        alpha[k] = w;
        total += w;
    }
    alpha
}

fn check_motion(mps: &MotionPairSet) -> Result<(), SolverError> {
    if mps.len() < 2 {
        return Err(SolverError::TooFewPairs(mps.len()));
    }
    let diag = motion_sufficiency(mps);
    if diag.degenerate {
        return Err(SolverError::DegenerateMotion {
            second_singular_value: diag.axis_singular_values[1],
        });
    }
    Ok(())
}

/// Separable baseline: Kabsch on rotation vectors, then stacked
/// `(R_A − I) t = R_X t_B − t_A`.
pub fn solve_separable(mps: &MotionPairSet) -> Result<SolveResult, SolverError> {
    check_motion(mps)?;
    let theta_a: Vec<Vector3<f64>> = mps.motions_a().iter().map(|a| a.rotvec().vector()).collect();
    let theta_b: Vec<Vector3<f64>> = mps.motions_b().iter().map(|b| b.rotvec().vector()).collect();
    let r = kabsch_rotation(theta_a.iter().zip(theta_b.iter()));

    let n = mps.len();
    let mut lhs = DMatrix::<f64>::zeros(3 * n, 3);
    let mut rhs = DVector::<f64>::zeros(3 * n);
    for (k, (a, b)) in mps.iter().enumerate() {
        let block = a.rotation() - Matrix3::identity();
        lhs.view_mut((3 * k, 0), (3, 3)).copy_from(&block);
        let v = r * b.translation() - a.translation();
        rhs.rows_mut(3 * k, 3).copy_from(&v);
    }
    let qr = lhs.qr();
    let qtb = qr.q().transpose() * &rhs;
    let t = qr
        .r()
        .solve_upper_triangular(&qtb)
        .ok_or(SolverError::DegenerateMotion {
            second_singular_value: 0.0,
        })?;
    let extrinsic = Extrinsic::new(
        Transform::from_parts(r, Vector3::zeros()).rotvec(),
        Vector3::new(t[0], t[1], t[2]),
    );
    Ok(SolveResult {
        cost: dnl_cost(&extrinsic, mps),
        alpha: vec![1.0; n],
        extrinsic,
        iterations: 1,
        converged: true,
    })
}

/// Separable estimate when the motion is observable, identity otherwise.
pub fn initial_guess(mps: &MotionPairSet) -> Extrinsic {
    match solve_separable(mps) {
        Ok(res)
            if res.extrinsic.t.iter().all(|v| v.is_finite())
                && res.extrinsic.theta.vector().iter().all(|v| v.is_finite()) =>
        {
            res.extrinsic
        }
        _ => Extrinsic::identity(),
    }
}

struct LmOutcome {
    extrinsic: Extrinsic,
    cost: f64,
    iterations: usize,
    converged: bool,
}

fn weighted_cost(x: &Extrinsic, mps: &MotionPairSet, weights: &[f64]) -> f64 {
    let r = x.rotation();
    mps.iter()
        .zip(weights)
        .filter(|(_, &w)| w > 0.0)
        .map(|((a, b), &w)| w * residual_with_rotation(&r, &x.t, a, b).norm_squared())
        .sum()
}

fn normal_equations(x: &Extrinsic, mps: &MotionPairSet, weights: &[f64]) -> (Matrix6<f64>, Vector6<f64>) {
    let r = x.rotation();
    let mut h = Matrix6::zeros();
    let mut g = Vector6::zeros();
    for ((a, b), &w) in mps.iter().zip(weights) {
        if w <= 0.0 {
            continue;
        }
        let res = residual_with_rotation(&r, &x.t, a, b);
        let jac = pair_jacobian(x, a, b);
        let jt = jac.transpose();
        h += (jt * jac) * w;
        g += (jt * res) * w;
    }
    (h, g)
}

/// Weighted Levenberg-Marquardt on `Σ w_k ‖M_k‖²`. Accepted steps strictly
/// decrease the cost.
fn levenberg_marquardt(
    mps: &MotionPairSet,
    weights: &[f64],
    init: Extrinsic,
    opts: &LmOptions,
) -> LmOutcome {
    let mut x = init;
    let mut cost = weighted_cost(&x, mps, weights);
    let mut lambda = opts.initial_damping;
    let mut iterations = 0;

    if !(cost > opts.cost_floor) {
        return LmOutcome {
            extrinsic: x,
            cost,
            iterations,
            converged: true,
        };
    }
    let (mut h, mut g) = normal_equations(&x, mps, weights);

    while iterations < opts.max_iterations {
        iterations += 1;
        let diag_floor = 1e-12 * (h.trace() / 6.0).max(f64::MIN_POSITIVE);
        let mut damped = h;
        for i in 0..6 {
            damped[(i, i)] += lambda * h[(i, i)].max(diag_floor);
        }
        let step = match damped.cholesky() {
            Some(ch) => ch.solve(&(-g)),
            None => {
                lambda *= opts.damping_increase;
                if lambda > opts.max_damping {
                    break;
                }
                continue;
            }
        };
        let p = x.params();
        let candidate = Extrinsic::from_params(&(p + step));
        let candidate_cost = weighted_cost(&candidate, mps, weights);

        if candidate_cost < cost {
            let decrease = cost - candidate_cost;
            let step_small = step.norm() <= opts.step_tolerance * (p.norm() + opts.step_tolerance);
            x = candidate;
            cost = candidate_cost;
            lambda /= opts.damping_decrease;
            if cost <= opts.cost_floor || decrease <= opts.cost_tolerance * (cost + decrease) || step_small {
                return LmOutcome {
                    extrinsic: x,
                    cost,
                    iterations,
                    converged: true,
                };
            }
            (h, g) = normal_equations(&x, mps, weights);
        } else {
            lambda *= opts.damping_increase;
            if lambda > opts.max_damping {
                // no descent left at working precision
                return LmOutcome {
                    extrinsic: x,
                    cost,
                    iterations,
                    converged: true,
                };
            }
        }
    }
    LmOutcome {
        extrinsic: x,
        cost,
        iterations,
        converged: false,
    }
}

/// DNL with default LM options; `init = None` uses [`initial_guess`].
pub fn solve_dnl(mps: &MotionPairSet, init: Option<Extrinsic>) -> Result<SolveResult, SolverError> {
    solve_dnl_with(mps, init, &LmOptions::default())
}

pub fn solve_dnl_with(
    mps: &MotionPairSet,
    init: Option<Extrinsic>,
    opts: &LmOptions,
) -> Result<SolveResult, SolverError> {
    check_motion(mps)?;
    let init = init.unwrap_or_else(|| initial_guess(mps));
    let weights = vec![1.0; mps.len()];
    let out = levenberg_marquardt(mps, &weights, init, opts);
    Ok(SolveResult {
        extrinsic: out.extrinsic,
        alpha: weights,
        cost: out.cost,
        iterations: out.iterations,
        converged: out.converged,
    })
}

/// DNLO by alternating minimization. Both half-steps are non-increasing in
/// the objective, so the outer cost sequence is monotone.
pub fn solve_dnlo(
    mps: &MotionPairSet,
    params: &DnloParams,
    init: Option<Extrinsic>,
) -> Result<SolveResult, SolverError> {
    check_motion(mps)?;
    let n = mps.len();
    let d = params.d.resolve(n);
    if !(params.c > 0.0) {
        return Err(SolverError::InvalidParams(format!("c must be positive, got {}", params.c)));
    }
    if !(d >= 0.0) {
        return Err(SolverError::InvalidParams(format!("d must be non-negative, got {d}")));
    }
    if d > n as f64 {
        return Err(SolverError::InfeasibleD { d, pairs: n });
    }

    let mut x = init.unwrap_or_else(|| initial_guess(mps));
    let mut alpha = alpha_step(&pair_costs(&x, mps), params.c, d);
    let mut cost = dnlo_cost(&x, mps, &alpha, params.c);
    let mut iterations = 0;
    let mut converged = false;

    for _ in 0..params.max_outer_iters {
        let lm = levenberg_marquardt(mps, &alpha, x, &params.lm);
        iterations += lm.iterations;
        x = lm.extrinsic;
        let costs = pair_costs(&x, mps);
        let new_alpha = alpha_step(&costs, params.c, d);
        let new_cost = dnlo_cost_from_pairs(&costs, &new_alpha, params.c);
        let unchanged = new_alpha == alpha;
        let delta = (cost - new_cost).abs();
        alpha = new_alpha;
        cost = new_cost;
        // Unchanged weights: the next X-step would re-solve the same problem.
        // Changed weights at equal cost: cycling between ties.
        if unchanged || delta <= params.convergence_tol * (1.0 + cost) {
            converged = lm.converged;
            break;
        }
    }
    Ok(SolveResult {
        extrinsic: x,
        alpha,
        cost,
        iterations,
        converged,
    })
}
