//! Fixed-point and semi-smooth Newton solvers for the nonsmooth equation.
//!
//! All three methods iterate on x until (G - I) x^+ + x = A^T z, with
//! G = A^T A:
//!
//! - Picard 1: x_{k+1} = -(G - I) x_k^+ + A^T z. Contracts at rate
//!   alpha = ||G - I||, so it is guarded by gram_norm_dev < 1.
//! - Picard 2: (G + I) x_{k+1} = -(G - I) |x_k| + 2 A^T z, the absolute-value
//!   form. Contracts at rate max_i |1 - lambda_i| / (1 + lambda_i) < 1, so it
//!   applies to every nonsingular generator.
//! - Semi-smooth Newton: ((G - I) diag(sgn(x_k^+)) + I) x_{k+1} = A^T z,
//!   guarded by gram_norm_dev < 1/3. Once the sign pattern repeats, the
//!   iterate is exact and the loop stops.
//!
//! Stopping is controlled by a [`StopRule`]: distance to a known solution,
//! the equation residual, or the computable a-posteriori bound
//! alpha/(1 - alpha) * ||x_k - x_{k-1}||.

use std::str::FromStr;

use nalgebra::{Cholesky, DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::cone::{positive_part, recover_projection, residual_nonsmooth, sign_vector, ProjectionProblem};
use crate::error::{Error, Result};

/// Norm threshold beyond which an iterate counts as diverged.
pub const DIVERGENCE_LIMIT: f64 = 1e30;

/// How a solve decides it is done.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopMode {
    /// Stop when ||u - x_k|| < rel_tol * ||u|| against the attached exact
    /// solution. Requires `ProjectionProblem::known_solution`.
    KnownSolution,
    /// Stop when ||(G - I) x^+ + x - A^T z|| <= rel_tol * (1 + ||A^T z||).
    Residual,
    /// Stop when alpha/(1 - alpha) * ||x_k - x_{k-1}|| <= rel_tol * ||x_k||.
    PosterioriBound,
}

/// Stopping policy shared by all solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StopRule {
    pub mode: StopMode,
    pub rel_tol: f64,
    pub max_iters: usize,
    /// When set, a solver whose applicability guard fails iterates anyway
    /// (best-effort mode for experiments) instead of reporting NotApplicable.
    #[serde(default)]
    pub override_guards: bool,
}

impl Default for StopRule {
    fn default() -> Self {
        StopRule {
            mode: StopMode::Residual,
            rel_tol: 1e-10,
            max_iters: 100_000,
            override_guards: false,
        }
    }
}

impl StopRule {
    pub fn residual(rel_tol: f64) -> Self {
        StopRule {
            mode: StopMode::Residual,
            rel_tol,
            ..StopRule::default()
        }
    }

    pub fn known_solution(rel_tol: f64) -> Self {
        StopRule {
            mode: StopMode::KnownSolution,
            rel_tol,
            ..StopRule::default()
        }
    }

    pub fn posteriori(rel_tol: f64) -> Self {
        StopRule {
            mode: StopMode::PosterioriBound,
            rel_tol,
            ..StopRule::default()
        }
    }
}

/// Terminal state of a solve.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolveStatus {
    Converged,
    MaxIters,
    /// The solver's applicability guard failed; no iteration was run.
    NotApplicable,
}

impl SolveStatus {
    pub fn is_converged(self) -> bool {
        matches!(self, SolveStatus::Converged)
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SolveStatus::Converged => "converged",
            SolveStatus::MaxIters => "max_iters",
            SolveStatus::NotApplicable => "not_applicable",
        }
    }
}

impl FromStr for SolveStatus {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "converged" => Ok(SolveStatus::Converged),
            "max_iters" => Ok(SolveStatus::MaxIters),
            "not_applicable" => Ok(SolveStatus::NotApplicable),
            other => Err(Error::Parse(format!("unknown solve status {other:?}"))),
        }
    }
}

/// One of the three iterative methods, used for dispatch in the harness and
/// the CLI.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverChoice {
    Picard1,
    Picard2,
    /// Named "ssnewton" everywhere user-facing, matching `as_str`.
    #[serde(rename = "ssnewton")]
    SsNewton,
}

impl SolverChoice {
    pub const ALL: [SolverChoice; 3] = [
        SolverChoice::Picard1,
        SolverChoice::Picard2,
        SolverChoice::SsNewton,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SolverChoice::Picard1 => "picard1",
            SolverChoice::Picard2 => "picard2",
            SolverChoice::SsNewton => "ssnewton",
        }
    }
}

impl std::fmt::Display for SolverChoice {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SolverChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "picard1" => Ok(SolverChoice::Picard1),
            "picard2" => Ok(SolverChoice::Picard2),
            "ssnewton" => Ok(SolverChoice::SsNewton),
            other => Err(Error::Parse(format!("unknown solver {other:?}"))),
        }
    }
}

/// Outcome of a solve: the fixed-point iterate, the recovered projection and
/// the diagnostics the harness consumes.
#[derive(Debug, Clone)]
pub struct SolveReport {
    /// Final iterate x of the nonsmooth equation.
    pub solution: DVector<f64>,
    /// A x^+ at the final iterate.
    pub projection: DVector<f64>,
    /// Iterations actually run (0 when the guard fails).
    pub iterations: usize,
    /// ||(G - I) x^+ + x - A^T z|| at the final iterate, for every solver and
    /// stop mode.
    pub final_residual_norm: f64,
    /// The method's linear rate: gram_norm_dev for Picard 1, contraction_c
    /// for Picard 2, absent for Newton.
    pub contraction_factor: Option<f64>,
    /// ||u - x_k|| for k = 0..=iterations; recorded only in KnownSolution
    /// mode.
    pub per_iter_errors: Option<Vec<f64>>,
    /// A-posteriori bounds alpha/(1 - alpha) * ||x_k - x_{k-1}|| aligned with
    /// `per_iter_errors[1..]`; recorded only in KnownSolution mode with a
    /// finite rate.
    pub per_iter_bounds: Option<Vec<f64>>,
    pub status: SolveStatus,
    /// Set when the divergence guard ||x_k|| > 1e30 tripped.
    pub diverged: bool,
}

/// Computable error bound of a contraction with factor `alpha` after a step
/// of length `delta`: alpha/(1 - alpha) * delta bounds the remaining
/// distance to the fixed point.
pub fn posteriori_bound(alpha: f64, delta: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&alpha) {
        return Err(Error::InvalidAlpha { alpha });
    }
    Ok(alpha / (1.0 - alpha) * delta)
}

/// Per-iteration stop logic shared by the dense solvers and the monotone
/// fast path. The caller supplies the step length, the new iterate's norm,
/// and closures for the error and residual norms so that only the active
/// mode pays for its measurement.
pub(crate) struct StopEval {
    mode: StopMode,
    rel_tol: f64,
    known_norm: f64,
    resid_scale: f64,
    post_factor: Option<f64>,
    pub errors: Option<Vec<f64>>,
    pub bounds: Option<Vec<f64>>,
    pub last_residual: Option<f64>,
}

impl StopEval {
    /// `resid_scale` is 1 + ||A^T z||; `alpha` the method's contraction
    /// factor when one exists.
    pub fn new(
        stop: &StopRule,
        known: Option<&DVector<f64>>,
        x0: &DVector<f64>,
        resid_scale: f64,
        alpha: Option<f64>,
    ) -> Result<Self> {
        let mut eval = StopEval {
            mode: stop.mode,
            rel_tol: stop.rel_tol,
            known_norm: 0.0,
            resid_scale,
            post_factor: None,
            errors: None,
            bounds: None,
            last_residual: None,
        };
        if let Some(alpha) = alpha {
            if (0.0..1.0).contains(&alpha) {
                eval.post_factor = Some(alpha / (1.0 - alpha));
            }
        }
        match stop.mode {
            StopMode::KnownSolution => {
                let u = known.ok_or(Error::MissingKnownSolution)?;
                eval.known_norm = u.norm();
                eval.errors = Some(vec![(u - x0).norm()]);
                if eval.post_factor.is_some() {
                    eval.bounds = Some(Vec::new());
                }
            }
            StopMode::PosterioriBound => {
                // The bound is only meaningful for a verified contraction.
                let alpha = alpha.unwrap_or(f64::NAN);
                if eval.post_factor.is_none() {
                    return Err(Error::InvalidAlpha { alpha });
                }
            }
            StopMode::Residual => {}
        }
        Ok(eval)
    }

    /// Evaluates the rule at a fresh iterate. Returns true when the solve
    /// should stop.
    pub fn should_stop(
        &mut self,
        step_norm: f64,
        x_new_norm: f64,
        error_norm: impl FnOnce() -> f64,
        residual_norm: impl FnOnce() -> f64,
    ) -> bool {
        if let (Some(bounds), Some(factor)) = (self.bounds.as_mut(), self.post_factor) {
            bounds.push(factor * step_norm);
        }
        match self.mode {
            StopMode::KnownSolution => {
                let err = error_norm();
                self.errors.as_mut().expect("known mode records errors").push(err);
                if self.known_norm > 0.0 {
                    err < self.rel_tol * self.known_norm
                } else {
                    err == 0.0
                }
            }
            StopMode::Residual => {
                let r = residual_norm();
                self.last_residual = Some(r);
                r <= self.rel_tol * self.resid_scale
            }
            StopMode::PosterioriBound => {
                let factor = self.post_factor.expect("checked in new");
                factor * step_norm <= self.rel_tol * x_new_norm
            }
        }
    }
}

/// Shared tail of every dense solve: recovers the projection and assembles
/// the report, reusing the last residual when the stop rule already
/// computed it.
fn finish_report(
    prob: &ProjectionProblem,
    x: DVector<f64>,
    iterations: usize,
    status: SolveStatus,
    diverged: bool,
    contraction_factor: Option<f64>,
    eval: StopEval,
) -> SolveReport {
    let final_residual_norm = match (status, eval.last_residual) {
        (SolveStatus::Converged, Some(r)) => r,
        _ => residual_nonsmooth(prob.cone(), prob.z(), &x).norm(),
    };
    SolveReport {
        projection: recover_projection(prob.cone(), &x),
        solution: x,
        iterations,
        final_residual_norm,
        contraction_factor,
        per_iter_errors: eval.errors,
        per_iter_bounds: eval.bounds,
        status,
        diverged,
    }
}

fn not_applicable(prob: &ProjectionProblem, contraction_factor: Option<f64>) -> SolveReport {
    let x = prob.x0().clone();
    SolveReport {
        projection: recover_projection(prob.cone(), &x),
        final_residual_norm: residual_nonsmooth(prob.cone(), prob.z(), &x).norm(),
        solution: x,
        iterations: 0,
        contraction_factor,
        per_iter_errors: None,
        per_iter_bounds: None,
        status: SolveStatus::NotApplicable,
        diverged: false,
    }
}

/// Picard 1: x_{k+1} = -(G - I) x_k^+ + A^T z. Applicable only when
/// gram_norm_dev < 1, in which case the map is a contraction at that rate.
pub fn picard1_solve(prob: &ProjectionProblem, stop: &StopRule) -> Result<SolveReport> {
    let cone = prob.cone();
    let alpha = cone.gram_norm_dev();
    let guarded = alpha < 1.0;
    if !guarded && !stop.override_guards {
        return Ok(not_applicable(prob, Some(alpha)));
    }
    let gmi = cone.gram_minus_identity();
    let atz = cone.adjoint_apply(prob.z());
    let resid_scale = 1.0 + atz.norm();
    let mut eval = StopEval::new(
        stop,
        prob.known_solution(),
        prob.x0(),
        resid_scale,
        guarded.then_some(alpha),
    )?;

    let known = prob.known_solution();
    let mut x = prob.x0().clone();
    let mut status = SolveStatus::MaxIters;
    let mut diverged = false;
    let mut iterations = stop.max_iters;
    for k in 1..=stop.max_iters {
        let mut x_next = atz.clone();
        x_next.gemv(-1.0, &gmi, &positive_part(&x), 1.0);
        let step = (&x_next - &x).norm();
        x = x_next;
        let x_norm = x.norm();
        if x_norm > DIVERGENCE_LIMIT {
            diverged = true;
            iterations = k;
            break;
        }
        let stop_now = eval.should_stop(
            step,
            x_norm,
            || (known.expect("known mode") - &x).norm(),
            || residual_nonsmooth(cone, prob.z(), &x).norm(),
        );
        if stop_now {
            status = SolveStatus::Converged;
            iterations = k;
            break;
        }
    }
    Ok(finish_report(prob, x, iterations, status, diverged, Some(alpha), eval))
}

/// Picard 2 on the absolute-value form:
/// (G + I) x_{k+1} = -(G - I) |x_k| + 2 A^T z. Applicable to every cone;
/// contracts at rate contraction_c.
pub fn picard2_solve(prob: &ProjectionProblem, stop: &StopRule) -> Result<SolveReport> {
    let cone = prob.cone();
    let alpha = cone.contraction_c();
    let mut gpi = cone.gram().clone();
    for i in 0..cone.dim() {
        gpi[(i, i)] += 1.0;
    }
    let chol = Cholesky::new(gpi).ok_or(Error::FactorizationFailure)?;
    let gmi = cone.gram_minus_identity();
    let atz2 = cone.adjoint_apply(prob.z()) * 2.0;
    let resid_scale = 1.0 + 0.5 * atz2.norm();
    let mut eval = StopEval::new(stop, prob.known_solution(), prob.x0(), resid_scale, Some(alpha))?;

    let known = prob.known_solution();
    let mut x = prob.x0().clone();
    let mut status = SolveStatus::MaxIters;
    let mut diverged = false;
    let mut iterations = stop.max_iters;
    for k in 1..=stop.max_iters {
        let mut rhs = atz2.clone();
        rhs.gemv(-1.0, &gmi, &x.abs(), 1.0);
        let x_next = chol.solve(&rhs);
        let step = (&x_next - &x).norm();
        x = x_next;
        let x_norm = x.norm();
        if x_norm > DIVERGENCE_LIMIT {
            diverged = true;
            iterations = k;
            break;
        }
        let stop_now = eval.should_stop(
            step,
            x_norm,
            || (known.expect("known mode") - &x).norm(),
            || residual_nonsmooth(cone, prob.z(), &x).norm(),
        );
        if stop_now {
            status = SolveStatus::Converged;
            iterations = k;
            break;
        }
    }
    Ok(finish_report(prob, x, iterations, status, diverged, Some(alpha), eval))
}

/// Semi-smooth Newton: ((G - I) diag(sgn(x_k^+)) + I) x_{k+1} = A^T z with a
/// fresh LU factorization each step. Guarded by gram_norm_dev < 1/3; the
/// iteration terminates finitely when the sign pattern stabilizes, since a
/// repeated pattern reproduces the same linear system and iterate.
pub fn ssnewton_solve(prob: &ProjectionProblem, stop: &StopRule) -> Result<SolveReport> {
    let cone = prob.cone();
    let dev = cone.gram_norm_dev();
    if !(dev < 1.0 / 3.0) && !stop.override_guards {
        return Ok(not_applicable(prob, None));
    }
    let gmi = cone.gram_minus_identity();
    let atz = cone.adjoint_apply(prob.z());
    let resid_scale = 1.0 + atz.norm();
    let mut eval = StopEval::new(stop, prob.known_solution(), prob.x0(), resid_scale, None)?;

    let m = cone.dim();
    let known = prob.known_solution();
    let mut x = prob.x0().clone();
    let mut pattern = sign_vector(&x);
    let mut status = SolveStatus::MaxIters;
    let mut diverged = false;
    let mut iterations = stop.max_iters;
    for k in 1..=stop.max_iters {
        let mut jac = DMatrix::identity(m, m);
        for j in 0..m {
            if pattern[j] > 0.0 {
                let mut col = jac.column_mut(j);
                col += gmi.column(j);
            }
        }
        let x_next = jac.lu().solve(&atz).ok_or(Error::LinearSolveFailure { iteration: k })?;
        let step = (&x_next - &x).norm();
        let pattern_next = sign_vector(&x_next);
        let stationary = pattern_next == pattern;
        x = x_next;
        pattern = pattern_next;
        let x_norm = x.norm();
        if x_norm > DIVERGENCE_LIMIT {
            diverged = true;
            iterations = k;
            break;
        }
        let rule_stop = eval.should_stop(
            step,
            x_norm,
            || (known.expect("known mode") - &x).norm(),
            || residual_nonsmooth(cone, prob.z(), &x).norm(),
        );
        if stationary || rule_stop {
            status = SolveStatus::Converged;
            iterations = k;
            break;
        }
    }
    Ok(finish_report(prob, x, iterations, status, diverged, None, eval))
}

/// Dispatches to the named solver.
pub fn run_solver(choice: SolverChoice, prob: &ProjectionProblem, stop: &StopRule) -> Result<SolveReport> {
    match choice {
        SolverChoice::Picard1 => picard1_solve(prob, stop),
        SolverChoice::Picard2 => picard2_solve(prob, stop),
        SolverChoice::SsNewton => ssnewton_solve(prob, stop),
    }
}
