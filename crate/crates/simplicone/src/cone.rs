//! Simplicial cones and the nonsmooth projection equation.
//!
//! A simplicial cone is the image K = A*R^m_+ of the nonnegative orthant
//! under a nonsingular matrix A. Projecting a point z onto K reduces to the
//! nonsmooth equation
//!
//! ```text
//!     (A^T A - I) x^+ + x = A^T z,
//! ```
//!
//! whose unique solution u gives P_K(z) = A u^+ and, through the Moreau
//! decomposition z = P_K(z) + P_{K_polar}(z), the polar component
//! -(A^T)^{-1} u^-. The equation also has an equivalent absolute-value form
//!
//! ```text
//!     (A^T A + I) x + (A^T A - I) |x| = 2 A^T z,
//! ```
//!
//! used by the second Picard iteration. This module holds the cone type, the
//! pointwise vector maps x^+, x^-, |x| and sgn(x^+), both residuals, and the
//! Moreau certificate that validates a candidate fixed point.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::solvers::{run_solver, SolverChoice, StopRule};

/// Relative singular-value cutoff below which a generator matrix is rejected.
pub const DEFAULT_SINGULARITY_TOL: f64 = 1e-12;

/// Entrywise positive part x^+ = max(x, 0).
pub fn positive_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| t.max(0.0))
}

/// Entrywise negative part x^- = max(-x, 0), so that x = x^+ - x^-.
pub fn negative_part(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| (-t).max(0.0))
}

/// Entrywise absolute value |x| = x^+ + x^-.
pub fn abs_part(v: &DVector<f64>) -> DVector<f64> {
    v.abs()
}

/// 0/1 indicator of the strictly positive entries, the diagonal of the
/// generalized Jacobian sgn(x^+) used by the semi-smooth Newton step.
pub fn sign_vector(v: &DVector<f64>) -> DVector<f64> {
    v.map(|t| if t > 0.0 { 1.0 } else { 0.0 })
}

/// A simplicial cone K = A*R^m_+ together with the spectral quantities the
/// solvers reuse on every call.
///
/// Construction validates that A is square, finite and numerically
/// nonsingular, then caches G = A^T A, the deviation ||G - I|| (spectral
/// norm) and the contraction factor max_i |1 - lambda_i| / (1 + lambda_i)
/// over the eigenvalues of G.
#[derive(Debug, Clone)]
pub struct SimplicialCone {
    dim: usize,
    a: DMatrix<f64>,
    gram: DMatrix<f64>,
    gram_norm_dev: f64,
    contraction_c: f64,
}

impl SimplicialCone {
    /// Builds a cone with the default singularity tolerance.
    pub fn new(a: DMatrix<f64>) -> Result<Self> {
        make_cone(a, DEFAULT_SINGULARITY_TOL)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// The generator matrix A.
    pub fn generator(&self) -> &DMatrix<f64> {
        &self.a
    }

    /// The Gram matrix G = A^T A.
    pub fn gram(&self) -> &DMatrix<f64> {
        &self.gram
    }

    /// ||A^T A - I|| in the spectral norm. The Picard 1 guard requires this
    /// to be below 1, the Newton guard below 1/3.
    pub fn gram_norm_dev(&self) -> f64 {
        self.gram_norm_dev
    }

    /// max_i |1 - lambda_i| / (1 + lambda_i) over the eigenvalues of A^T A,
    /// the contraction factor of the Picard 2 map. Always below 1 for a
    /// nonsingular generator.
    pub fn contraction_c(&self) -> f64 {
        self.contraction_c
    }

    /// G - I as an owned matrix, the operator applied to x^+ and |x| inside
    /// the solver loops.
    pub fn gram_minus_identity(&self) -> DMatrix<f64> {
        let mut out = self.gram.clone();
        for i in 0..self.dim {
            out[(i, i)] -= 1.0;
        }
        out
    }

    /// A^T z, the constant term of the nonsmooth equation.
    pub fn adjoint_apply(&self, z: &DVector<f64>) -> DVector<f64> {
        self.a.tr_mul(z)
    }
}

/// Validates A and precomputes the spectral data of G = A^T A.
///
/// Fails with `NonFinite` on NaN or infinite entries, `DimensionMismatch` on
/// a non-square matrix, and `SingularMatrix` when the singular-value ratio
/// sigma_min/sigma_max falls below `tol`.
pub fn make_cone(a: DMatrix<f64>, tol: f64) -> Result<SimplicialCone> {
    if a.nrows() != a.ncols() || a.nrows() == 0 {
        return Err(Error::DimensionMismatch {
            expected: a.nrows().max(1),
            got: a.ncols(),
        });
    }
    if a.iter().any(|t| !t.is_finite()) {
        return Err(Error::NonFinite);
    }
    let svals = a.singular_values();
    let smax = svals.iter().cloned().fold(0.0f64, f64::max);
    let smin = svals.iter().cloned().fold(f64::INFINITY, f64::min);
    let ratio = if smax > 0.0 { smin / smax } else { 0.0 };
    if !(ratio > tol) {
        return Err(Error::SingularMatrix { ratio, tol });
    }

    let gram = a.tr_mul(&a);
    let eig = gram.clone().symmetric_eigenvalues();
    let gram_norm_dev = eig.iter().map(|l| (l - 1.0).abs()).fold(0.0, f64::max);
    let contraction_c = eig
        .iter()
        .map(|l| (1.0 - l).abs() / (1.0 + l))
        .fold(0.0, f64::max);

    Ok(SimplicialCone {
        dim: a.nrows(),
        a,
        gram,
        gram_norm_dev,
        contraction_c,
    })
}

/// Generator of the polar cone K_polar = -(A^T)^{-1} R^m_+.
pub fn polar_generator(cone: &SimplicialCone) -> Result<DMatrix<f64>> {
    let inv = cone
        .a
        .transpose()
        .lu()
        .try_inverse()
        .ok_or(Error::SingularMatrix {
            ratio: 0.0,
            tol: DEFAULT_SINGULARITY_TOL,
        })?;
    Ok(-inv)
}

/// Residual of the nonsmooth equation: (G - I) x^+ + x - A^T z.
pub fn residual_nonsmooth(cone: &SimplicialCone, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let xp = positive_part(x);
    let mut r = &cone.gram * &xp;
    r -= &xp;
    r += x;
    r -= cone.adjoint_apply(z);
    r
}

/// Residual of the absolute-value form: (G + I) x + (G - I) |x| - 2 A^T z.
/// Equals exactly twice the nonsmooth residual since |x| = 2 x^+ - x.
pub fn residual_abs(cone: &SimplicialCone, z: &DVector<f64>, x: &DVector<f64>) -> DVector<f64> {
    let xa = abs_part(x);
    let mut r = &cone.gram * x;
    r += x;
    r += &cone.gram * &xa;
    r -= &xa;
    r -= cone.adjoint_apply(z) * 2.0;
    r
}

/// Maps a fixed point x of the nonsmooth equation to the projection
/// P_K(z) = A x^+.
pub fn recover_projection(cone: &SimplicialCone, x: &DVector<f64>) -> DVector<f64> {
    &cone.a * positive_part(x)
}

/// A projection instance: the cone, the point z to project, an initial
/// iterate, and optionally the exact fixed point for error-based stopping.
#[derive(Debug, Clone)]
pub struct ProjectionProblem {
    cone: Arc<SimplicialCone>,
    z: DVector<f64>,
    x0: DVector<f64>,
    known_solution: Option<DVector<f64>>,
}

impl ProjectionProblem {
    pub fn new(
        cone: impl Into<Arc<SimplicialCone>>,
        z: DVector<f64>,
        x0: DVector<f64>,
    ) -> Result<Self> {
        let cone = cone.into();
        for v in [&z, &x0] {
            if v.len() != cone.dim() {
                return Err(Error::DimensionMismatch {
                    expected: cone.dim(),
                    got: v.len(),
                });
            }
        }
        Ok(ProjectionProblem {
            cone,
            z,
            x0,
            known_solution: None,
        })
    }

    /// Attaches the exact solution u of the nonsmooth equation. Rejects
    /// candidates whose residual exceeds 1e-8 * (1 + ||A^T z||), so a stored
    /// known solution is always trustworthy for error-based stopping.
    pub fn with_known_solution(mut self, u: DVector<f64>) -> Result<Self> {
        if u.len() != self.cone.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.cone.dim(),
                got: u.len(),
            });
        }
        let residual = residual_nonsmooth(&self.cone, &self.z, &u).norm();
        let bound = 1e-8 * (1.0 + self.cone.adjoint_apply(&self.z).norm());
        if residual > bound {
            return Err(Error::InconsistentKnownSolution { residual, bound });
        }
        self.known_solution = Some(u);
        Ok(self)
    }

    pub fn cone(&self) -> &SimplicialCone {
        &self.cone
    }

    pub fn cone_arc(&self) -> Arc<SimplicialCone> {
        Arc::clone(&self.cone)
    }

    pub fn z(&self) -> &DVector<f64> {
        &self.z
    }

    pub fn x0(&self) -> &DVector<f64> {
        &self.x0
    }

    pub fn known_solution(&self) -> Option<&DVector<f64>> {
        self.known_solution.as_ref()
    }
}

/// Moreau-decomposition evidence for a candidate fixed point x:
/// p = A x^+ should be the projection, q = -(A^T)^{-1} x^- the polar
/// component, and the four scalars below should all vanish.
#[derive(Debug, Clone)]
pub struct Certificate {
    /// p = A x^+.
    pub projection: DVector<f64>,
    /// q = -(A^T)^{-1} x^-.
    pub polar_component: DVector<f64>,
    /// ||z - p - q||.
    pub decomposition_residual: f64,
    /// <p, q>, zero exactly when the two components are orthogonal.
    pub complementarity_gap: f64,
    /// Distance of A^{-1} p from the nonnegative orthant (p in K check).
    pub cone_residual: f64,
    /// Distance of -A^T q from the nonnegative orthant (q in K_polar check).
    pub polar_residual: f64,
}

impl Certificate {
    /// True when all three residuals and the absolute complementarity gap
    /// are at most `tol`. The caller picks the scale; a solver converged at
    /// relative tolerance t under the residual rule passes at
    /// 10 t (1 + ||A^T z||).
    pub fn accepted(&self, tol: f64) -> bool {
        self.decomposition_residual <= tol
            && self.complementarity_gap.abs() <= tol
            && self.cone_residual <= tol
            && self.polar_residual <= tol
    }
}

/// Builds the Moreau certificate for a candidate fixed point x. The checks
/// recompute A^{-1} p and -A^T q from scratch rather than reusing x^+ and
/// x^-, so they also detect a corrupted generator.
pub fn certify(cone: &SimplicialCone, z: &DVector<f64>, x: &DVector<f64>) -> Result<Certificate> {
    let singular = || Error::SingularMatrix {
        ratio: 0.0,
        tol: DEFAULT_SINGULARITY_TOL,
    };
    let projection = recover_projection(cone, x);
    let at_lu = cone.a.transpose().lu();
    let polar_component = -at_lu.solve(&negative_part(x)).ok_or_else(singular)?;

    let mut decomp = z.clone();
    decomp -= &projection;
    decomp -= &polar_component;

    let a_inv_p = cone.a.clone().lu().solve(&projection).ok_or_else(singular)?;
    let minus_at_q = -cone.adjoint_apply(&polar_component);

    Ok(Certificate {
        complementarity_gap: projection.dot(&polar_component),
        decomposition_residual: decomp.norm(),
        cone_residual: negative_part(&a_inv_p).norm(),
        polar_residual: negative_part(&minus_at_q).norm(),
        projection,
        polar_component,
    })
}

/// Projects z onto K through the dual identity P_K(z) = z + P_{K_dual}(-z),
/// where the dual cone is generated by (A^T)^{-1}. The inner projection is
/// computed by `solver` from a zero start under the default stop rule.
pub fn dual_projection(
    z: &DVector<f64>,
    cone: &SimplicialCone,
    solver: SolverChoice,
) -> Result<DVector<f64>> {
    let dual_gen = -polar_generator(cone)?;
    let dual_cone = make_cone(dual_gen, DEFAULT_SINGULARITY_TOL)?;
    let x0 = DVector::zeros(cone.dim());
    let prob = ProjectionProblem::new(dual_cone, -z, x0)?;
    let report = run_solver(solver, &prob, &StopRule::default())?;
    if !report.status.is_converged() {
        return Err(Error::DidNotConverge {
            status: report.status.as_str(),
        });
    }
    Ok(z + report.projection)
}
