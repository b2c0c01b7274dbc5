//! Brute-force verification oracle and problem restatements.
//!
//! At the fixed point of (G - I) x^+ + x = A^T z, each coordinate is either
//! nonnegative (active in x^+) or nonpositive. Enumerating all 2^m sign
//! patterns and solving the linear system each pattern induces finds the
//! solution by exhaustion, independently of the iterative solvers. The same
//! fixed point is also a KKT point of the nonnegative least-squares program
//! min ½||z - A v||^2 over v >= 0 and a solution of the LCP with
//! Q = A^T A, b = -A^T z; the exports here let external LCP/QP codes check
//! our answers.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use crate::cone::{recover_projection, residual_nonsmooth, SimplicialCone};
use crate::error::{Error, Result};

/// Enumeration is exponential in m; beyond this limit the oracle refuses.
pub const MAX_ENUM_DIM: usize = 20;

/// Admissibility slack for a candidate pattern, relative to the candidate's
/// own magnitude: coordinates inside the pattern may dip to -eps, outside
/// may rise to +eps.
const PATTERN_EPS_REL: f64 = 1e-9;

/// Solution found by exhaustive sign-pattern search.
#[derive(Debug, Clone)]
pub struct OracleSolution {
    /// Fixed point of the nonsmooth equation.
    pub x: DVector<f64>,
    /// A x^+.
    pub projection: DVector<f64>,
    /// Bitmask of the accepted pattern; bit i set means x_i was taken
    /// positive.
    pub pattern: u32,
    /// Nonsmooth residual norm of the accepted candidate.
    pub residual_norm: f64,
}

/// Solves the nonsmooth equation by enumerating all 2^m sign patterns in
/// parallel. Each pattern P induces ((G - I) diag(P) + I) x = A^T z; a
/// candidate is admissible when its coordinates respect the pattern up to a
/// relative slack. Among admissible candidates the smallest residual wins,
/// with the pattern id breaking ties, so the result is deterministic under
/// any thread schedule.
pub fn sign_enumeration_solve(cone: &SimplicialCone, z: &DVector<f64>) -> Result<OracleSolution> {
    let m = cone.dim();
    if m > MAX_ENUM_DIM {
        return Err(Error::DimensionTooLarge {
            dim: m,
            limit: MAX_ENUM_DIM,
        });
    }
    let gmi = cone.gram_minus_identity();
    let atz = cone.adjoint_apply(z);

    let best = (0u32..1u32 << m)
        .into_par_iter()
        .filter_map(|mask| {
            let mut jac = DMatrix::identity(m, m);
            for j in 0..m {
                if mask & (1 << j) != 0 {
                    let mut col = jac.column_mut(j);
                    col += gmi.column(j);
                }
            }
            let x = jac.lu().solve(&atz)?;
            let eps = PATTERN_EPS_REL * (1.0 + x.amax());
            for j in 0..m {
                let inside = mask & (1 << j) != 0;
                if inside && x[j] < -eps {
                    return None;
                }
                if !inside && x[j] > eps {
                    return None;
                }
            }
            let residual = residual_nonsmooth(cone, z, &x).norm();
            Some((residual, mask, x))
        })
        .min_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));

    let (residual_norm, pattern, x) = best.ok_or(Error::NoPatternAccepted)?;
    Ok(OracleSolution {
        projection: recover_projection(cone, &x),
        x,
        pattern,
        residual_norm,
    })
}

/// The projection problem restated as a linear complementarity problem:
/// find v >= 0 with Q v + b >= 0 and v^T (Q v + b) = 0, where v = x^+ of the
/// fixed point. The constant c makes ½ v^T Q v + b^T v + c the QP objective.
#[derive(Debug, Clone)]
pub struct LcpInstance {
    pub q: DMatrix<f64>,
    pub b: DVector<f64>,
    pub c: f64,
}

/// Exports Q = A^T A, b = -A^T z, c = z^T z / 2.
pub fn lcp_export(cone: &SimplicialCone, z: &DVector<f64>) -> LcpInstance {
    LcpInstance {
        q: cone.gram().clone(),
        b: -cone.adjoint_apply(z),
        c: z.dot(z) / 2.0,
    }
}

/// Componentwise evidence that v solves an LCP: the most negative entries of
/// v and w = Q v + b, and the complementarity product v^T w.
#[derive(Debug, Clone, Copy)]
pub struct LcpResidual {
    pub v_min: f64,
    pub w_min: f64,
    pub gap: f64,
}

impl LcpResidual {
    /// True when both feasibility defects stay above -tol and the gap within
    /// tol of zero.
    pub fn ok(&self, tol: f64) -> bool {
        self.v_min >= -tol && self.w_min >= -tol && self.gap.abs() <= tol
    }
}

/// Measures how well v solves the instance.
pub fn lcp_check(instance: &LcpInstance, v: &DVector<f64>) -> LcpResidual {
    let w = &instance.q * v + &instance.b;
    LcpResidual {
        v_min: v.min(),
        w_min: w.min(),
        gap: v.dot(&w),
    }
}

/// The nonnegative least-squares objective ½||z - A v||^2 at a candidate v.
/// Equals ½ v^T Q v + b^T v + c of the exported LCP data exactly.
pub fn qp_objective(cone: &SimplicialCone, z: &DVector<f64>, v: &DVector<f64>) -> f64 {
    let mut r = z.clone();
    r.gemv(-1.0, cone.generator(), v, 1.0);
    0.5 * r.norm_squared()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::{positive_part, ProjectionProblem};
    use crate::solvers::{picard2_solve, StopRule};
    use approx::assert_relative_eq;

    fn dvec(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    fn monotone_cone(m: usize) -> SimplicialCone {
        SimplicialCone::new(crate::monotone::monotone_generator(m)).unwrap()
    }

    #[test]
    fn orthant_solution_is_the_point_itself() {
        let cone = SimplicialCone::new(DMatrix::identity(2, 2)).unwrap();
        let sol = sign_enumeration_solve(&cone, &dvec(&[1.0, -2.0])).unwrap();
        assert_relative_eq!(sol.x, dvec(&[1.0, -2.0]), epsilon = 1e-14);
        assert_relative_eq!(sol.projection, dvec(&[1.0, 0.0]), epsilon = 1e-14);
        assert_eq!(sol.pattern, 0b01);
    }

    #[test]
    fn scalar_cone_solution() {
        let cone = SimplicialCone::new(DMatrix::from_element(1, 1, 1.2)).unwrap();
        let sol = sign_enumeration_solve(&cone, &dvec(&[1.2])).unwrap();
        assert_relative_eq!(sol.x[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(sol.projection[0], 1.2, epsilon = 1e-14);
    }

    #[test]
    fn oracle_matches_picard2_on_the_monotone_cone() {
        let cone = monotone_cone(5);
        let z = DVector::from_fn(5, |i, _| (i as f64 * 1.7).sin() * 2.0);
        let sol = sign_enumeration_solve(&cone, &z).unwrap();
        let prob = ProjectionProblem::new(cone, z, DVector::zeros(5)).unwrap();
        let report = picard2_solve(&prob, &StopRule::residual(1e-13)).unwrap();
        assert_relative_eq!(sol.x, report.solution, epsilon = 1e-9);
    }

    #[test]
    fn dimension_limit_is_enforced() {
        let cone = SimplicialCone::new(DMatrix::identity(21, 21)).unwrap();
        let err = sign_enumeration_solve(&cone, &DVector::zeros(21)).unwrap_err();
        assert!(matches!(err, Error::DimensionTooLarge { dim: 21, limit: 20 }));
    }

    #[test]
    fn lcp_export_scalar_values() {
        let cone = SimplicialCone::new(DMatrix::from_element(1, 1, 1.2)).unwrap();
        let lcp = lcp_export(&cone, &dvec(&[1.0]));
        assert_relative_eq!(lcp.q[(0, 0)], 1.44, epsilon = 1e-15);
        assert_relative_eq!(lcp.b[0], -1.2, epsilon = 1e-15);
        assert_relative_eq!(lcp.c, 0.5, epsilon = 1e-15);
    }

    #[test]
    fn lcp_check_accepts_the_positive_part_of_the_fixed_point() {
        let cone = monotone_cone(4);
        let z = dvec(&[0.5, -1.0, 2.0, 0.3]);
        let sol = sign_enumeration_solve(&cone, &z).unwrap();
        let lcp = lcp_export(&cone, &z);
        let check = lcp_check(&lcp, &positive_part(&sol.x));
        assert!(check.ok(1e-8), "{check:?}");
    }

    #[test]
    fn lcp_check_rejects_an_infeasible_candidate() {
        let cone = SimplicialCone::new(DMatrix::identity(2, 2)).unwrap();
        let lcp = lcp_export(&cone, &dvec(&[1.0, 1.0]));
        let check = lcp_check(&lcp, &dvec(&[-1.0, 0.0]));
        assert!(!check.ok(1e-8));
    }

    #[test]
    fn qp_objective_matches_the_lcp_quadratic_form() {
        let cone = monotone_cone(3);
        let z = dvec(&[1.0, -0.5, 0.25]);
        let v = dvec(&[0.2, 0.0, 1.5]);
        let lcp = lcp_export(&cone, &z);
        let quad = 0.5 * v.dot(&(&lcp.q * &v)) + lcp.b.dot(&v) + lcp.c;
        assert_relative_eq!(qp_objective(&cone, &z, &v), quad, max_relative = 1e-12);
    }

    #[test]
    fn qp_minimum_sits_at_the_oracle_projection() {
        let cone = monotone_cone(4);
        let z = dvec(&[2.0, -1.0, 0.7, 0.1]);
        let sol = sign_enumeration_solve(&cone, &z).unwrap();
        let vstar = positive_part(&sol.x);
        let best = qp_objective(&cone, &z, &vstar);
        // Any feasible perturbation can only increase the objective.
        for k in 0..4 {
            let mut v = vstar.clone();
            v[k] += 0.05;
            assert!(qp_objective(&cone, &z, &v) >= best - 1e-12);
            if vstar[k] >= 0.05 {
                let mut v = vstar.clone();
                v[k] -= 0.05;
                assert!(qp_objective(&cone, &z, &v) >= best - 1e-12);
            }
        }
    }
}
