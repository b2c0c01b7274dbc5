//! Projection onto simplicial cones through a nonsmooth equation.
//!
//! A simplicial cone is K = A*R^m_+ for a nonsingular A. Finding the nearest
//! point of K to z reduces to one nonsmooth system in x,
//! (A^T A - I) x^+ + x = A^T z, after which P_K(z) = A x^+ and the Moreau
//! decomposition hands back the polar component for free.
//!
//! How the pieces fit:
//!
//! - [`cone`]: cone construction and validation, the pointwise maps, both
//!   equation residuals, the Moreau certificate, projection through the dual.
//! - [`solvers`]: two Picard fixed-point iterations and a semi-smooth Newton
//!   method, with guards, stop rules and per-iteration diagnostics.
//! - [`monotone`]: the monotone nonnegative cone; closed-form eigenvalues,
//!   Fibonacci closed forms for the iteration matrices, and an O(m) solve
//!   path based on a bidiagonal factorization.
//! - [`oracle`]: brute-force sign-pattern enumeration and LCP/QP restatements
//!   for independent verification at small dimension.
//! - [`problem_gen`]: seeded random instances, including generators whose
//!   Gram deviation is a drawn target value.
//! - [`bench`]: wall-clock harness, fastest-solver flags, performance
//!   profiles and aggregate tables.
//! - [`io`]: plain-text matrix/vector formats, report serialization and the
//!   CSV emitters.

pub mod bench;
pub mod cone;
pub mod error;
pub mod io;
pub mod monotone;
pub mod oracle;
pub mod problem_gen;
pub mod solvers;

pub use bench::{
    aggregate_table, build_profile, default_tau_grid, fastest_flags, time_solver, AggregateTable,
    PerformanceProfile, RunRecord, FASTEST_FACTOR, TIMING_REPS,
};
pub use cone::{
    abs_part, certify, dual_projection, make_cone, negative_part, polar_generator, positive_part,
    recover_projection, residual_abs, residual_nonsmooth, sign_vector, Certificate,
    ProjectionProblem, SimplicialCone, DEFAULT_SINGULARITY_TOL,
};
pub use error::{Error, Result};
pub use monotone::{
    fibonacci_r, fibonacci_s, monotone_eigenvalues, monotone_generator, picard2_monotone,
    project_monotone_cone, FormulaMismatch, MonotoneConeWorkspace,
};
pub use oracle::{
    lcp_check, lcp_export, qp_objective, sign_enumeration_solve, LcpInstance, LcpResidual,
    OracleSolution, MAX_ENUM_DIM,
};
pub use problem_gen::{
    gen_conforming_matrix, gen_experiment_set, gen_instance, gen_problem, sub_seed, Family,
    GenConfig, GeneratedProblem, InstanceMeta,
};
pub use solvers::{
    picard1_solve, picard2_solve, posteriori_bound, run_solver, ssnewton_solve, SolveReport,
    SolveStatus, SolverChoice, StopMode, StopRule, DIVERGENCE_LIMIT,
};
