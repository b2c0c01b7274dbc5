//! Timing harness, fastest-solver flags, performance profiles and the
//! aggregate iteration/time table.
//!
//! Protocol: each (problem, solver, tolerance) cell runs one untimed warm-up
//! solve and then a fixed number of timed repetitions back to back on the
//! calling thread; the recorded runtime is the median. Iteration counts are
//! deterministic for a fixed instance, so reruns differ only in the runtime
//! fields. A solver is "fastest" on a problem when its runtime is within a
//! factor 1.01 of the best converged runtime. Performance profiles follow
//! the Dolan-More construction: per problem, each solver's runtime ratio to
//! the best, with +inf for failures; rho_s(tau) is the fraction of problems
//! a solver brings within factor tau of the best.

use std::collections::BTreeMap;
use std::time::Instant;

use crate::cone::ProjectionProblem;
use crate::error::{Error, Result};
use crate::solvers::{run_solver, SolveStatus, SolverChoice, StopRule};

/// Timed repetitions per cell; the median washes out scheduler noise.
pub const TIMING_REPS: usize = 10;

/// Runtimes within this factor of the best count as fastest.
pub const FASTEST_FACTOR: f64 = 1.01;

/// One benchmark cell: a solver run on a problem at one tolerance.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub problem_id: String,
    pub solver: SolverChoice,
    pub dim: usize,
    pub rel_tol: f64,
    /// Median wall-clock seconds over the timed repetitions.
    pub runtime_s: f64,
    pub iterations: usize,
    pub status: SolveStatus,
}

/// Runs one cell: a warm-up solve (excluded from timing, it also supplies
/// the iteration count and status), then `TIMING_REPS` timed solves run
/// serially. Solver errors propagate; guard rejections are ordinary records
/// with status NotApplicable.
pub fn time_solver(
    problem_id: &str,
    prob: &ProjectionProblem,
    solver: SolverChoice,
    stop: &StopRule,
) -> Result<RunRecord> {
    let warmup = run_solver(solver, prob, stop)?;
    let mut times = [0.0f64; TIMING_REPS];
    for slot in times.iter_mut() {
        let t0 = Instant::now();
        let report = run_solver(solver, prob, stop)?;
        *slot = t0.elapsed().as_secs_f64();
        debug_assert_eq!(report.iterations, warmup.iterations);
    }
    times.sort_by(f64::total_cmp);
    let runtime_s = 0.5 * (times[TIMING_REPS / 2 - 1] + times[TIMING_REPS / 2]);
    Ok(RunRecord {
        problem_id: problem_id.to_string(),
        solver,
        dim: prob.cone().dim(),
        rel_tol: stop.rel_tol,
        runtime_s,
        iterations: warmup.iterations,
        status: warmup.status,
    })
}

/// Applies the 1.01 rule to the records of one problem: a record is flagged
/// when it converged and its runtime is at most 1.01 times the best
/// converged runtime. Errors when nothing converged.
pub fn fastest_flags(records: &[RunRecord]) -> Result<Vec<bool>> {
    let best = records
        .iter()
        .filter(|r| r.status.is_converged())
        .map(|r| r.runtime_s)
        .min_by(f64::total_cmp)
        .ok_or_else(|| Error::NoConvergedRecord {
            problem_id: records
                .first()
                .map(|r| r.problem_id.clone())
                .unwrap_or_default(),
        })?;
    Ok(records
        .iter()
        .map(|r| r.status.is_converged() && r.runtime_s <= FASTEST_FACTOR * best)
        .collect())
}

/// A solver's runtime-ratio distribution over a problem set.
#[derive(Debug, Clone)]
pub struct PerformanceProfile {
    pub solver: SolverChoice,
    /// Finite ratios, sorted ascending. Failed problems are tracked only
    /// through `n_problems` (their ratio is +inf).
    ratios: Vec<f64>,
    n_problems: usize,
}

impl PerformanceProfile {
    /// Fraction of problems solved within factor `tau` of the best solver.
    pub fn rho(&self, tau: f64) -> f64 {
        let solved = self.ratios.partition_point(|r| *r <= tau);
        solved as f64 / self.n_problems as f64
    }

    /// Largest finite ratio, where rho reaches its terminal value.
    pub fn max_finite_ratio(&self) -> Option<f64> {
        self.ratios.last().copied()
    }

    /// True when every problem produced a finite ratio for this solver.
    pub fn fully_converged(&self) -> bool {
        self.ratios.len() == self.n_problems
    }

    pub fn n_problems(&self) -> usize {
        self.n_problems
    }
}

/// The default sampling grid tau = 1.00, 1.01, ..., 4.00.
pub fn default_tau_grid() -> Vec<f64> {
    (100..=400).map(|k| k as f64 / 100.0).collect()
}

/// Builds one profile per entry of `solvers` from a flat record list
/// (multiple tolerances are fine; a problem is keyed by id and tolerance).
/// Every problem must have at least one converged record.
pub fn build_profile(
    records: &[RunRecord],
    solvers: &[SolverChoice],
) -> Result<Vec<PerformanceProfile>> {
    if records.is_empty() {
        return Err(Error::EmptyRecords);
    }
    let mut groups: BTreeMap<(String, u64), Vec<&RunRecord>> = BTreeMap::new();
    for r in records {
        groups
            .entry((r.problem_id.clone(), r.rel_tol.to_bits()))
            .or_default()
            .push(r);
    }

    let mut ratios: BTreeMap<SolverChoice, Vec<f64>> =
        solvers.iter().map(|s| (*s, Vec::new())).collect();
    for ((problem_id, _), group) in &groups {
        let best = group
            .iter()
            .filter(|r| r.status.is_converged())
            .map(|r| r.runtime_s)
            .min_by(f64::total_cmp)
            .ok_or_else(|| Error::NoConvergedRecord {
                problem_id: problem_id.clone(),
            })?;
        for r in group {
            if let Some(list) = ratios.get_mut(&r.solver) {
                if r.status.is_converged() {
                    list.push(r.runtime_s / best);
                }
            }
        }
    }

    let n_problems = groups.len();
    Ok(solvers
        .iter()
        .map(|s| {
            let mut list = ratios.remove(s).unwrap_or_default();
            list.sort_by(f64::total_cmp);
            PerformanceProfile {
                solver: *s,
                ratios: list,
                n_problems,
            }
        })
        .collect())
}

/// Total iterations and runtime per (dimension, tolerance) cell, the layout
/// used for the monotone-cone experiment summary: one row per dimension, one
/// column group per tolerance.
#[derive(Debug, Clone)]
pub struct AggregateTable {
    pub dims: Vec<usize>,
    pub tols: Vec<f64>,
    /// Keyed by (dim, tol bits); values are (total iterations, total seconds).
    cells: BTreeMap<(usize, u64), (u64, f64)>,
}

impl AggregateTable {
    pub fn cell(&self, dim: usize, tol: f64) -> Option<(u64, f64)> {
        self.cells.get(&(dim, tol.to_bits())).copied()
    }

    /// Aligned text rendering for terminals.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:>8}", "m"));
        for t in &self.tols {
            out.push_str(&format!("{:>16}", format!("iters@{t:.0e}")));
        }
        for t in &self.tols {
            out.push_str(&format!("{:>16}", format!("time_s@{t:.0e}")));
        }
        out.push('\n');
        for d in &self.dims {
            out.push_str(&format!("{d:>8}"));
            for t in &self.tols {
                let (it, _) = self.cell(*d, *t).unwrap_or((0, 0.0));
                out.push_str(&format!("{it:>16}"));
            }
            for t in &self.tols {
                let (_, s) = self.cell(*d, *t).unwrap_or((0, 0.0));
                out.push_str(&format!("{s:>16.6}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Sums iterations and runtimes over all records of each (dim, tol) cell.
/// Rows and columns come out sorted.
pub fn aggregate_table(records: &[RunRecord]) -> AggregateTable {
    let mut cells: BTreeMap<(usize, u64), (u64, f64)> = BTreeMap::new();
    let mut dims = Vec::new();
    let mut tols = Vec::new();
    for r in records {
        let entry = cells.entry((r.dim, r.rel_tol.to_bits())).or_insert((0, 0.0));
        entry.0 += r.iterations as u64;
        entry.1 += r.runtime_s;
        if !dims.contains(&r.dim) {
            dims.push(r.dim);
        }
        if !tols.contains(&r.rel_tol) {
            tols.push(r.rel_tol);
        }
    }
    dims.sort_unstable();
    tols.sort_by(f64::total_cmp);
    AggregateTable { dims, tols, cells }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::cone::SimplicialCone;
    use nalgebra::{DMatrix, DVector};

    fn record(id: &str, solver: SolverChoice, runtime: f64, status: SolveStatus) -> RunRecord {
        RunRecord {
            problem_id: id.to_string(),
            solver,
            dim: 4,
            rel_tol: 1e-10,
            runtime_s: runtime,
            iterations: 10,
            status,
        }
    }

    #[test]
    fn fastest_flags_obeys_the_tie_rule() {
        let rs = vec![
            record("p0", SolverChoice::Picard1, 1.0, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 1.005, SolveStatus::Converged),
            record("p0", SolverChoice::SsNewton, 2.0, SolveStatus::Converged),
        ];
        assert_eq!(fastest_flags(&rs).unwrap(), vec![true, true, false]);

        let rs = vec![
            record("p0", SolverChoice::Picard1, 1.0, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 1.02, SolveStatus::Converged),
        ];
        assert_eq!(fastest_flags(&rs).unwrap(), vec![true, false]);
    }

    #[test]
    fn fastest_flags_ignores_unconverged_runs() {
        let rs = vec![
            record("p0", SolverChoice::Picard1, 0.1, SolveStatus::NotApplicable),
            record("p0", SolverChoice::Picard2, 1.0, SolveStatus::Converged),
        ];
        assert_eq!(fastest_flags(&rs).unwrap(), vec![false, true]);
    }

    #[test]
    fn fastest_flags_needs_a_converged_record() {
        let rs = vec![record("p0", SolverChoice::Picard1, 0.1, SolveStatus::MaxIters)];
        assert!(matches!(
            fastest_flags(&rs),
            Err(Error::NoConvergedRecord { .. })
        ));
    }

    #[test]
    fn fastest_flags_is_scale_invariant() {
        let base = vec![
            record("p0", SolverChoice::Picard1, 0.004, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 0.00401, SolveStatus::Converged),
            record("p0", SolverChoice::SsNewton, 0.02, SolveStatus::Converged),
        ];
        let flags = fastest_flags(&base).unwrap();
        let scaled: Vec<RunRecord> = base
            .iter()
            .map(|r| RunRecord {
                runtime_s: r.runtime_s * 37.5,
                ..r.clone()
            })
            .collect();
        assert_eq!(fastest_flags(&scaled).unwrap(), flags);
    }

    #[test]
    fn profile_of_a_symmetric_pair() {
        let rs = vec![
            record("p0", SolverChoice::Picard1, 1.0, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 2.0, SolveStatus::Converged),
            record("p1", SolverChoice::Picard1, 2.0, SolveStatus::Converged),
            record("p1", SolverChoice::Picard2, 1.0, SolveStatus::Converged),
        ];
        let profiles =
            build_profile(&rs, &[SolverChoice::Picard1, SolverChoice::Picard2]).unwrap();
        for p in &profiles {
            assert_eq!(p.rho(1.0), 0.5);
            assert_eq!(p.rho(1.99), 0.5);
            assert_eq!(p.rho(2.0), 1.0);
            assert!(p.fully_converged());
            assert_eq!(p.max_finite_ratio(), Some(2.0));
        }
    }

    #[test]
    fn profile_counts_failures_as_infinite_ratio() {
        let rs = vec![
            record("p0", SolverChoice::Picard1, 1.0, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 1.0, SolveStatus::MaxIters),
        ];
        let profiles =
            build_profile(&rs, &[SolverChoice::Picard1, SolverChoice::Picard2]).unwrap();
        assert_eq!(profiles[1].rho(1e12), 0.0);
        assert!(!profiles[1].fully_converged());
    }

    #[test]
    fn profile_rho_is_monotone_on_the_grid() {
        let rs = vec![
            record("p0", SolverChoice::Picard1, 1.0, SolveStatus::Converged),
            record("p0", SolverChoice::Picard2, 3.7, SolveStatus::Converged),
            record("p1", SolverChoice::Picard1, 5.0, SolveStatus::Converged),
            record("p1", SolverChoice::Picard2, 4.0, SolveStatus::Converged),
        ];
        let profiles =
            build_profile(&rs, &[SolverChoice::Picard1, SolverChoice::Picard2]).unwrap();
        for p in &profiles {
            let mut prev = -1.0;
            for tau in default_tau_grid() {
                let v = p.rho(tau);
                assert!((0.0..=1.0).contains(&v));
                assert!(v >= prev);
                prev = v;
            }
        }
    }

    #[test]
    fn empty_records_are_rejected() {
        assert!(matches!(
            build_profile(&[], &[SolverChoice::Picard1]),
            Err(Error::EmptyRecords)
        ));
    }

    #[test]
    fn aggregate_table_sums_cells() {
        let mut rs = Vec::new();
        for (dim, tol, iters) in [(4usize, 1e-7, 10usize), (4, 1e-7, 20), (8, 1e-10, 5)] {
            let mut r = record("p", SolverChoice::Picard2, 0.5, SolveStatus::Converged);
            r.dim = dim;
            r.rel_tol = tol;
            r.iterations = iters;
            rs.push(r);
        }
        let table = aggregate_table(&rs);
        assert_eq!(table.dims, vec![4, 8]);
        assert_eq!(table.cell(4, 1e-7), Some((30, 1.0)));
        assert_eq!(table.cell(8, 1e-10), Some((5, 0.5)));
        assert_eq!(table.cell(8, 1e-7), None);
        assert!(table.to_text().contains("iters@1e-7"));
    }

    #[test]
    fn time_solver_produces_a_sane_record() {
        let cone = SimplicialCone::new(DMatrix::identity(3, 3)).unwrap();
        let prob = ProjectionProblem::new(
            cone,
            DVector::from_column_slice(&[1.0, -2.0, 0.5]),
            DVector::zeros(3),
        )
        .unwrap();
        let rec = time_solver("p0", &prob, SolverChoice::Picard1, &StopRule::residual(1e-12))
            .unwrap();
        assert_eq!(rec.status, SolveStatus::Converged);
        assert_eq!(rec.iterations, 1);
        assert!(rec.runtime_s >= 0.0);
        assert_eq!(rec.dim, 3);
    }
}
