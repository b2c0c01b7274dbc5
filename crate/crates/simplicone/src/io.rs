//! Plain-text persistence: matrices, vectors, instance directories, solve
//! reports, LCP exports and the benchmark CSVs.
//!
//! Formats, all ASCII and line oriented:
//!
//! - matrix: first line the order m, then m lines of m space-separated
//!   entries.
//! - vector: first line the length m, then m lines of one entry each.
//! - LCP export: first line m, then the m rows of Q, then the m entries of
//!   b one per line, then c on a line of its own.
//! - instance directory: `A.mat`, `z.vec`, `x0.vec`, optional `u.vec`, and
//!   `meta.json`.
//! - solve report: `key=value` lines or a JSON document, both with the keys
//!   solver, status, iterations, final_residual_norm, contraction_factor,
//!   solution, projection.
//! - records CSV: `problem_id,solver,dim,rel_tol,runtime_s,iterations,status`.
//! - profiles CSV: `solver,tau,rho` sampled on a tau grid.
//!
//! Every float is printed with 17 significant digits, enough to round-trip
//! any 64-bit value exactly.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::Serialize;

use crate::bench::{PerformanceProfile, RunRecord};
use crate::cone::{make_cone, ProjectionProblem, DEFAULT_SINGULARITY_TOL};
use crate::error::{Error, Result};
use crate::oracle::LcpInstance;
use crate::problem_gen::{GeneratedProblem, InstanceMeta};
use crate::solvers::{SolveReport, SolveStatus, SolverChoice};

/// 17 significant digits: one before the point, sixteen after.
pub fn format_f64(x: f64) -> String {
    format!("{x:.16e}")
}

fn parse_f64(tok: &str, what: &str) -> Result<f64> {
    tok.parse::<f64>()
        .map_err(|_| Error::Parse(format!("bad float {tok:?} in {what}")))
}

fn parse_usize(tok: &str, what: &str) -> Result<usize> {
    tok.trim()
        .parse::<usize>()
        .map_err(|_| Error::Parse(format!("bad count {tok:?} in {what}")))
}

pub fn matrix_to_string(a: &DMatrix<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", a.nrows()));
    for i in 0..a.nrows() {
        let row: Vec<String> = (0..a.ncols()).map(|j| format_f64(a[(i, j)])).collect();
        out.push_str(&row.join(" "));
        out.push('\n');
    }
    out
}

pub fn matrix_from_str(text: &str) -> Result<DMatrix<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let m = parse_usize(lines.next().ok_or_else(|| Error::Parse("empty matrix file".into()))?, "matrix header")?;
    let mut entries = Vec::with_capacity(m * m);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("matrix row {} missing", i + 1)))?;
        let row: Vec<&str> = line.split_whitespace().collect();
        if row.len() != m {
            return Err(Error::Parse(format!(
                "matrix row {} has {} entries, expected {m}",
                i + 1,
                row.len()
            )));
        }
        for tok in row {
            entries.push(parse_f64(tok, "matrix body")?);
        }
    }
    Ok(DMatrix::from_row_slice(m, m, &entries))
}

pub fn vector_to_string(v: &DVector<f64>) -> String {
    let mut out = String::new();
    out.push_str(&format!("{}\n", v.len()));
    for t in v.iter() {
        out.push_str(&format_f64(*t));
        out.push('\n');
    }
    out
}

pub fn vector_from_str(text: &str) -> Result<DVector<f64>> {
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let m = parse_usize(lines.next().ok_or_else(|| Error::Parse("empty vector file".into()))?, "vector header")?;
    let mut entries = Vec::with_capacity(m);
    for i in 0..m {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("vector entry {} missing", i + 1)))?;
        entries.push(parse_f64(line.trim(), "vector body")?);
    }
    Ok(DVector::from_vec(entries))
}

pub fn read_matrix(path: &Path) -> Result<DMatrix<f64>> {
    matrix_from_str(&fs::read_to_string(path)?)
}

pub fn write_matrix(path: &Path, a: &DMatrix<f64>) -> Result<()> {
    Ok(fs::write(path, matrix_to_string(a))?)
}

pub fn read_vector(path: &Path) -> Result<DVector<f64>> {
    vector_from_str(&fs::read_to_string(path)?)
}

pub fn write_vector(path: &Path, v: &DVector<f64>) -> Result<()> {
    Ok(fs::write(path, vector_to_string(v))?)
}

fn join_floats(v: &DVector<f64>) -> String {
    v.iter().map(|t| format_f64(*t)).collect::<Vec<_>>().join(" ")
}

/// The `key=value` report block. `contraction_factor` prints as `nan` when
/// the method has no linear rate.
pub fn report_to_key_value(report: &SolveReport, solver: &str) -> String {
    let mut out = String::new();
    out.push_str(&format!("solver={solver}\n"));
    out.push_str(&format!("status={}\n", report.status.as_str()));
    out.push_str(&format!("iterations={}\n", report.iterations));
    out.push_str(&format!(
        "final_residual_norm={}\n",
        format_f64(report.final_residual_norm)
    ));
    out.push_str(&format!(
        "contraction_factor={}\n",
        report
            .contraction_factor
            .map(format_f64)
            .unwrap_or_else(|| "nan".into())
    ));
    out.push_str(&format!("solution={}\n", join_floats(&report.solution)));
    out.push_str(&format!("projection={}\n", join_floats(&report.projection)));
    out
}

#[derive(Serialize)]
struct ReportDoc<'a> {
    solver: &'a str,
    status: &'a str,
    iterations: usize,
    final_residual_norm: f64,
    contraction_factor: Option<f64>,
    solution: &'a [f64],
    projection: &'a [f64],
}

/// The JSON report document; same keys as the `key=value` form, with `null`
/// for an absent contraction factor.
pub fn report_to_json(report: &SolveReport, solver: &str) -> Result<String> {
    Ok(serde_json::to_string_pretty(&ReportDoc {
        solver,
        status: report.status.as_str(),
        iterations: report.iterations,
        final_residual_norm: report.final_residual_norm,
        contraction_factor: report.contraction_factor,
        solution: report.solution.as_slice(),
        projection: report.projection.as_slice(),
    })?)
}

/// Writes `A.mat`, `z.vec`, `x0.vec`, `u.vec` (when known) and `meta.json`.
pub fn save_instance(dir: &Path, gp: &GeneratedProblem) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_matrix(&dir.join("A.mat"), gp.problem.cone().generator())?;
    write_vector(&dir.join("z.vec"), gp.problem.z())?;
    write_vector(&dir.join("x0.vec"), gp.problem.x0())?;
    if let Some(u) = gp.problem.known_solution() {
        write_vector(&dir.join("u.vec"), u)?;
    }
    fs::write(
        dir.join("meta.json"),
        serde_json::to_string_pretty(&gp.meta)?,
    )?;
    Ok(())
}

/// Reads an instance directory back. `u.vec` is optional; when present it is
/// revalidated against the residual bound.
pub fn load_instance(dir: &Path) -> Result<(ProjectionProblem, InstanceMeta)> {
    let meta: InstanceMeta = serde_json::from_str(&fs::read_to_string(dir.join("meta.json"))?)?;
    let a = read_matrix(&dir.join("A.mat"))?;
    let z = read_vector(&dir.join("z.vec"))?;
    let x0 = read_vector(&dir.join("x0.vec"))?;
    let cone = make_cone(a, DEFAULT_SINGULARITY_TOL)?;
    let mut problem = ProjectionProblem::new(cone, z, x0)?;
    let u_path = dir.join("u.vec");
    if u_path.exists() {
        problem = problem.with_known_solution(read_vector(&u_path)?)?;
    }
    Ok((problem, meta))
}

pub fn lcp_to_string(lcp: &LcpInstance) -> String {
    let mut out = matrix_to_string(&lcp.q);
    for t in lcp.b.iter() {
        out.push_str(&format_f64(*t));
        out.push('\n');
    }
    out.push_str(&format_f64(lcp.c));
    out.push('\n');
    out
}

pub const RECORDS_HEADER: &str = "problem_id,solver,dim,rel_tol,runtime_s,iterations,status";

pub fn records_to_csv(records: &[RunRecord]) -> String {
    let mut out = String::from(RECORDS_HEADER);
    out.push('\n');
    for r in records {
        out.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            r.problem_id,
            r.solver.as_str(),
            r.dim,
            format_f64(r.rel_tol),
            format_f64(r.runtime_s),
            r.iterations,
            r.status.as_str()
        ));
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<RunRecord>> {
    let mut lines = text.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::Parse("empty records CSV".into()))?;
    if header.trim() != RECORDS_HEADER {
        return Err(Error::Parse(format!("unexpected records header {header:?}")));
    }
    let mut records = Vec::new();
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 7 {
            return Err(Error::Parse(format!(
                "records line {} has {} fields, expected 7",
                lineno + 2,
                fields.len()
            )));
        }
        records.push(RunRecord {
            problem_id: fields[0].to_string(),
            solver: fields[1].parse::<SolverChoice>()?,
            dim: parse_usize(fields[2], "records dim")?,
            rel_tol: parse_f64(fields[3], "records rel_tol")?,
            runtime_s: parse_f64(fields[4], "records runtime_s")?,
            iterations: parse_usize(fields[5], "records iterations")?,
            status: fields[6].parse::<SolveStatus>()?,
        });
    }
    Ok(records)
}

pub const PROFILES_HEADER: &str = "solver,tau,rho";

/// Samples each profile on the grid and emits `solver,tau,rho` rows.
pub fn profiles_to_csv(profiles: &[PerformanceProfile], grid: &[f64]) -> String {
    let mut out = String::from(PROFILES_HEADER);
    out.push('\n');
    for p in profiles {
        for tau in grid {
            out.push_str(&format!(
                "{},{},{}\n",
                p.solver.as_str(),
                format_f64(*tau),
                format_f64(p.rho(*tau))
            ));
        }
    }
    out
}

/// CSV form of the aggregate table: one row per dimension, iteration totals
/// then time totals per tolerance.
pub fn table_to_csv(table: &crate::bench::AggregateTable) -> String {
    let mut out = String::from("m");
    for t in &table.tols {
        out.push_str(&format!(",total_iterations@{}", format_f64(*t)));
    }
    for t in &table.tols {
        out.push_str(&format!(",total_time_s@{}", format_f64(*t)));
    }
    out.push('\n');
    for d in &table.dims {
        out.push_str(&d.to_string());
        for t in &table.tols {
            let (it, _) = table.cell(*d, *t).unwrap_or((0, 0.0));
            out.push_str(&format!(",{it}"));
        }
        for t in &table.tols {
            let (_, s) = table.cell(*d, *t).unwrap_or((0, 0.0));
            out.push_str(&format!(",{}", format_f64(s)));
        }
        out.push('\n');
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem_gen::{gen_instance, GenConfig};
    use crate::solvers::SolveStatus;
    use proptest::prelude::*;

    #[test]
    fn matrix_round_trip_is_bit_exact() {
        let a = DMatrix::from_row_slice(2, 2, &[1.0 / 3.0, -2.5e-7, 1e6 + 0.1, -0.0]);
        let back = matrix_from_str(&matrix_to_string(&a)).unwrap();
        assert_eq!(a, back);
    }

    #[test]
    fn vector_round_trip_is_bit_exact() {
        let v = DVector::from_column_slice(&[std::f64::consts::PI, -1e-300, 7.0]);
        let back = vector_from_str(&vector_to_string(&v)).unwrap();
        assert_eq!(v, back);
    }

    #[test]
    fn malformed_inputs_are_parse_errors() {
        assert!(matches!(matrix_from_str(""), Err(Error::Parse(_))));
        assert!(matches!(matrix_from_str("2\n1 2\n3"), Err(Error::Parse(_))));
        assert!(matches!(matrix_from_str("1\nx"), Err(Error::Parse(_))));
        assert!(matches!(vector_from_str("2\n1.0"), Err(Error::Parse(_))));
    }

    #[test]
    fn report_key_value_has_the_agreed_keys() {
        let report = SolveReport {
            solution: DVector::from_column_slice(&[1.0]),
            projection: DVector::from_column_slice(&[1.2]),
            iterations: 3,
            final_residual_norm: 1e-12,
            contraction_factor: None,
            per_iter_errors: None,
            per_iter_bounds: None,
            status: SolveStatus::Converged,
            diverged: false,
        };
        let text = report_to_key_value(&report, "ssnewton");
        for key in [
            "solver=",
            "status=",
            "iterations=",
            "final_residual_norm=",
            "contraction_factor=nan",
            "solution=",
            "projection=",
        ] {
            assert!(text.contains(key), "missing {key} in {text}");
        }
        let json = report_to_json(&report, "ssnewton").unwrap();
        let doc: serde_json::Value = serde_json::from_str(&json).unwrap();
        assert_eq!(doc["solver"], "ssnewton");
        assert_eq!(doc["status"], "converged");
        assert!(doc["contraction_factor"].is_null());
        assert_eq!(doc["projection"][0], 1.2);
    }

    #[test]
    fn instance_directory_round_trips() {
        let dir = tempfile::tempdir().unwrap();
        let gp = gen_instance(&GenConfig::new(4, 31), 2).unwrap();
        save_instance(dir.path(), &gp).unwrap();
        let (problem, meta) = load_instance(dir.path()).unwrap();
        assert_eq!(problem.z(), gp.problem.z());
        assert_eq!(problem.x0(), gp.problem.x0());
        assert_eq!(problem.known_solution(), gp.problem.known_solution());
        assert_eq!(problem.cone().generator(), gp.problem.cone().generator());
        assert_eq!(meta, gp.meta);
    }

    #[test]
    fn records_csv_round_trips() {
        let records = vec![RunRecord {
            problem_id: "m10-p003".into(),
            solver: SolverChoice::Picard2,
            dim: 10,
            rel_tol: 1e-10,
            runtime_s: 0.001953125,
            iterations: 42,
            status: SolveStatus::Converged,
        }];
        let csv = records_to_csv(&records);
        assert!(csv.starts_with(RECORDS_HEADER));
        let back = records_from_csv(&csv).unwrap();
        assert_eq!(back, records);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(256))]

        #[test]
        fn arbitrary_floats_round_trip(bits in any::<u64>()) {
            let x = f64::from_bits(bits);
            prop_assume!(x.is_finite());
            let printed = format_f64(x);
            let back: f64 = printed.parse().unwrap();
            prop_assert_eq!(x.to_bits(), back.to_bits());
        }
    }
}
