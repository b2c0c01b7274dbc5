//! End-to-end tests of the command-line binary: output contracts, exit
//! codes, determinism of generation and benchmarking, and profile
//! recomputation.

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use nalgebra::DVector;
use simplicone::{make_cone, sign_enumeration_solve, DEFAULT_SINGULARITY_TOL};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_simplicone")
}

fn run_in(dir: &Path, args: &[&str]) -> Output {
    Command::new(bin())
        .args(args)
        .current_dir(dir)
        .output()
        .expect("failed to spawn simplicone")
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn exit_code(out: &Output) -> i32 {
    out.status.code().expect("process was signaled")
}

/// Pulls the floats off a `key=v1 v2 ...` stdout line.
fn parse_line(out: &str, key: &str) -> Vec<f64> {
    let line = out
        .lines()
        .find(|l| l.starts_with(&format!("{key}=")))
        .unwrap_or_else(|| panic!("no {key}= line in output:\n{out}"));
    line[key.len() + 1..]
        .split_whitespace()
        .map(|t| t.parse().expect("float field"))
        .collect()
}

fn write_matrix_file(path: &Path, m: usize, rows: &[f64]) {
    let mut text = format!("{m}\n");
    for r in 0..m {
        let row: Vec<String> = (0..m).map(|c| format!("{:e}", rows[r * m + c])).collect();
        text.push_str(&row.join(" "));
        text.push('\n');
    }
    fs::write(path, text).unwrap();
}

fn write_vector_file(path: &Path, v: &[f64]) {
    let mut text = format!("{}\n", v.len());
    for t in v {
        text.push_str(&format!("{t:e}\n"));
    }
    fs::write(path, text).unwrap();
}

#[test]
fn project_on_the_orthant_prints_the_certified_projection() {
    let dir = tempfile::tempdir().unwrap();
    write_matrix_file(&dir.path().join("A.mat"), 2, &[1.0, 0.0, 0.0, 1.0]);
    write_vector_file(&dir.path().join("z.vec"), &[1.0, -2.0]);

    let out = run_in(dir.path(), &["project", "A.mat", "z.vec"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    let p = parse_line(&text, "projection");
    assert!((p[0] - 1.0).abs() < 1e-9 && p[1].abs() < 1e-9, "projection {p:?}");
    assert!(text.contains("certificate=accepted"), "output:\n{text}");
}

#[test]
fn project_on_a_singular_matrix_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    write_matrix_file(&dir.path().join("A.mat"), 2, &[1.0, 2.0, 2.0, 4.0]);
    write_vector_file(&dir.path().join("z.vec"), &[1.0, 1.0]);

    let out = run_in(dir.path(), &["project", "A.mat", "z.vec"]);
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("singular"), "stderr: {}", stderr(&out));
}

#[test]
fn project_on_a_missing_file_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["project", "nope.mat", "nope.vec"]);
    assert_eq!(exit_code(&out), 1);
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let bad = run_in(dir.path(), &["project", "--no-such-flag"]);
    assert_eq!(exit_code(&bad), 1);
    let help = run_in(dir.path(), &["--help"]);
    assert_eq!(exit_code(&help), 0);
    assert!(stdout(&help).contains("project"));
}

#[test]
fn project_monotone_generator_matches_the_enumeration_oracle() {
    let dir = tempfile::tempdir().unwrap();
    // Lower-bidiagonal difference generator for m = 3.
    let a = [1.0, 0.0, 0.0, -1.0, 1.0, 0.0, 0.0, -1.0, 1.0];
    let z = [0.7, -1.3, 0.4];
    write_matrix_file(&dir.path().join("A.mat"), 3, &a);
    write_vector_file(&dir.path().join("z.vec"), &z);

    let out = run_in(dir.path(), &["project", "A.mat", "z.vec", "--tol", "1e-12"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let text = stdout(&out);
    assert!(text.contains("certificate=accepted"), "output:\n{text}");

    let cone = make_cone(
        nalgebra::DMatrix::from_row_slice(3, 3, &a),
        DEFAULT_SINGULARITY_TOL,
    )
    .unwrap();
    let oracle = sign_enumeration_solve(&cone, &DVector::from_column_slice(&z)).unwrap();
    let printed = DVector::from_column_slice(&parse_line(&text, "projection"));
    assert!(
        (printed - &oracle.projection).norm() <= 1e-9,
        "projection disagrees with the oracle"
    );
}

#[test]
fn solve_picard1_on_a_monotone_instance_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(
        dir.path(),
        &["gen", "--dim", "3", "--seed", "7", "--family", "monotone-cone", "--out", "inst"],
    );
    assert_eq!(exit_code(&gen), 0, "stderr: {}", stderr(&gen));

    let out = run_in(dir.path(), &["solve", "inst/instance-000", "--solver", "picard1"]);
    assert_eq!(exit_code(&out), 2);
    assert!(stdout(&out).contains("status=not_applicable"), "stdout: {}", stdout(&out));
    assert!(stderr(&out).contains("not_applicable"), "stderr: {}", stderr(&out));
}

#[test]
fn solve_oracle_agrees_with_picard2_on_a_generated_instance() {
    let dir = tempfile::tempdir().unwrap();
    let gen = run_in(dir.path(), &["gen", "--dim", "4", "--seed", "123", "--out", "inst"]);
    assert_eq!(exit_code(&gen), 0, "stderr: {}", stderr(&gen));

    let fast = run_in(dir.path(), &["solve", "inst/instance-000", "--solver", "picard2"]);
    let oracle = run_in(dir.path(), &["solve", "inst/instance-000", "--solver", "oracle"]);
    assert_eq!(exit_code(&fast), 0);
    assert_eq!(exit_code(&oracle), 0);
    let xf = DVector::from_column_slice(&parse_line(&stdout(&fast), "solution"));
    let xo = DVector::from_column_slice(&parse_line(&stdout(&oracle), "solution"));
    assert!(
        (&xf - &xo).norm() <= 1e-7 * xo.norm().max(1.0),
        "picard2 and oracle disagree: {xf:?} vs {xo:?}"
    );
}

#[test]
fn solve_emits_json_when_asked() {
    let dir = tempfile::tempdir().unwrap();
    run_in(dir.path(), &["gen", "--dim", "3", "--seed", "5", "--out", "inst"]);
    let out = run_in(dir.path(), &["solve", "inst/instance-000", "--json"]);
    assert_eq!(exit_code(&out), 0);
    let doc: serde_json::Value = serde_json::from_str(&stdout(&out)).expect("valid JSON");
    assert_eq!(doc["solver"], "picard2");
    assert_eq!(doc["status"], "converged");
    assert!(doc["projection"].is_array());
}

fn dir_snapshot(root: &Path) -> Vec<(String, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                files.push((rel, fs::read(&path).unwrap()));
            }
        }
    }
    files.sort();
    files
}

#[test]
fn gen_twice_with_one_seed_writes_identical_directories() {
    let dir = tempfile::tempdir().unwrap();
    for name in ["a", "b"] {
        let out = run_in(
            dir.path(),
            &["gen", "--dim", "5", "--seed", "42", "--count", "3", "--out", name],
        );
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    }
    assert_eq!(
        dir_snapshot(&dir.path().join("a")),
        dir_snapshot(&dir.path().join("b")),
        "instance directories differ between reruns"
    );
}

const DESK_CONFIG: &str = r#"{
  "schema": 1,
  "family": "conforming_svd",
  "m": 6,
  "count": 4,
  "tolerances": [1e-8, 1e-11],
  "solvers": ["picard1", "picard2", "ssnewton"],
  "seed": 99
}"#;

/// Blanks the runtime_s column of a records CSV.
fn strip_runtime(csv: &str) -> String {
    csv.lines()
        .enumerate()
        .map(|(i, line)| {
            if i == 0 || line.is_empty() {
                return line.to_string();
            }
            let mut fields: Vec<&str> = line.split(',').collect();
            fields[4] = "-";
            fields.join(",")
        })
        .collect::<Vec<_>>()
        .join("\n")
}

/// Keeps only the dimension and iteration columns of a table CSV.
fn strip_times(csv: &str) -> String {
    let n_cols = csv.lines().next().unwrap().split(',').count();
    let keep = 1 + (n_cols - 1) / 2;
    csv.lines()
        .map(|line| line.split(',').take(keep).collect::<Vec<_>>().join(","))
        .collect::<Vec<_>>()
        .join("\n")
}

#[test]
fn bench_rerun_is_deterministic_except_runtimes() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), DESK_CONFIG).unwrap();
    for name in ["one", "two"] {
        let out = run_in(
            dir.path(),
            &["bench", "--config", "config.json", "--out", name],
        );
        assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    }

    let read = |name: &str, file: &str| fs::read_to_string(dir.path().join(name).join(file)).unwrap();
    assert_eq!(
        strip_runtime(&read("one", "records.csv")),
        strip_runtime(&read("two", "records.csv")),
        "records differ beyond the runtime column"
    );
    for solver in ["picard1", "picard2", "ssnewton"] {
        let file = format!("table-{solver}.csv");
        assert_eq!(
            strip_times(&read("one", &file)),
            strip_times(&read("two", &file)),
            "iteration totals differ between reruns in {file}"
        );
    }
}

#[test]
fn profile_recomputation_reproduces_the_bench_csvs_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("config.json"), DESK_CONFIG).unwrap();
    let bench = run_in(
        dir.path(),
        &["bench", "--config", "config.json", "--out", "bench"],
    );
    assert_eq!(exit_code(&bench), 0, "stderr: {}", stderr(&bench));
    let prof = run_in(
        dir.path(),
        &["profile", "--records", "bench/records.csv", "--out", "prof"],
    );
    assert_eq!(exit_code(&prof), 0, "stderr: {}", stderr(&prof));

    let mut compared = 0;
    for entry in fs::read_dir(dir.path().join("prof")).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().into_owned();
        assert!(name.starts_with("profile-"), "unexpected file {name}");
        let recomputed = fs::read(&path).unwrap();
        let original = fs::read(dir.path().join("bench").join(&name))
            .unwrap_or_else(|_| panic!("bench did not emit {name}"));
        assert_eq!(recomputed, original, "{name} differs");
        compared += 1;
    }
    // Two tolerances, three solvers.
    assert_eq!(compared, 6);
}

#[test]
fn bench_rejects_an_unsupported_schema() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("config.json"),
        DESK_CONFIG.replace("\"schema\": 1", "\"schema\": 2"),
    )
    .unwrap();
    let out = run_in(
        dir.path(),
        &["bench", "--config", "config.json", "--out", "out"],
    );
    assert_eq!(exit_code(&out), 1);
    assert!(stderr(&out).contains("schema"), "stderr: {}", stderr(&out));
}

#[test]
fn monotone_subcommand_emits_a_monotone_nonnegative_projection() {
    let dir = tempfile::tempdir().unwrap();
    write_vector_file(&dir.path().join("z.vec"), &[0.3, 1.7, -0.4, 0.9, -2.0]);
    let out = run_in(dir.path(), &["monotone", "--point", "z.vec", "--tol", "1e-12"]);
    assert_eq!(exit_code(&out), 0, "stderr: {}", stderr(&out));
    let p = parse_line(&stdout(&out), "projection");
    for w in p.windows(2) {
        assert!(w[0] >= w[1] - 1e-10, "projection not sorted: {p:?}");
    }
    assert!(*p.last().unwrap() >= -1e-10, "negative tail: {p:?}");
}

#[test]
fn monotone_subcommand_needs_a_point_or_a_seed() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_in(dir.path(), &["monotone", "--dim", "4"]);
    assert_eq!(exit_code(&out), 1);
}
