//! Command-line front end: project a point onto a cone, run one solver on a
//! stored instance, generate instance sets, execute benchmark experiments,
//! recompute performance profiles, and drive the monotone-cone fast path.
//!
//! Exit codes are a stable contract: 0 success, 1 usage/I-O/input errors,
//! 2 numerical failures (non-convergence, guard rejections, rejected
//! certificates). `SIMPLICONE_THREADS` caps the worker pool used for
//! generation and verification; timed repetitions always run serially.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Deserialize;

use simplicone::io::{
    format_f64, load_instance, profiles_to_csv, read_matrix, read_vector, records_from_csv,
    records_to_csv, report_to_json, report_to_key_value, save_instance, table_to_csv,
};
use simplicone::{
    aggregate_table, build_profile, certify, default_tau_grid, gen_instance, make_cone,
    project_monotone_cone, run_solver, sign_enumeration_solve, sub_seed, time_solver, Certificate,
    Error, Family, GenConfig, GeneratedProblem, ProjectionProblem, Result, RunRecord, SolveReport,
    SolveStatus, SolverChoice, StopMode, StopRule, DEFAULT_SINGULARITY_TOL,
};

/// Stdout writers that treat a consumer closing the pipe early (head, grep)
/// as normal termination rather than a panic; any other write failure is a
/// real I/O error.
macro_rules! out {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = write!(std::io::stdout(), $($arg)*) {
            stdout_write_failed(e);
        }
    }};
}

macro_rules! outln {
    ($($arg:tt)*) => {{
        use std::io::Write as _;
        if let Err(e) = writeln!(std::io::stdout(), $($arg)*) {
            stdout_write_failed(e);
        }
    }};
}

fn stdout_write_failed(e: std::io::Error) -> ! {
    if e.kind() == std::io::ErrorKind::BrokenPipe {
        std::process::exit(0);
    }
    eprintln!("simplicone: cannot write to stdout: {e}");
    std::process::exit(1);
}

#[derive(Parser)]
#[command(
    name = "simplicone",
    version,
    about = "Projection onto simplicial cones via Picard and semi-smooth Newton iterations"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Project a point onto the cone spanned by a generator matrix, then
    /// certify the answer via its Moreau decomposition.
    Project(ProjectArgs),
    /// Run one solver on a stored instance directory and print its report.
    Solve(SolveArgs),
    /// Generate seeded random instances into numbered subdirectories.
    Gen(GenArgs),
    /// Run a benchmark experiment described by a JSON config.
    Bench(BenchArgs),
    /// Recompute performance profile CSVs from an existing records CSV.
    Profile(ProfileArgs),
    /// Project a point onto the monotone nonnegative cone with the O(m)
    /// tridiagonal path.
    Monotone(MonotoneArgs),
}

/// Solver selection and stop-rule flags shared by `project` and `solve`.
#[derive(Args)]
struct SolverFlags {
    /// Iterative method, or the sign-enumeration oracle (m <= 20).
    #[arg(long, value_enum, default_value_t = CliSolver::Picard2)]
    solver: CliSolver,
    /// Relative stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Stopping rule (known needs an instance with a stored solution).
    #[arg(long, value_enum, default_value_t = CliStop::Residual)]
    stop: CliStop,
    /// Iterate even when the method's applicability guard fails.
    #[arg(long)]
    override_guards: bool,
}

impl SolverFlags {
    fn stop_rule(&self) -> StopRule {
        StopRule {
            mode: self.stop.into(),
            rel_tol: self.tol,
            max_iters: self.max_iters,
            override_guards: self.override_guards,
        }
    }
}

#[derive(Clone, Copy, PartialEq, Eq, ValueEnum)]
enum CliSolver {
    Picard1,
    Picard2,
    Ssnewton,
    Oracle,
}

impl CliSolver {
    /// The iterative methods map onto dispatchable choices; the oracle does
    /// not iterate and is handled separately.
    fn to_choice(self) -> Option<SolverChoice> {
        match self {
            CliSolver::Picard1 => Some(SolverChoice::Picard1),
            CliSolver::Picard2 => Some(SolverChoice::Picard2),
            CliSolver::Ssnewton => Some(SolverChoice::SsNewton),
            CliSolver::Oracle => None,
        }
    }

    fn name(self) -> &'static str {
        match self {
            CliSolver::Picard1 => "picard1",
            CliSolver::Picard2 => "picard2",
            CliSolver::Ssnewton => "ssnewton",
            CliSolver::Oracle => "oracle",
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliStop {
    Known,
    Residual,
    Posteriori,
}

impl From<CliStop> for StopMode {
    fn from(s: CliStop) -> StopMode {
        match s {
            CliStop::Known => StopMode::KnownSolution,
            CliStop::Residual => StopMode::Residual,
            CliStop::Posteriori => StopMode::PosterioriBound,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum CliFamily {
    ConformingSvd,
    MonotoneCone,
    RawRandom,
}

impl From<CliFamily> for Family {
    fn from(f: CliFamily) -> Family {
        match f {
            CliFamily::ConformingSvd => Family::ConformingSvd,
            CliFamily::MonotoneCone => Family::MonotoneCone,
            CliFamily::RawRandom => Family::RawRandom,
        }
    }
}

#[derive(Args)]
struct ProjectArgs {
    /// Generator matrix file (first line m, then m rows).
    matrix: PathBuf,
    /// Point to project (first line m, then one entry per line).
    point: PathBuf,
    /// Start vector file; the zero vector when omitted.
    #[arg(long)]
    x0: Option<PathBuf>,
    #[command(flatten)]
    flags: SolverFlags,
}

#[derive(Args)]
struct SolveArgs {
    /// Instance directory as written by `gen`.
    instance: PathBuf,
    #[command(flatten)]
    flags: SolverFlags,
    /// Print the report as JSON instead of key=value lines.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct GenArgs {
    /// Cone dimension m.
    #[arg(long)]
    dim: usize,
    /// Root seed; instance i draws from the sub-seed at index i.
    #[arg(long)]
    seed: u64,
    /// Instance family.
    #[arg(long, value_enum, default_value_t = CliFamily::ConformingSvd)]
    family: CliFamily,
    /// Number of instances to write.
    #[arg(long, default_value_t = 1)]
    count: usize,
    /// Uniform draw range for entries, solutions and start points.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true,
          default_values_t = [-1e6, 1e6])]
    value_range: Vec<f64>,
    /// Output directory; instance i lands in instance-<i>/.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON experiment config (see `BenchConfig` in the docs).
    #[arg(long)]
    config: PathBuf,
    /// Output directory for records.csv, profile-*.csv and table-*.csv.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct ProfileArgs {
    /// Records CSV produced by `bench`.
    #[arg(long)]
    records: PathBuf,
    /// Output directory for the recomputed profile CSVs.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct MonotoneArgs {
    /// Dimension of the drawn point; required with --seed, inferred from
    /// the file with --point.
    #[arg(long)]
    dim: Option<usize>,
    /// Point to project, as a vector file.
    #[arg(long, conflicts_with = "seed")]
    point: Option<PathBuf>,
    /// Draw the point uniformly from the value range instead.
    #[arg(long)]
    seed: Option<u64>,
    /// Uniform draw range used with --seed.
    #[arg(long, num_args = 2, value_names = ["LO", "HI"], allow_negative_numbers = true,
          default_values_t = [-1e6, 1e6])]
    value_range: Vec<f64>,
    /// Relative stopping tolerance.
    #[arg(long, default_value_t = 1e-10)]
    tol: f64,
    /// Iteration budget.
    #[arg(long, default_value_t = 100_000)]
    max_iters: usize,
    /// Print the report as JSON instead of key=value lines.
    #[arg(long)]
    json: bool,
}

/// On-disk experiment description. The schema field is versioned so configs
/// stay replayable; only version 1 exists. `m` accepts a single dimension or
/// a list.
#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BenchConfig {
    schema: u32,
    family: Family,
    m: DimSpec,
    count: usize,
    tolerances: Vec<f64>,
    solvers: Vec<SolverChoice>,
    seed: u64,
    #[serde(default = "BenchConfig::default_stop")]
    stop: StopMode,
    #[serde(default = "BenchConfig::default_max_iters")]
    max_iters: usize,
    #[serde(default)]
    value_range: Option<(f64, f64)>,
}

impl BenchConfig {
    fn default_stop() -> StopMode {
        StopMode::Residual
    }

    fn default_max_iters() -> usize {
        100_000
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Parse(format!("bench config: {msg}")));
        if self.schema != 1 {
            return bad(&format!("unsupported schema version {}", self.schema));
        }
        if self.count == 0 {
            return bad("count must be positive");
        }
        if self.dims().iter().any(|m| *m == 0) {
            return bad("dimensions must be positive");
        }
        if self.tolerances.is_empty() || self.tolerances.iter().any(|t| !(*t > 0.0)) {
            return bad("tolerances must be a nonempty list of positive values");
        }
        if self.solvers.is_empty() {
            return bad("solvers must be nonempty");
        }
        Ok(())
    }

    fn dims(&self) -> Vec<usize> {
        match &self.m {
            DimSpec::One(m) => vec![*m],
            DimSpec::Many(v) => v.clone(),
        }
    }

    fn gen_config(&self, dim: usize) -> GenConfig {
        let mut cfg = GenConfig::new(dim, self.seed).with_family(self.family);
        if let Some((lo, hi)) = self.value_range {
            cfg = cfg.with_value_range(lo, hi);
        }
        cfg
    }
}

#[derive(Deserialize)]
#[serde(untagged)]
enum DimSpec {
    One(usize),
    Many(Vec<usize>),
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            // Help and version surface through the error path but are not
            // usage errors; everything else maps to the usage exit code.
            let code = if err.use_stderr() { 1 } else { 0 };
            let _ = err.print();
            return ExitCode::from(code);
        }
    };
    if let Err(msg) = init_worker_pool() {
        eprintln!("simplicone: {msg}");
        return ExitCode::from(1);
    }
    match run(&cli) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("simplicone: {err}");
            ExitCode::from(err.exit_code() as u8)
        }
    }
}

/// Applies SIMPLICONE_THREADS to the global worker pool. The pool only
/// serves generation and verification; timing stays on the calling thread.
fn init_worker_pool() -> std::result::Result<(), String> {
    match std::env::var("SIMPLICONE_THREADS") {
        Err(_) => Ok(()),
        Ok(raw) => {
            let n: usize = raw
                .parse()
                .map_err(|_| format!("SIMPLICONE_THREADS must be a positive integer, got {raw:?}"))?;
            if n == 0 {
                return Err("SIMPLICONE_THREADS must be a positive integer, got 0".into());
            }
            rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build_global()
                .map_err(|e| format!("worker pool: {e}"))
        }
    }
}

fn run(cli: &Cli) -> Result<ExitCode> {
    match &cli.command {
        Command::Project(args) => cmd_project(args),
        Command::Solve(args) => cmd_solve(args),
        Command::Gen(args) => cmd_gen(args),
        Command::Bench(args) => cmd_bench(args),
        Command::Profile(args) => cmd_profile(args),
        Command::Monotone(args) => cmd_monotone(args),
    }
}

/// Runs the selected method, routing the oracle to sign enumeration and
/// wrapping its answer in an ordinary report (zero iterations).
fn run_report(solver: CliSolver, prob: &ProjectionProblem, stop: &StopRule) -> Result<SolveReport> {
    match solver.to_choice() {
        Some(choice) => run_solver(choice, prob, stop),
        None => {
            let sol = sign_enumeration_solve(prob.cone(), prob.z())?;
            Ok(SolveReport {
                solution: sol.x,
                projection: sol.projection,
                iterations: 0,
                final_residual_norm: sol.residual_norm,
                contraction_factor: None,
                per_iter_errors: None,
                per_iter_bounds: None,
                status: SolveStatus::Converged,
                diverged: false,
            })
        }
    }
}

fn print_report(report: &SolveReport, solver: &str, json: bool) -> Result<()> {
    if json {
        outln!("{}", report_to_json(report, solver)?);
    } else {
        out!("{}", report_to_key_value(report, solver));
    }
    Ok(())
}

/// Certificate acceptance threshold: the stop rule's absolute residual
/// scale relaxed by one order, plus a roundoff floor for the quantities
/// formed from products of magnitude ||p||, ||q|| (the complementarity gap
/// cancels exactly in real arithmetic, so only roundoff survives).
fn certificate_tolerance(prob: &ProjectionProblem, rel_tol: f64, cert: &Certificate) -> f64 {
    let resid_scale = 1.0 + prob.cone().adjoint_apply(prob.z()).norm();
    let gap_scale = (1.0 + cert.projection.norm()) * (1.0 + cert.polar_component.norm());
    10.0 * rel_tol * resid_scale + 1e-12 * gap_scale
}

fn cmd_project(args: &ProjectArgs) -> Result<ExitCode> {
    let a = read_matrix(&args.matrix)?;
    let z = read_vector(&args.point)?;
    let x0 = match &args.x0 {
        Some(path) => read_vector(path)?,
        None => DVector::zeros(z.len()),
    };
    let cone = make_cone(a, DEFAULT_SINGULARITY_TOL)?;
    let prob = ProjectionProblem::new(cone, z, x0)?;
    let stop = args.flags.stop_rule();

    let report = run_report(args.flags.solver, &prob, &stop)?;
    print_report(&report, args.flags.solver.name(), false)?;
    if !report.status.is_converged() {
        eprintln!(
            "simplicone: no certified projection, solver stopped with status {}",
            report.status.as_str()
        );
        return Ok(ExitCode::from(2));
    }

    let cert = certify(prob.cone(), prob.z(), &report.solution)?;
    let cert_tol = certificate_tolerance(&prob, stop.rel_tol, &cert);
    let accepted = cert.accepted(cert_tol);
    outln!("polar_component={}", join_floats(&cert.polar_component));
    outln!(
        "certificate={} (tol {})",
        if accepted { "accepted" } else { "rejected" },
        format_f64(cert_tol)
    );
    if !accepted {
        eprintln!(
            "simplicone: warning: Moreau certificate rejected at tolerance {cert_tol:.3e}; \
             the printed projection is not certified"
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn join_floats(v: &DVector<f64>) -> String {
    v.iter().map(|t| format_f64(*t)).collect::<Vec<_>>().join(" ")
}

fn cmd_solve(args: &SolveArgs) -> Result<ExitCode> {
    let (prob, _meta) = load_instance(&args.instance)?;
    let report = run_report(args.flags.solver, &prob, &args.flags.stop_rule())?;
    print_report(&report, args.flags.solver.name(), args.json)?;
    if !report.status.is_converged() {
        eprintln!(
            "simplicone: solver stopped without converging, status {}",
            report.status.as_str()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}

fn cmd_gen(args: &GenArgs) -> Result<ExitCode> {
    if args.dim == 0 {
        return Err(Error::Parse("gen: --dim must be positive".into()));
    }
    if args.count == 0 {
        return Err(Error::Parse("gen: --count must be positive".into()));
    }
    let cfg = GenConfig::new(args.dim, args.seed)
        .with_family(args.family.into())
        .with_value_range(args.value_range[0], args.value_range[1]);
    for index in 0..args.count {
        let gp = gen_instance(&cfg, index)?;
        let dir = args.out.join(format!("instance-{index:03}"));
        save_instance(&dir, &gp)?;
        outln!("{}", dir.display());
    }
    Ok(ExitCode::SUCCESS)
}

/// File name of the per-solver profile CSV for one (dimension, tolerance)
/// group; shared by `bench` and `profile` so recomputation reproduces the
/// exact same files.
fn profile_file_name(dim: usize, tol: f64, solver: SolverChoice) -> String {
    format!("profile-m{dim}-tol{tol:e}-{}.csv", solver.as_str())
}

/// Writes one profile CSV per (dimension, tolerance, solver) present in the
/// records. Groups where no solver converged are skipped with a warning,
/// consistent with failures being recorded rather than fatal.
fn write_profiles(out: &Path, records: &[RunRecord]) -> Result<()> {
    let grid = default_tau_grid();
    let mut keys: Vec<(usize, u64)> = records
        .iter()
        .map(|r| (r.dim, r.rel_tol.to_bits()))
        .collect();
    keys.sort_unstable();
    keys.dedup();

    for (dim, tol_bits) in keys {
        let tol = f64::from_bits(tol_bits);
        let group: Vec<RunRecord> = records
            .iter()
            .filter(|r| r.dim == dim && r.rel_tol.to_bits() == tol_bits)
            .cloned()
            .collect();
        let mut solvers: Vec<SolverChoice> = group.iter().map(|r| r.solver).collect();
        solvers.sort_unstable();
        solvers.dedup();
        match build_profile(&group, &solvers) {
            Ok(profiles) => {
                for p in &profiles {
                    let path = out.join(profile_file_name(dim, tol, p.solver));
                    fs::write(&path, profiles_to_csv(std::slice::from_ref(p), &grid))?;
                }
            }
            Err(Error::NoConvergedRecord { problem_id }) => {
                eprintln!(
                    "simplicone: warning: no converged record for problem {problem_id} \
                     (m = {dim}, tol = {tol:e}); skipping this profile group"
                );
            }
            Err(other) => return Err(other),
        }
    }
    Ok(())
}

/// Writes one aggregate table CSV per solver present in the records.
fn write_tables(out: &Path, records: &[RunRecord]) -> Result<()> {
    let mut solvers: Vec<SolverChoice> = records.iter().map(|r| r.solver).collect();
    solvers.sort_unstable();
    solvers.dedup();
    for solver in solvers {
        let own: Vec<RunRecord> = records
            .iter()
            .filter(|r| r.solver == solver)
            .cloned()
            .collect();
        let table = aggregate_table(&own);
        fs::write(
            out.join(format!("table-{}.csv", solver.as_str())),
            table_to_csv(&table),
        )?;
    }
    Ok(())
}

fn cmd_bench(args: &BenchArgs) -> Result<ExitCode> {
    let config: BenchConfig = serde_json::from_str(&fs::read_to_string(&args.config)?)?;
    config.validate()?;
    fs::create_dir_all(&args.out)?;

    let mut records: Vec<RunRecord> = Vec::new();
    for dim in config.dims() {
        let cfg = config.gen_config(dim);
        // Generation and validation parallelize cleanly because instance i
        // depends only on sub_seed(seed, i); timing below stays serial.
        let problems: Vec<GeneratedProblem> = (0..config.count)
            .into_par_iter()
            .map(|index| gen_instance(&cfg, index))
            .collect::<Result<_>>()?;
        for (index, gp) in problems.iter().enumerate() {
            let problem_id = format!("{}-m{dim}-p{index:03}", config.family.as_str());
            for &tol in &config.tolerances {
                let stop = StopRule {
                    mode: config.stop,
                    rel_tol: tol,
                    max_iters: config.max_iters,
                    override_guards: false,
                };
                for &solver in &config.solvers {
                    match time_solver(&problem_id, &gp.problem, solver, &stop) {
                        Ok(record) => records.push(record),
                        // A hard numerical failure in one cell is recorded
                        // as a non-result and the sweep continues.
                        Err(err) if err.exit_code() == 2 => {
                            eprintln!(
                                "simplicone: warning: {} on {problem_id} at tol {tol:e}: {err}",
                                solver.as_str()
                            );
                            records.push(RunRecord {
                                problem_id: problem_id.clone(),
                                solver,
                                dim,
                                rel_tol: tol,
                                runtime_s: f64::INFINITY,
                                iterations: 0,
                                status: SolveStatus::NotApplicable,
                            });
                        }
                        Err(err) => return Err(err),
                    }
                }
            }
        }
    }

    fs::write(args.out.join("records.csv"), records_to_csv(&records))?;
    write_profiles(&args.out, &records)?;
    write_tables(&args.out, &records)?;
    outln!("{}", args.out.join("records.csv").display());
    Ok(ExitCode::SUCCESS)
}

fn cmd_profile(args: &ProfileArgs) -> Result<ExitCode> {
    let records = records_from_csv(&fs::read_to_string(&args.records)?)?;
    fs::create_dir_all(&args.out)?;
    write_profiles(&args.out, &records)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_monotone(args: &MonotoneArgs) -> Result<ExitCode> {
    let z = match (&args.point, args.seed) {
        (Some(path), _) => {
            let z = read_vector(path)?;
            if let Some(dim) = args.dim {
                if dim != z.len() {
                    return Err(Error::DimensionMismatch {
                        expected: dim,
                        got: z.len(),
                    });
                }
            }
            z
        }
        (None, Some(seed)) => {
            let dim = args.dim.ok_or_else(|| {
                Error::Parse("monotone: --seed needs --dim to size the draw".into())
            })?;
            if dim == 0 {
                return Err(Error::Parse("monotone: --dim must be positive".into()));
            }
            let (lo, hi) = (args.value_range[0], args.value_range[1]);
            let mut rng = ChaCha8Rng::seed_from_u64(sub_seed(seed, 0));
            DVector::from_iterator(dim, (0..dim).map(|_| rng.random_range(lo..hi)))
        }
        (None, None) => {
            return Err(Error::Parse(
                "monotone: pass a point file with --point or draw one with --seed".into(),
            ))
        }
    };

    let stop = StopRule {
        mode: StopMode::Residual,
        rel_tol: args.tol,
        max_iters: args.max_iters,
        override_guards: false,
    };
    let (projection, inner) = project_monotone_cone(&z, &stop)?;
    // The printed projection is the point's projection onto the monotone
    // cone; solution and residual describe the underlying fixed-point solve.
    let report = SolveReport {
        projection,
        ..inner
    };
    print_report(&report, "picard2", args.json)?;
    if !report.status.is_converged() {
        eprintln!(
            "simplicone: solver stopped without converging, status {}",
            report.status.as_str()
        );
        return Ok(ExitCode::from(2));
    }
    Ok(ExitCode::SUCCESS)
}
