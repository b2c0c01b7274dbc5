//! Seeded random problem instances.
//!
//! The conforming family draws a target deviation b_bar and reshapes a
//! random matrix so that ||A^T A - I|| equals b_bar exactly: with the
//! singular value decomposition M = S V D and nu the largest singular value,
//!
//! ```text
//!     A = S * sqrt(I + (b_bar / nu) V) * D
//! ```
//!
//! gives A^T A the eigenvalues 1 + (b_bar / nu) sigma_i, all in
//! [1, 1 + b_bar]. Since b_bar < b < 1/3, every solver's guard passes on
//! these instances.
//!
//! Each instance also carries an exact solution: drawing u at random and
//! setting z = A u^+ - (A^T)^{-1} u^- makes u the unique fixed point of the
//! nonsmooth equation, which is what error-based stopping measures against.
//!
//! All draws run through ChaCha8 streams keyed by a documented splitmix64
//! mixing of (seed, index), so any instance of a set can be regenerated
//! alone, in any order, on any platform.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::cone::{make_cone, negative_part, positive_part, ProjectionProblem, SimplicialCone, DEFAULT_SINGULARITY_TOL};
use crate::error::{Error, Result};
use crate::monotone::monotone_generator;

/// Which instance family to draw.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    /// Random generator reshaped so gram_norm_dev equals a drawn b_bar < 1/3.
    ConformingSvd,
    /// The fixed lower-bidiagonal difference generator.
    MonotoneCone,
    /// Plain uniform random generator, no conditioning control.
    RawRandom,
}

impl Family {
    pub fn as_str(self) -> &'static str {
        match self {
            Family::ConformingSvd => "conforming_svd",
            Family::MonotoneCone => "monotone_cone",
            Family::RawRandom => "raw_random",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "conforming_svd" | "conforming-svd" => Ok(Family::ConformingSvd),
            "monotone_cone" | "monotone-cone" | "monotone" => Ok(Family::MonotoneCone),
            "raw_random" | "raw-random" | "raw" => Ok(Family::RawRandom),
            other => Err(Error::Parse(format!("unknown family {other:?}"))),
        }
    }
}

/// Parameters of one drawn instance (or of a whole set, with per-index
/// sub-seeds derived from `seed`).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GenConfig {
    pub dim: usize,
    pub seed: u64,
    /// Uniform range for raw matrix entries and for the coordinates of the
    /// known solution and the start point.
    pub value_range: (f64, f64),
    pub family: Family,
}

impl GenConfig {
    /// The conforming family at the customary value range [-1e6, 1e6].
    pub fn new(dim: usize, seed: u64) -> Self {
        GenConfig {
            dim,
            seed,
            value_range: (-1e6, 1e6),
            family: Family::ConformingSvd,
        }
    }

    pub fn with_family(mut self, family: Family) -> Self {
        self.family = family;
        self
    }

    pub fn with_value_range(mut self, lo: f64, hi: f64) -> Self {
        self.value_range = (lo, hi);
        self
    }
}

/// splitmix64 finalizer, the documented mixing primitive for sub-seeds.
fn splitmix64(mut s: u64) -> u64 {
    s = s.wrapping_add(0x9E3779B97F4A7C15);
    s = (s ^ (s >> 30)).wrapping_mul(0xBF58476D1CE4E5B9);
    s = (s ^ (s >> 27)).wrapping_mul(0x94D049BB133111EB);
    s ^ (s >> 31)
}

/// Documented sub-seed rule: mix(seed, stream) feeds one ChaCha8 stream.
/// Problem i of a set lives on stream i; within an instance, matrix draws
/// and solution/start draws use two fixed disjoint stream tags.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    splitmix64(seed.wrapping_add((stream.wrapping_add(1)).wrapping_mul(0x9E3779B97F4A7C15)))
}

const MATRIX_STREAM: u64 = 0x4D41_5452_4958_0000;
const PROBLEM_STREAM: u64 = 0x5052_4F42_4C45_4D00;

fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(sub_seed(seed, stream))
}

fn draw_vector(rng: &mut ChaCha8Rng, m: usize, range: (f64, f64)) -> DVector<f64> {
    DVector::from_iterator(m, (0..m).map(|_| rng.random_range(range.0..range.1)))
}

/// Draws a generator with gram_norm_dev equal to a random target b_bar,
/// returned alongside the matrix. The draws, in order: b uniform on
/// (0, 1/3), b_bar uniform on (0, b), then the m*m source entries row by
/// row. The source matrix only contributes its singular vectors; rescaling
/// the singular values to sqrt(1 + (b_bar/nu) sigma_i) pins the deviation.
pub fn gen_conforming_matrix(cfg: &GenConfig) -> Result<(DMatrix<f64>, f64)> {
    let m = cfg.dim;
    let mut rng = stream_rng(cfg.seed, MATRIX_STREAM);
    let b: f64 = rng.random_range(0.0..1.0 / 3.0);
    let b_bar: f64 = rng.random_range(0.0..b);
    let entries: Vec<f64> = (0..m * m)
        .map(|_| rng.random_range(cfg.value_range.0..cfg.value_range.1))
        .collect();
    let msrc = DMatrix::from_row_slice(m, m, &entries);
    let svd = msrc.svd(true, true);
    let nu = svd.singular_values.amax();
    if !(nu > 0.0) {
        return Err(Error::DegenerateSvd);
    }
    let scale =
        DMatrix::from_diagonal(&svd.singular_values.map(|s| (1.0 + (b_bar / nu) * s).sqrt()));
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    Ok((u * scale * v_t, b_bar))
}

/// Family dispatch used by instance assembly.
fn gen_generator(cfg: &GenConfig) -> Result<(DMatrix<f64>, Option<f64>)> {
    match cfg.family {
        Family::ConformingSvd => gen_conforming_matrix(cfg).map(|(a, b)| (a, Some(b))),
        Family::MonotoneCone => Ok((monotone_generator(cfg.dim), None)),
        Family::RawRandom => {
            let mut rng = stream_rng(cfg.seed, MATRIX_STREAM);
            let entries: Vec<f64> = (0..cfg.dim * cfg.dim)
                .map(|_| rng.random_range(cfg.value_range.0..cfg.value_range.1))
                .collect();
            Ok((DMatrix::from_row_slice(cfg.dim, cfg.dim, &entries), None))
        }
    }
}

/// Draws the known solution u and the start x0, and assembles the instance
/// with z = A u^+ - (A^T)^{-1} u^-. The attached solution is validated
/// against the residual bound, so the result is safe for KnownSolution
/// stopping.
pub fn gen_problem(cfg: &GenConfig, cone: Arc<SimplicialCone>) -> Result<ProjectionProblem> {
    let m = cone.dim();
    let mut rng = stream_rng(cfg.seed, PROBLEM_STREAM);
    let u = draw_vector(&mut rng, m, cfg.value_range);
    let x0 = draw_vector(&mut rng, m, cfg.value_range);

    let polar_part = cone
        .generator()
        .transpose()
        .lu()
        .solve(&negative_part(&u))
        .ok_or(Error::SingularMatrix {
            ratio: 0.0,
            tol: DEFAULT_SINGULARITY_TOL,
        })?;
    let z = cone.generator() * positive_part(&u) - polar_part;
    ProjectionProblem::new(cone, z, x0)?.with_known_solution(u)
}

/// One generated instance plus its provenance record.
#[derive(Debug, Clone)]
pub struct GeneratedProblem {
    pub problem: ProjectionProblem,
    pub meta: InstanceMeta,
}

/// Provenance of a generated instance, written next to it on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceMeta {
    pub schema: u32,
    pub family: Family,
    pub dim: usize,
    /// Root seed of the set this instance belongs to.
    pub seed: u64,
    /// Index within the set; the instance's own streams are derived from
    /// sub_seed(seed, index).
    pub index: usize,
    /// Drawn deviation target for the conforming family.
    pub b_bar: Option<f64>,
    pub value_range: (f64, f64),
}

/// Regenerates instance `index` of the set rooted at `cfg.seed`, bit-for-bit
/// identical however often and in whatever order instances are requested.
pub fn gen_instance(cfg: &GenConfig, index: usize) -> Result<GeneratedProblem> {
    let sub = GenConfig {
        seed: sub_seed(cfg.seed, index as u64),
        ..*cfg
    };
    let (a, b_bar) = gen_generator(&sub)?;
    let cone = Arc::new(make_cone(a, DEFAULT_SINGULARITY_TOL)?);
    let problem = gen_problem(&sub, cone)?;
    Ok(GeneratedProblem {
        problem,
        meta: InstanceMeta {
            schema: 1,
            family: cfg.family,
            dim: cfg.dim,
            seed: cfg.seed,
            index,
            b_bar,
            value_range: cfg.value_range,
        },
    })
}

/// Draws `count` independent instances. The monotone family shares one cone
/// across the set, so large-m sets do not repeat the eigensolve.
pub fn gen_experiment_set(cfg: &GenConfig, count: usize) -> Result<Vec<GeneratedProblem>> {
    if cfg.family != Family::MonotoneCone {
        return (0..count).map(|i| gen_instance(cfg, i)).collect();
    }
    let cone = Arc::new(make_cone(monotone_generator(cfg.dim), DEFAULT_SINGULARITY_TOL)?);
    (0..count)
        .map(|i| {
            let sub = GenConfig {
                seed: sub_seed(cfg.seed, i as u64),
                ..*cfg
            };
            let problem = gen_problem(&sub, Arc::clone(&cone))?;
            Ok(GeneratedProblem {
                problem,
                meta: InstanceMeta {
                    schema: 1,
                    family: cfg.family,
                    dim: cfg.dim,
                    seed: cfg.seed,
                    index: i,
                    b_bar: None,
                    value_range: cfg.value_range,
                },
            })
        })
        .collect()
}
