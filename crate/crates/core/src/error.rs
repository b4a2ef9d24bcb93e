use thiserror::Error;

use crate::permutation::PermutationSet;
use crate::solver::Infeasible;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("amplitudes are not normalized: squared norm {norm_sq} deviates from 1")]
    Norm { norm_sq: f64 },

    #[error("amplitude at level {level} is zero or below tolerance ({value:e})")]
    ZeroAmplitude { level: usize, value: f64 },

    #[error("empty amplitude list")]
    Empty,

    #[error("amplitudes are not in descending order at level {level}")]
    NotDescending { level: usize },

    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },

    #[error("dimension {dim} exceeds the guard of {max}")]
    DimensionTooLarge { dim: usize, max: usize },

    #[error("target does not majorize source (first violated partial sum k = {first_violation})")]
    Majorization { first_violation: usize },

    #[error("invalid case pattern: {0}")]
    InvalidPattern(String),

    #[error("no non-crossing permutation set contains all mandatory permutations")]
    NoCandidate,

    #[error("no feasible permutation set among {} candidates", attempts.len())]
    NoFeasibleSp {
        attempts: Vec<(PermutationSet, Infeasible)>,
    },

    #[error("degenerate gap gamma({x},{y}) = {gamma:e}")]
    DegenerateGamma { x: usize, y: usize, gamma: f64 },

    #[error("negative radicand {value:e} in balance coefficient")]
    NegativeRadicand { value: f64 },

    #[error("block mismatch: {0}")]
    BlockMismatch(String),

    #[error("operator is not incoherent: column {col} has more than one nonzero entry")]
    NotMonomial { col: usize },

    #[error("no valid intermediate state found for {unfixed} unfixed levels")]
    NoIntermediateFound { unfixed: usize },

    #[error("invalid density matrix: {0}")]
    InvalidDensity(String),

    #[error("parse error: {0}")]
    Parse(String),
}
