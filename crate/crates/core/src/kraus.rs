//! Kraus operators of a solved permutation set, channel verification, and the
//! equivalent LOCC protocol on `d ⊗ d` entangled states.

use nalgebra::{DMatrix, DVector};

use crate::coherence::{CoherenceVector, DensityMatrix};
use crate::error::{Error, Result};
use crate::permutation::{PermutationSet, Transposition};
use crate::solver::{CoefficientMatrix, ProbabilityVector};
use crate::tolerance::Tolerances;

/// Generalized permutation matrix stored column by column: column `j` holds
/// `value` at `row`, or nothing.
#[derive(Debug, Clone, PartialEq)]
pub struct KrausOperator {
    dim: usize,
    columns: Vec<Option<(usize, f64)>>,
}

impl KrausOperator {
    pub fn zero(dim: usize) -> Self {
        Self {
            dim,
            columns: vec![None; dim],
        }
    }

    /// Builds an operator from 0-based `(row, col, value)` triplets. Exact
    /// zeros are dropped; two nonzeros in one column fail with
    /// [`Error::NotMonomial`].
    pub fn from_triplets(dim: usize, triplets: &[(usize, usize, f64)]) -> Result<Self> {
        let mut op = Self::zero(dim);
        for &(row, col, value) in triplets {
            if row >= dim || col >= dim {
                return Err(Error::DimensionMismatch {
                    left: dim,
                    right: row.max(col) + 1,
                });
            }
            if value == 0.0 {
                continue;
            }
            if op.columns[col].is_some() {
                return Err(Error::NotMonomial { col });
            }
            op.columns[col] = Some((row, value));
        }
        Ok(op)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn column(&self, j: usize) -> Option<(usize, f64)> {
        self.columns[j]
    }

    pub fn is_zero(&self) -> bool {
        self.columns.iter().all(|c| c.is_none())
    }

    /// Nonzero entries as 0-based `(row, col, value)`, by column.
    pub fn triplets(&self) -> Vec<(usize, usize, f64)> {
        self.columns
            .iter()
            .enumerate()
            .filter_map(|(j, c)| c.map(|(r, v)| (r, j, v)))
            .collect()
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for (r, c, v) in self.triplets() {
            m[(r, c)] = v;
        }
        m
    }

    /// `K rho K^T`, using the monomial structure.
    pub fn sandwich(&self, rho: &DMatrix<f64>) -> DMatrix<f64> {
        let mut out = DMatrix::zeros(self.dim, self.dim);
        let nz = self.triplets();
        for &(r1, c1, v1) in &nz {
            for &(r2, c2, v2) in &nz {
                out[(r1, r2)] += v1 * v2 * rho[(c1, c2)];
            }
        }
        out
    }

    pub fn apply_vector(&self, v: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.dim];
        for (r, c, val) in self.triplets() {
            out[r] += val * v[c];
        }
        out
    }
}

/// Structural incoherence check on raw triplets: at most one nonzero entry
/// per column.
pub fn is_incoherent(dim: usize, triplets: &[(usize, usize, f64)]) -> bool {
    let mut seen = vec![false; dim];
    for &(_, col, value) in triplets {
        if value == 0.0 {
            continue;
        }
        if col >= dim || seen[col] {
            return false;
        }
        seen[col] = true;
    }
    true
}

#[derive(Debug, Clone, PartialEq)]
pub struct IncoherentChannel {
    pub dim: usize,
    pub kraus: Vec<KrausOperator>,
    pub probabilities: ProbabilityVector,
    pub sp: PermutationSet,
}

fn check_inputs(
    sp: &PermutationSet,
    probabilities: &ProbabilityVector,
    cmat: &CoefficientMatrix,
    source: &CoherenceVector,
    tol: &Tolerances,
) -> Result<()> {
    let d = source.dim();
    for (left, right) in [
        (sp.dim(), d),
        (cmat.dim(), d),
        (cmat.operators(), sp.len()),
        (probabilities.len(), sp.len()),
    ] {
        if left != right {
            return Err(Error::DimensionMismatch { left, right });
        }
    }
    if let Some((level, &a)) = source.amps().iter().enumerate().find(|(_, a)| **a <= tol.amp) {
        return Err(Error::ZeroAmplitude { level, value: a });
    }
    Ok(())
}

/// `K_i = U^i · sqrt(p_i) · diag(c[i][j] / psi_j)`. Zero-probability operators
/// are kept as zero operators.
pub fn build_kraus(
    sp: &PermutationSet,
    probabilities: &ProbabilityVector,
    cmat: &CoefficientMatrix,
    source: &CoherenceVector,
    tol: &Tolerances,
) -> Result<IncoherentChannel> {
    check_inputs(sp, probabilities, cmat, source, tol)?;
    let d = source.dim();
    let kraus = (0..sp.len())
        .map(|i| {
            let sq = probabilities.get(i).sqrt();
            let columns = (0..d)
                .map(|j| {
                    let v = sq * cmat.get(i, j) / source.amp(j);
                    (v != 0.0).then(|| (sp.apply(i, j), v))
                })
                .collect();
            KrausOperator { dim: d, columns }
        })
        .collect();
    Ok(IncoherentChannel {
        dim: d,
        kraus,
        probabilities: probabilities.clone(),
        sp: sp.clone(),
    })
}

/// `max |sum_i K_i^T K_i - I|`.
pub fn verify_completeness(channel: &IncoherentChannel) -> f64 {
    let d = channel.dim;
    let mut sum = DMatrix::<f64>::zeros(d, d);
    for k in &channel.kraus {
        let m = k.to_dense();
        sum += m.transpose() * m;
    }
    (sum - DMatrix::identity(d, d)).amax()
}

pub fn apply_channel(channel: &IncoherentChannel, rho: &DensityMatrix) -> Result<DensityMatrix> {
    if rho.dim() != channel.dim {
        return Err(Error::DimensionMismatch {
            left: channel.dim,
            right: rho.dim(),
        });
    }
    let mut out = DMatrix::zeros(channel.dim, channel.dim);
    for k in &channel.kraus {
        out += k.sandwich(rho.matrix());
    }
    Ok(DensityMatrix::from_matrix_unchecked(out))
}

pub fn verify_incoherent(channel: &IncoherentChannel) -> bool {
    channel
        .kraus
        .iter()
        .all(|k| k.dim() == channel.dim && is_incoherent(channel.dim, &k.triplets()))
}

/// A `d`-outcome diagonal measurement on one party followed by the same
/// permutation of both parties' levels.
#[derive(Debug, Clone, PartialEq)]
pub struct LoccPlan {
    pub dim: usize,
    /// Diagonal of `M^i`.
    pub measurement: Vec<Vec<f64>>,
    /// `None` is the identity.
    pub corrections: Vec<Option<Transposition>>,
    pub probabilities: ProbabilityVector,
}

impl LoccPlan {
    /// `max |sum_i (M^i)^2 - I|`.
    pub fn completeness(&self) -> f64 {
        (0..self.dim)
            .map(|j| {
                let s: f64 = self.measurement.iter().map(|m| m[j] * m[j]).sum();
                (s - 1.0).abs()
            })
            .fold(0.0, f64::max)
    }
}

pub fn build_locc_plan(
    sp: &PermutationSet,
    probabilities: &ProbabilityVector,
    cmat: &CoefficientMatrix,
    source: &CoherenceVector,
    tol: &Tolerances,
) -> Result<LoccPlan> {
    check_inputs(sp, probabilities, cmat, source, tol)?;
    let d = source.dim();
    let measurement = (0..sp.len())
        .map(|i| {
            let sq = probabilities.get(i).sqrt();
            (0..d).map(|j| sq * cmat.get(i, j) / source.amp(j)).collect()
        })
        .collect();
    Ok(LoccPlan {
        dim: d,
        measurement,
        corrections: (0..sp.len()).map(|i| sp.member(i)).collect(),
        probabilities: probabilities.clone(),
    })
}

pub const LOCC_MAX_DIM: usize = 16;

#[derive(Debug, Clone, PartialEq)]
pub struct LoccOutcome {
    /// Norm of the unnormalized post-measurement state, squared.
    pub probability: f64,
    /// `|<Phi|Psi_i>|^2` after correction; `None` for an outcome that never occurs.
    pub overlap: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoccReport {
    pub outcomes: Vec<LoccOutcome>,
    pub total_probability: f64,
}

impl LoccReport {
    pub fn min_overlap(&self) -> f64 {
        self.outcomes
            .iter()
            .filter_map(|o| o.overlap)
            .fold(1.0, f64::min)
    }
}

/// Runs the plan on the full `d^2`-dimensional state `sum_j psi_j |jj>`.
pub fn simulate_locc(
    plan: &LoccPlan,
    source: &CoherenceVector,
    target: &CoherenceVector,
) -> Result<LoccReport> {
    let d = plan.dim;
    if d > LOCC_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: LOCC_MAX_DIM,
        });
    }
    for other in [source.dim(), target.dim()] {
        if other != d {
            return Err(Error::DimensionMismatch { left: d, right: other });
        }
    }
    let idx = |a: usize, b: usize| a * d + b;
    let mut psi = DVector::<f64>::zeros(d * d);
    let mut phi = DVector::<f64>::zeros(d * d);
    for j in 0..d {
        psi[idx(j, j)] = source.amp(j);
        phi[idx(j, j)] = target.amp(j);
    }
    let mut outcomes = Vec::with_capacity(plan.measurement.len());
    for (m, u) in plan.measurement.iter().zip(&plan.corrections) {
        // (M ⊗ I) acts on the first factor
        let measured = DVector::from_fn(d * d, |k, _| m[k / d] * psi[k]);
        let probability = measured.norm_squared();
        let overlap = (probability > 0.0).then(|| {
            let normalized = &measured / probability.sqrt();
            let perm = |a: usize| u.map_or(a, |t| t.apply(a));
            let mut corrected = DVector::<f64>::zeros(d * d);
            for a in 0..d {
                for b in 0..d {
                    corrected[idx(perm(a), perm(b))] = normalized[idx(a, b)];
                }
            }
            phi.dot(&corrected).powi(2)
        });
        outcomes.push(LoccOutcome { probability, overlap });
    }
    let total_probability = outcomes.iter().map(|o| o.probability).sum();
    Ok(LoccReport {
        outcomes,
        total_probability,
    })
}
