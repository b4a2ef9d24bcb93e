//! Probability systems for candidate permutation sets.
//!
//! For a permutation set `{U^0 = I, U^1, ..., U^{n-1}}` the post-measurement
//! states have coefficients `c[i] = (U^i)^T phi`, and the outcome
//! probabilities must satisfy `sum_i p_i c[i][j]^2 = psi_j^2` for every level
//! `j`. Feasibility is decided numerically by solving this system.

use std::fmt;

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use crate::coherence::{majorizes, CoherenceVector};
use crate::error::{Error, Result};
use crate::permutation::{
    build_table, enumerate_sps, mandatory_permutations, sign_pattern, CasePattern, PermutationSet,
    PermutationTable, Transposition,
};
use crate::sampling::sample_pair_with_pattern;
use crate::tolerance::Tolerances;

/// Rows are the coefficient vectors of the post-measurement states.
#[derive(Debug, Clone, PartialEq)]
pub struct CoefficientMatrix {
    c: DMatrix<f64>,
}

impl CoefficientMatrix {
    /// Number of rows (operators).
    pub fn operators(&self) -> usize {
        self.c.nrows()
    }

    pub fn dim(&self) -> usize {
        self.c.ncols()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.c[(i, j)]
    }

    pub fn row(&self, i: usize) -> Vec<f64> {
        self.c.row(i).iter().copied().collect()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.c
    }
}

pub fn coefficient_matrix(sp: &PermutationSet, target: &CoherenceVector) -> Result<CoefficientMatrix> {
    let d = target.dim();
    if sp.dim() != d {
        return Err(Error::DimensionMismatch {
            left: sp.dim(),
            right: d,
        });
    }
    let phi = target.amps();
    let c = DMatrix::from_fn(sp.len(), d, |i, j| phi[sp.apply(i, j)]);
    Ok(CoefficientMatrix { c })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbabilityVector {
    values: Vec<f64>,
}

impl ProbabilityVector {
    pub fn new(values: Vec<f64>) -> Self {
        Self { values }
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn get(&self, i: usize) -> f64 {
        self.values[i]
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn sum(&self) -> f64 {
        self.values.iter().sum()
    }
}

/// Why a candidate permutation set was rejected.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Infeasible {
    #[error("negative probability {value:e} for operator {index}")]
    NegativeProbability { index: usize, value: f64 },
    #[error("singular system")]
    Singular,
    #[error("residual {residual:e} exceeds tolerance")]
    Residual { residual: f64 },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
}

/// Solves `A p = psi^2` with `A[j][i] = c[i][j]^2`.
///
/// Identical columns (swaps of equal target amplitudes) are merged before
/// solving and the merged probability goes to the first operator of each
/// group. Square systems use LU; rank-deficient or rectangular ones fall back
/// to the minimum-norm least-squares solution.
pub fn solve_probabilities(
    cmat: &CoefficientMatrix,
    source: &CoherenceVector,
    tol: &Tolerances,
) -> std::result::Result<ProbabilityVector, Infeasible> {
    let d = cmat.dim();
    let n = cmat.operators();
    if source.dim() != d {
        return Err(Infeasible::DimensionMismatch {
            left: d,
            right: source.dim(),
        });
    }
    let a = cmat.c.map(|x| x * x).transpose();
    let rhs = DVector::from_iterator(d, source.amps().iter().map(|x| x * x));

    let mut groups: Vec<usize> = Vec::new();
    for i in 0..n {
        let dup = groups
            .iter()
            .any(|&g| (a.column(g) - a.column(i)).amax() <= tol.amp);
        if !dup {
            groups.push(i);
        }
    }
    let b = a.select_columns(&groups);

    let mut rank_deficient = false;
    let q = if b.is_square() {
        b.clone().lu().solve(&rhs)
    } else {
        None
    };
    let q = match q {
        Some(q) if q.iter().all(|x| x.is_finite()) => q,
        _ => {
            let svd = b.clone().svd(true, true);
            let smax = svd.singular_values.max();
            let cutoff = smax * 1e-13 * (d.max(n) as f64);
            rank_deficient = svd.rank(cutoff) < groups.len().min(d);
            svd.solve(&rhs, cutoff).map_err(|_| Infeasible::Singular)?
        }
    };
    let residual = (&b * &q - &rhs).amax();
    if !residual.is_finite() || residual > tol.res {
        return Err(if rank_deficient {
            Infeasible::Singular
        } else {
            Infeasible::Residual { residual }
        });
    }
    if let Some((k, &v)) = q
        .iter()
        .enumerate()
        .filter(|(_, v)| **v < -tol.prob)
        .min_by(|a, b| a.1.total_cmp(b.1))
    {
        return Err(Infeasible::NegativeProbability {
            index: groups[k],
            value: v,
        });
    }
    let mut p = vec![0.0; n];
    for (k, &g) in groups.iter().enumerate() {
        p[g] = q[k].max(0.0);
    }
    let s: f64 = p.iter().sum();
    if s <= 0.0 {
        return Err(Infeasible::Singular);
    }
    p.iter_mut().for_each(|x| *x /= s);
    Ok(ProbabilityVector { values: p })
}

/// `max_j |sum_i p_i c[i][j]^2 - psi_j^2|`.
pub fn system_residual(cmat: &CoefficientMatrix, p: &ProbabilityVector, source: &CoherenceVector) -> f64 {
    (0..cmat.dim())
        .map(|j| {
            let lhs: f64 = (0..cmat.operators())
                .map(|i| p.get(i) * cmat.get(i, j).powi(2))
                .sum();
            (lhs - source.amp(j).powi(2)).abs()
        })
        .fold(0.0, f64::max)
}

/// `sum_{i=from..=to} (phi_i^2 - psi_i^2)`, 0-based inclusive.
pub fn alpha(source: &CoherenceVector, target: &CoherenceVector, from: usize, to: usize) -> f64 {
    (from..=to)
        .map(|i| target.amp(i).powi(2) - source.amp(i).powi(2))
        .sum()
}

/// `sum_{i=from..=to} (psi_i^2 - phi_i^2)`, 0-based inclusive.
pub fn beta(source: &CoherenceVector, target: &CoherenceVector, from: usize, to: usize) -> f64 {
    -alpha(source, target, from, to)
}

/// `phi_x^2 - phi_y^2`, 0-based.
pub fn gamma(target: &CoherenceVector, x: usize, y: usize) -> f64 {
    target.amp(x).powi(2) - target.amp(y).powi(2)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ClosedFormKind {
    /// `(v, m)` alone in column `v`: `alpha_v / gamma_vm`.
    ColumnUnique,
    /// `(h, k)` alone in row `k`: `beta_k / gamma_hk`.
    RowUnique,
    /// `(u, u+1)`: `alpha_u / gamma`.
    AdjacentAlpha,
    /// `(u, u+1)`: `beta_{u+1} / gamma`.
    AdjacentBeta,
}

pub fn closed_form_probability(
    t: Transposition,
    kind: ClosedFormKind,
    source: &CoherenceVector,
    target: &CoherenceVector,
    tol: &Tolerances,
) -> Result<f64> {
    let (x, y) = (t.x(), t.y());
    let g = gamma(target, x, y);
    if g <= tol.amp * tol.amp {
        return Err(Error::DegenerateGamma {
            x: x + 1,
            y: y + 1,
            gamma: g,
        });
    }
    let num = match kind {
        ClosedFormKind::ColumnUnique | ClosedFormKind::AdjacentAlpha => alpha(source, target, x, x),
        ClosedFormKind::RowUnique | ClosedFormKind::AdjacentBeta => beta(source, target, y, y),
    };
    Ok(num / g)
}

/// Closed-form kinds that apply to `t` in `table`.
pub fn closed_form_kinds(table: &PermutationTable, t: Transposition) -> Vec<ClosedFormKind> {
    let mut kinds = Vec::new();
    if table.column(t.x()).count() == 1 {
        kinds.push(ClosedFormKind::ColumnUnique);
    }
    if table.row(t.y()).count() == 1 {
        kinds.push(ClosedFormKind::RowUnique);
    }
    if t.is_adjacent() {
        kinds.push(ClosedFormKind::AdjacentAlpha);
        kinds.push(ClosedFormKind::AdjacentBeta);
    }
    kinds
}

/// A feasible permutation set together with its solved system.
#[derive(Debug, Clone, PartialEq)]
pub struct SpSolution {
    pub sp: PermutationSet,
    pub cmat: CoefficientMatrix,
    pub probabilities: ProbabilityVector,
    /// Position of `sp` in the enumeration order.
    pub index: usize,
}

fn gate(source: &CoherenceVector, target: &CoherenceVector, tol: &Tolerances) -> Result<CasePattern> {
    sign_pattern(source, target, tol)
}

/// First permutation set, in enumeration order, whose system is feasible.
pub fn find_feasible_sp(
    source: &CoherenceVector,
    target: &CoherenceVector,
    tol: &Tolerances,
) -> Result<SpSolution> {
    let table = build_table(&gate(source, target, tol)?);
    let mut attempts = Vec::new();
    for (index, sp) in enumerate_sps(&table)?.enumerate() {
        let cmat = coefficient_matrix(&sp, target)?;
        match solve_probabilities(&cmat, source, tol) {
            Ok(probabilities) => {
                return Ok(SpSolution {
                    sp,
                    cmat,
                    probabilities,
                    index,
                })
            }
            Err(why) => attempts.push((sp, why)),
        }
    }
    Err(Error::NoFeasibleSp { attempts })
}

/// Every feasible permutation set in enumeration order (possibly empty).
pub fn find_all_feasible(
    source: &CoherenceVector,
    target: &CoherenceVector,
    tol: &Tolerances,
) -> Result<Vec<SpSolution>> {
    let table = build_table(&gate(source, target, tol)?);
    let mut out = Vec::new();
    for (index, sp) in enumerate_sps(&table)?.enumerate() {
        let cmat = coefficient_matrix(&sp, target)?;
        if let Ok(probabilities) = solve_probabilities(&cmat, source, tol) {
            out.push(SpSolution {
                sp,
                cmat,
                probabilities,
                index,
            });
        }
    }
    Ok(out)
}

pub const ORACLE_MAX_DIM: usize = 7;

/// Which transpositions the oracle draws its subsets from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OraclePool {
    /// Entries of the case table (requires majorization).
    Table,
    /// Every transposition of the `d` levels.
    All,
}

/// Solves every `(d-1)`-subset of the pool, ignoring the mandatory and
/// non-crossing rules, and returns the feasible ones.
///
/// With [`OraclePool::Table`] on a non-majorizing pair there is no table, so
/// the default entry point [`brute_force_oracle`] switches to
/// [`OraclePool::All`] in that case.
pub fn brute_force_oracle_with_pool(
    source: &CoherenceVector,
    target: &CoherenceVector,
    pool: OraclePool,
    tol: &Tolerances,
) -> Result<Vec<(PermutationSet, ProbabilityVector)>> {
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch {
            left: target.dim(),
            right: d,
        });
    }
    if d > ORACLE_MAX_DIM {
        return Err(Error::DimensionTooLarge {
            dim: d,
            max: ORACLE_MAX_DIM,
        });
    }
    let entries: Vec<Transposition> = match pool {
        OraclePool::Table => build_table(&gate(source, target, tol)?).entries().to_vec(),
        OraclePool::All => (0..d)
            .flat_map(|x| (x + 1..d).map(move |y| Transposition::new(x, y)))
            .collect(),
    };
    let k = d - 1;
    let mut out = Vec::new();
    for subset in combinations(entries.len(), k) {
        let sp = PermutationSet::new(d, subset.iter().map(|&i| entries[i]).collect())?;
        let cmat = coefficient_matrix(&sp, target)?;
        if let Ok(p) = solve_probabilities(&cmat, source, tol) {
            out.push((sp, p));
        }
    }
    Ok(out)
}

pub fn brute_force_oracle(
    source: &CoherenceVector,
    target: &CoherenceVector,
    tol: &Tolerances,
) -> Result<Vec<(PermutationSet, ProbabilityVector)>> {
    let pool = if majorizes(target, source, tol)?.holds {
        OraclePool::Table
    } else {
        OraclePool::All
    };
    brute_force_oracle_with_pool(source, target, pool, tol)
}

/// All `k`-subsets of `0..n` in lexicographic order.
fn combinations(n: usize, k: usize) -> Vec<Vec<usize>> {
    let mut out = Vec::new();
    if k > n {
        return out;
    }
    let mut idx: Vec<usize> = (0..k).collect();
    loop {
        out.push(idx.clone());
        let mut i = k;
        while i > 0 && idx[i - 1] == n - k + i - 1 {
            i -= 1;
        }
        if i == 0 {
            return out;
        }
        idx[i - 1] += 1;
        for j in i..k {
            idx[j] = idx[j - 1] + 1;
        }
    }
}

/// One permutation set of a family and the sampled evidence for it.
#[derive(Debug, Clone, PartialEq)]
pub struct FamilyMember {
    pub sp: PermutationSet,
    /// Number of sampled pairs on which this set was feasible.
    pub witnesses: usize,
    pub description: String,
}

/// The permutation sets of a case pattern that were feasible on at least one
/// sampled state pair of that pattern.
#[derive(Debug, Clone, PartialEq)]
pub struct SolutionFamily {
    pub pattern: CasePattern,
    pub feasible_sets: Vec<FamilyMember>,
    pub samples: usize,
}

impl SolutionFamily {
    pub fn n(&self) -> usize {
        self.feasible_sets.len()
    }
}

/// Samples `samples` pairs with the given sign pattern and records which
/// enumerated sets solve each of them.
pub fn solution_family<R: Rng + ?Sized>(
    pattern: &CasePattern,
    samples: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> Result<SolutionFamily> {
    let table = build_table(pattern);
    let sps: Vec<PermutationSet> = enumerate_sps(&table)?.collect();
    let mut hits = vec![0usize; sps.len()];
    let mut drawn = 0;
    for _ in 0..samples {
        let Some((source, target)) = sample_pair_with_pattern(pattern, rng, 10_000, tol) else {
            continue;
        };
        drawn += 1;
        for (k, sp) in sps.iter().enumerate() {
            let cmat = coefficient_matrix(sp, &target)?;
            if solve_probabilities(&cmat, &source, tol).is_ok() {
                hits[k] += 1;
            }
        }
    }
    let mandatory = mandatory_permutations(&table);
    let feasible_sets = sps
        .into_iter()
        .zip(hits)
        .filter(|(_, h)| *h > 0)
        .map(|(sp, witnesses)| {
            let extra: Vec<String> = sp
                .transpositions()
                .iter()
                .filter(|t| !mandatory.contains(t))
                .map(|t| t.to_string())
                .collect();
            let description = format!(
                "optional members [{}], feasible on {witnesses} of {drawn} sampled pairs",
                extra.join(", ")
            );
            FamilyMember {
                sp,
                witnesses,
                description,
            }
        })
        .collect();
    Ok(SolutionFamily {
        pattern: pattern.clone(),
        feasible_sets,
        samples: drawn,
    })
}

impl fmt::Display for SolutionFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "pattern {} with {} feasible sets", self.pattern, self.n())?;
        for m in &self.feasible_sets {
            writeln!(f, "  {}: {}", m.sp, m.description)?;
        }
        Ok(())
    }
}
