//! Pure coherent states in canonical form, their coherence vectors, and the
//! majorization test that decides whether a deterministic incoherent
//! transformation exists.
//!
//! A state `sum_i psi_i |i>` is stored with all phases stripped and the
//! magnitudes sorted in descending order. Phases can always be removed by a
//! diagonal unitary and the sorting by a permutation, both of which are
//! incoherent, so the canonical form loses nothing.

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::tolerance::Tolerances;

/// Canonical descending, strictly positive amplitude vector.
#[derive(Debug, Clone, PartialEq)]
pub struct CoherenceVector {
    amps: Vec<f64>,
    /// `order[k]` is the caller's (0-based) level that became canonical level `k`.
    order: Vec<usize>,
}

impl CoherenceVector {
    /// Strips phases, sorts magnitudes descending and validates the result.
    pub fn canonicalize(raw: &[Complex64], tol: &Tolerances) -> Result<Self> {
        let mags: Vec<f64> = raw.iter().map(|z| z.norm()).collect();
        Self::canonicalize_real(&mags, tol)
    }

    /// Same as [`canonicalize`](Self::canonicalize) for real amplitudes; signs
    /// are treated as phases.
    pub fn canonicalize_real(raw: &[f64], tol: &Tolerances) -> Result<Self> {
        if raw.is_empty() {
            return Err(Error::Empty);
        }
        let norm_sq: f64 = raw.iter().map(|a| a * a).sum();
        if (norm_sq - 1.0).abs() > tol.norm {
            return Err(Error::Norm { norm_sq });
        }
        if let Some((level, a)) = raw.iter().enumerate().find(|(_, a)| a.abs() <= tol.amp) {
            return Err(Error::ZeroAmplitude { level, value: a.abs() });
        }
        let mut order: Vec<usize> = (0..raw.len()).collect();
        // stable: equal magnitudes keep the caller's relative order
        order.sort_by(|&a, &b| raw[b].abs().total_cmp(&raw[a].abs()));
        let amps = order.iter().map(|&i| raw[i].abs()).collect();
        Ok(Self { amps, order })
    }

    /// Builds a state from squared amplitudes (a coherence vector) in any order.
    pub fn from_mu(mu: &[f64], tol: &Tolerances) -> Result<Self> {
        if let Some((level, &m)) = mu.iter().enumerate().find(|(_, m)| **m < 0.0) {
            return Err(Error::ZeroAmplitude { level, value: m });
        }
        let amps: Vec<f64> = mu.iter().map(|m| m.sqrt()).collect();
        Self::canonicalize_real(&amps, tol)
    }

    /// Wraps amplitudes that are already in level order. Descending order is
    /// checked with slack `tol.norm`; nothing is permuted.
    pub fn from_descending(amps: Vec<f64>, tol: &Tolerances) -> Result<Self> {
        if amps.is_empty() {
            return Err(Error::Empty);
        }
        let norm_sq: f64 = amps.iter().map(|a| a * a).sum();
        if (norm_sq - 1.0).abs() > tol.norm {
            return Err(Error::Norm { norm_sq });
        }
        if let Some((level, &a)) = amps.iter().enumerate().find(|(_, a)| **a <= tol.amp) {
            return Err(Error::ZeroAmplitude { level, value: a });
        }
        if let Some(level) = (1..amps.len()).find(|&i| amps[i] > amps[i - 1] + tol.norm) {
            return Err(Error::NotDescending { level });
        }
        let order = (0..amps.len()).collect();
        Ok(Self { amps, order })
    }

    pub fn dim(&self) -> usize {
        self.amps.len()
    }

    pub fn amps(&self) -> &[f64] {
        &self.amps
    }

    pub fn amp(&self, level: usize) -> f64 {
        self.amps[level]
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn mu(&self) -> MuVector {
        MuVector {
            entries: self.amps.iter().map(|a| a * a).collect(),
        }
    }

    /// Maximally coherent state of dimension `dim`.
    pub fn uniform(dim: usize) -> Self {
        let a = (dim as f64).recip().sqrt();
        Self {
            amps: vec![a; dim],
            order: (0..dim).collect(),
        }
    }

    pub fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.dim() == other.dim()
            && self
                .amps
                .iter()
                .zip(&other.amps)
                .all(|(a, b)| (a - b).abs() <= tol)
    }
}

/// Squared amplitudes of a [`CoherenceVector`], descending.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MuVector {
    pub entries: Vec<f64>,
}

impl MuVector {
    pub fn partial_sums(&self) -> Vec<f64> {
        self.entries
            .iter()
            .scan(0.0, |acc, m| {
                *acc += m;
                Some(*acc)
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct MajorizationReport {
    pub holds: bool,
    /// Smallest 1-based `k` whose partial-sum inequality fails.
    pub first_violation: Option<usize>,
}

/// Tests `mu(source) ≺ mu(target)`, i.e. whether `target` majorizes `source`.
pub fn majorizes(
    target: &CoherenceVector,
    source: &CoherenceVector,
    tol: &Tolerances,
) -> Result<MajorizationReport> {
    if target.dim() != source.dim() {
        return Err(Error::DimensionMismatch {
            left: target.dim(),
            right: source.dim(),
        });
    }
    let t = target.mu().partial_sums();
    let s = source.mu().partial_sums();
    let d = target.dim();
    let first_violation = (0..d.saturating_sub(1))
        .find(|&k| s[k] > t[k] + tol.maj)
        .map(|k| k + 1);
    Ok(MajorizationReport {
        holds: first_violation.is_none(),
        first_violation,
    })
}

/// Real symmetric density matrix. Every state and operator handled here is
/// real, so no complex storage is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityMatrix {
    m: DMatrix<f64>,
}

impl DensityMatrix {
    /// Wraps `m` after checking symmetry, unit trace and positivity.
    pub fn new(m: DMatrix<f64>, tol: &Tolerances) -> Result<Self> {
        let rho = Self { m };
        rho.validate(tol)?;
        Ok(rho)
    }

    pub(crate) fn from_matrix_unchecked(m: DMatrix<f64>) -> Self {
        Self { m }
    }

    pub fn diagonal(probs: &[f64], tol: &Tolerances) -> Result<Self> {
        Self::new(DMatrix::from_diagonal(&nalgebra::DVector::from_column_slice(probs)), tol)
    }

    pub fn dim(&self) -> usize {
        self.m.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.m
    }

    pub fn trace(&self) -> f64 {
        self.m.trace()
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        assert_eq!(self.dim(), other.dim());
        (&self.m - &other.m).amax()
    }

    pub fn hermiticity_defect(&self) -> f64 {
        (&self.m - self.m.transpose()).amax()
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let sym = (&self.m + self.m.transpose()) * 0.5;
        SymmetricEigen::new(sym).eigenvalues.min()
    }

    pub fn is_diagonal(&self, tol: f64) -> bool {
        let d = self.dim();
        (0..d).all(|i| (0..d).all(|j| i == j || self.m[(i, j)].abs() <= tol))
    }

    pub fn validate(&self, tol: &Tolerances) -> Result<()> {
        if !self.m.is_square() {
            return Err(Error::InvalidDensity("matrix is not square".into()));
        }
        let herm = self.hermiticity_defect();
        if herm > tol.psd {
            return Err(Error::InvalidDensity(format!("not symmetric (defect {herm:e})")));
        }
        let tr = self.trace();
        if (tr - 1.0).abs() > tol.norm {
            return Err(Error::InvalidDensity(format!("trace {tr} != 1")));
        }
        let ev = self.min_eigenvalue();
        if ev < -tol.psd {
            return Err(Error::InvalidDensity(format!("negative eigenvalue {ev:e}")));
        }
        Ok(())
    }
}

/// `|psi><psi|` for a canonical state.
pub fn pure_density(state: &CoherenceVector) -> DensityMatrix {
    let d = state.dim();
    let a = state.amps();
    DensityMatrix::from_matrix_unchecked(DMatrix::from_fn(d, d, |i, j| a[i] * a[j]))
}
