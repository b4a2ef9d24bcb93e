use serde::{Deserialize, Serialize};

/// Numerical tolerances shared by every stage of the pipeline.
///
/// Any field may be omitted in a configuration document; omitted fields keep
/// their default.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Normalization of amplitude vectors and probability sums.
    pub norm: f64,
    /// Smallest admissible amplitude.
    pub amp: f64,
    /// Slack on majorization partial sums and on the LE/GE tie policy.
    pub maj: f64,
    /// Smallest admissible eigenvalue of a density matrix is `-psd`.
    pub psd: f64,
    /// Negative probabilities down to `-prob` are clamped to zero.
    pub prob: f64,
    /// Residual of the probability system and single-step channel exactness.
    pub res: f64,
    /// Completeness residual `max |sum K^T K - I|`.
    pub comp: f64,
    /// End-to-end exactness of a multi-step plan.
    pub plan_res: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            norm: 1e-10,
            amp: 1e-12,
            maj: 1e-12,
            psd: 1e-9,
            prob: 1e-10,
            res: 1e-9,
            comp: 1e-10,
            plan_res: 1e-8,
        }
    }
}
