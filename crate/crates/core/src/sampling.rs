//! Random state pairs for property checks and subcase sampling.

use rand::seq::SliceRandom;
use rand::Rng;

use crate::coherence::{majorizes, CoherenceVector};
use crate::permutation::{CasePattern, Relation};
use crate::tolerance::Tolerances;

/// Smallest squared amplitude a sampled state may have.
const MIN_MU: f64 = 1e-6;

/// Uniform point of the probability simplex, sorted descending.
pub fn sorted_dirichlet<R: Rng + ?Sized>(d: usize, rng: &mut R) -> Vec<f64> {
    let mut v: Vec<f64> = (0..d)
        .map(|_| -(1.0 - rng.random::<f64>()).ln())
        .collect();
    let s: f64 = v.iter().sum();
    v.iter_mut().for_each(|x| *x /= s);
    v.sort_by(|a, b| b.total_cmp(a));
    v
}

fn state(mu: &[f64], tol: &Tolerances) -> Option<CoherenceVector> {
    if mu.iter().any(|&m| m < MIN_MU) {
        return None;
    }
    let s: f64 = mu.iter().sum();
    let mu: Vec<f64> = mu.iter().map(|m| m / s).collect();
    CoherenceVector::from_mu(&mu, tol).ok()
}

/// `(source, target)` with `mu(source) ≺ mu(target)`.
///
/// The target is uniform on the simplex; the source is a random convex
/// combination of permuted copies of the target (a doubly stochastic image),
/// which covers the whole majorized region.
pub fn random_majorizing_pair<R: Rng + ?Sized>(
    d: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> (CoherenceVector, CoherenceVector) {
    loop {
        let phi = sorted_dirichlet(d, rng);
        let terms = rng.random_range(1..=d.max(2));
        let weights = sorted_dirichlet(terms, rng);
        let mut psi = vec![0.0; d];
        let mut perm: Vec<usize> = (0..d).collect();
        for w in weights {
            perm.shuffle(rng);
            for (j, &k) in perm.iter().enumerate() {
                psi[j] += w * phi[k];
            }
        }
        psi.sort_by(|a, b| b.total_cmp(a));
        let (Some(s), Some(t)) = (state(&psi, tol), state(&phi, tol)) else {
            continue;
        };
        if majorizes(&t, &s, tol).map(|r| r.holds).unwrap_or(false) {
            return (s, t);
        }
    }
}

/// `(source, target)` drawn independently, kept only when majorization fails
/// by more than `1e-6` at some partial sum.
pub fn random_non_majorizing_pair<R: Rng + ?Sized>(
    d: usize,
    rng: &mut R,
    tol: &Tolerances,
) -> (CoherenceVector, CoherenceVector) {
    assert!(d >= 2, "every pair of one-level states majorizes");
    loop {
        let (Some(s), Some(t)) = (state(&sorted_dirichlet(d, rng), tol), state(&sorted_dirichlet(d, rng), tol))
        else {
            continue;
        };
        let ps = s.mu().partial_sums();
        let pt = t.mu().partial_sums();
        if (0..d - 1).any(|k| ps[k] > pt[k] + 1e-6) {
            return (s, t);
        }
    }
}

/// Majorizing pair whose sign pattern is exactly `pattern`, with every
/// interior level strictly on its side. `None` after `max_tries` rejections.
pub fn sample_pair_with_pattern<R: Rng + ?Sized>(
    pattern: &CasePattern,
    rng: &mut R,
    max_tries: usize,
    tol: &Tolerances,
) -> Option<(CoherenceVector, CoherenceVector)> {
    let d = pattern.dim();
    for _ in 0..max_tries {
        let phi = sorted_dirichlet(d, rng);
        let scale = phi[d - 1] * rng.random_range(0.05..1.0);
        let mut delta: Vec<f64> = (0..d)
            .map(|k| {
                let m = scale * rng.random_range(0.02..1.0);
                match pattern.get(k) {
                    Relation::Le => -m,
                    Relation::Ge => m,
                }
            })
            .collect();
        let pos: f64 = delta.iter().filter(|x| **x > 0.0).sum();
        let neg: f64 = -delta.iter().filter(|x| **x < 0.0).sum::<f64>();
        delta
            .iter_mut()
            .filter(|x| **x > 0.0)
            .for_each(|x| *x *= neg / pos);
        let psi: Vec<f64> = phi.iter().zip(&delta).map(|(p, e)| p + e).collect();
        if psi.windows(2).any(|w| w[0] < w[1]) {
            continue;
        }
        let (Some(s), Some(t)) = (state(&psi, tol), state(&phi, tol)) else {
            continue;
        };
        if !majorizes(&t, &s, tol).map(|r| r.holds).unwrap_or(false) {
            continue;
        }
        let margin = 1e-9;
        let strict = (1..d - 1).all(|k| {
            let diff = s.amp(k) - t.amp(k);
            match pattern.get(k) {
                Relation::Le => diff < -margin,
                Relation::Ge => diff > margin,
            }
        });
        if strict {
            return Some((s, t));
        }
    }
    None
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::permutation::sign_pattern;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn majorizing_pairs_majorize() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for d in 1..8 {
            for _ in 0..50 {
                let (s, t) = random_majorizing_pair(d, &mut rng, &tol);
                assert!(majorizes(&t, &s, &tol).unwrap().holds);
            }
        }
    }

    #[test]
    fn non_majorizing_pairs_fail() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for d in 2..6 {
            for _ in 0..50 {
                let (s, t) = random_non_majorizing_pair(d, &mut rng, &tol);
                assert!(!majorizes(&t, &s, &tol).unwrap().holds);
            }
        }
    }

    #[test]
    fn pattern_sampling_hits_pattern() {
        let tol = Tolerances::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for d in 2..8 {
            for p in CasePattern::all(d) {
                let (s, t) = sample_pair_with_pattern(&p, &mut rng, 100_000, &tol)
                    .unwrap_or_else(|| panic!("no sample for {p}"));
                assert_eq!(sign_pattern(&s, &t, &tol).unwrap(), p);
            }
        }
    }

    #[test]
    fn seeded_sampling_is_deterministic() {
        let tol = Tolerances::default();
        let a = random_majorizing_pair(5, &mut ChaCha8Rng::seed_from_u64(9), &tol);
        let b = random_majorizing_pair(5, &mut ChaCha8Rng::seed_from_u64(9), &tol);
        assert_eq!(a, b);
    }
}
