//! Cascades of subspace transformations through intermediate states.
//!
//! Each step fixes up to `d' - 1` further target coefficients and lets one
//! balance level absorb the norm difference, so every step is a transformation
//! on at most `d'` levels. The step is solved as a normalized `d'`-level
//! problem and embedded back into the full space.

use crate::coherence::{majorizes, pure_density, CoherenceVector, DensityMatrix};
use crate::error::{Error, Result};
use crate::kraus::{apply_channel, build_kraus, IncoherentChannel, KrausOperator};
use crate::permutation::{PermutationSet, Transposition};
use crate::solver::{find_feasible_sp, SpSolution};
use crate::tolerance::Tolerances;

pub const DEFAULT_D_PRIME: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct IntermediateState {
    pub state: CoherenceVector,
    /// Levels (0-based, sorted) set to their target value by this step.
    pub fixed_levels: Vec<usize>,
    /// Level carrying the balance coefficient; `None` on a final step.
    pub balance_level: Option<usize>,
    /// Levels the step acts on: `fixed_levels` plus the balance level.
    pub block: Vec<usize>,
    /// Whether the default trailing proposal had to be replaced.
    pub repaired: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlanStep {
    pub intermediate: IntermediateState,
    /// Norm of the current state restricted to the block.
    pub block_norm: f64,
    /// Solution of the normalized block problem, in block-local labels.
    pub sub_solution: SpSolution,
    /// Block channel embedded into the full space.
    pub channel: IncoherentChannel,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformPlan {
    pub source: CoherenceVector,
    pub target: CoherenceVector,
    pub d_prime: usize,
    pub steps: Vec<PlanStep>,
    /// Set when no intermediate could be found and the remaining levels were
    /// handled by a single step on all of them.
    pub fallback: bool,
}

impl TransformPlan {
    pub fn step_count(&self) -> usize {
        self.steps.len()
    }

    /// `floor((d + d' - 3) / (d' - 1))`.
    pub fn step_bound(&self) -> usize {
        step_bound(self.source.dim(), self.d_prime)
    }

    /// One less than the number of levels of the last step.
    pub fn final_m(&self) -> Option<usize> {
        self.steps
            .last()
            .map(|s| s.intermediate.block.len().saturating_sub(1))
    }
}

pub fn step_bound(d: usize, d_prime: usize) -> usize {
    (d + d_prime).saturating_sub(3) / (d_prime - 1)
}

/// `phi'` with `phi'^2 = sum_{block} current^2 - sum_{fixed} target^2`, where
/// the block is `fixed ∪ {balance}`.
pub fn balance_coefficient(
    current: &CoherenceVector,
    target: &CoherenceVector,
    fixed: &[usize],
    balance: usize,
) -> Result<f64> {
    if current.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            left: current.dim(),
            right: target.dim(),
        });
    }
    if fixed.contains(&balance) || fixed.iter().chain([&balance]).any(|&l| l >= current.dim()) {
        return Err(Error::BlockMismatch(format!(
            "balance level {balance} must be a valid level outside the fixed set"
        )));
    }
    let cur = current.mu().entries;
    let tgt = target.mu().entries;
    let value = cur[balance] + fixed.iter().map(|&l| cur[l] - tgt[l]).sum::<f64>();
    if value < 0.0 {
        return Err(Error::NegativeRadicand { value });
    }
    Ok(value.sqrt())
}

/// Candidate `(fixed, balance levels to try)` in search order: the trailing
/// proposal first, then `lead` leading plus `n - lead` trailing unfixed levels
/// for `lead = n-1, ..., 1`, and finally the `n` leading ones.
fn candidates(unfixed: &[usize], n: usize) -> Vec<(Vec<usize>, Vec<usize>, bool)> {
    let len = unfixed.len();
    let mut out = vec![(unfixed[len - n..].to_vec(), vec![unfixed[len - n - 1]], false)];
    for lead in (1..n).rev().chain([n]) {
        let mut fixed = unfixed[..lead].to_vec();
        fixed.extend_from_slice(&unfixed[len - (n - lead)..]);
        let rest = unfixed.iter().copied().filter(|u| !fixed.contains(u)).collect();
        out.push((fixed, rest, true));
    }
    out
}

fn is_descending(v: &[f64], slack: f64) -> bool {
    v.windows(2).all(|w| w[0] + slack >= w[1])
}

fn sub_state(mu: &[f64], block: &[usize], tol: &Tolerances) -> Result<(CoherenceVector, f64)> {
    let s: f64 = block.iter().map(|&l| mu[l]).sum();
    let amps = block.iter().map(|&l| (mu[l] / s).sqrt()).collect();
    Ok((CoherenceVector::from_descending(amps, tol)?, s.sqrt()))
}

struct Accepted {
    intermediate: IntermediateState,
    block_norm: f64,
    sub_solution: SpSolution,
    sub_source: CoherenceVector,
}

fn solve_block(
    cur: &[f64],
    new: &[f64],
    block: &[usize],
    tol: &Tolerances,
) -> Result<(SpSolution, CoherenceVector, f64)> {
    let (sub_source, norm) = sub_state(cur, block, tol)?;
    let (sub_target, _) = sub_state(new, block, tol)?;
    let sol = find_feasible_sp(&sub_source, &sub_target, tol)?;
    Ok((sol, sub_source, norm))
}

fn try_candidate(
    current: &CoherenceVector,
    target: &CoherenceVector,
    fixed: &[usize],
    balance: usize,
    repaired: bool,
    tol: &Tolerances,
) -> Option<Accepted> {
    let cur = current.mu().entries;
    let tgt = target.mu().entries;
    let phi_b = balance_coefficient(current, target, fixed, balance).ok()?;
    if phi_b <= tol.amp {
        return None;
    }
    let mut new = cur.clone();
    for &l in fixed {
        new[l] = tgt[l];
    }
    new[balance] = phi_b * phi_b;
    if !is_descending(&new, tol.maj) {
        return None;
    }
    let state = CoherenceVector::from_descending(new.iter().map(|m| m.sqrt()).collect(), tol).ok()?;
    if !majorizes(&state, current, tol).ok()?.holds || !majorizes(target, &state, tol).ok()?.holds {
        return None;
    }
    let mut block: Vec<usize> = fixed.to_vec();
    block.push(balance);
    block.sort_unstable();
    let (sub_solution, sub_source, block_norm) = solve_block(&cur, &new, &block, tol).ok()?;
    let mut fixed_levels = fixed.to_vec();
    fixed_levels.sort_unstable();
    Some(Accepted {
        intermediate: IntermediateState {
            state,
            fixed_levels,
            balance_level: Some(balance),
            block,
            repaired,
        },
        block_norm,
        sub_solution,
        sub_source,
    })
}

fn final_step(
    current: &CoherenceVector,
    target: &CoherenceVector,
    unfixed: &[usize],
    tol: &Tolerances,
) -> Result<Accepted> {
    let cur = current.mu().entries;
    let tgt = target.mu().entries;
    let mut new = cur.clone();
    for &l in unfixed {
        new[l] = tgt[l];
    }
    let state = CoherenceVector::from_descending(new.iter().map(|m| m.sqrt()).collect(), tol)?;
    let (sub_solution, sub_source, block_norm) = solve_block(&cur, &new, unfixed, tol)?;
    Ok(Accepted {
        intermediate: IntermediateState {
            state,
            fixed_levels: unfixed.to_vec(),
            balance_level: None,
            block: unfixed.to_vec(),
            repaired: false,
        },
        block_norm,
        sub_solution,
        sub_source,
    })
}

fn validate_unfixed(dim: usize, unfixed: &[usize], d_prime: usize) -> Result<()> {
    if d_prime < 2 {
        return Err(Error::BlockMismatch(format!("d' = {d_prime} is below 2")));
    }
    if unfixed.is_empty() || unfixed.windows(2).any(|w| w[0] >= w[1]) || unfixed[unfixed.len() - 1] >= dim {
        return Err(Error::BlockMismatch(
            "unfixed levels must be nonempty, strictly increasing and in range".into(),
        ));
    }
    Ok(())
}

fn propose(
    current: &CoherenceVector,
    target: &CoherenceVector,
    unfixed: &[usize],
    d_prime: usize,
    tol: &Tolerances,
) -> Result<Accepted> {
    validate_unfixed(current.dim(), unfixed, d_prime)?;
    if unfixed.len() <= d_prime {
        return final_step(current, target, unfixed, tol);
    }
    for (fixed, balances, repaired) in candidates(unfixed, d_prime - 1) {
        for b in balances {
            if let Some(acc) = try_candidate(current, target, &fixed, b, repaired, tol) {
                return Ok(acc);
            }
        }
    }
    Err(Error::NoIntermediateFound {
        unfixed: unfixed.len(),
    })
}

/// Next intermediate state between `current` and `target`.
///
/// `unfixed` lists the levels (0-based, increasing) not yet set to their
/// target value. With at most `d_prime` of them the result is the target
/// itself. Otherwise the trailing proposal is tried first and the repair
/// search after it; a candidate is accepted when it is descending, satisfies
/// `current ≺ candidate ≺ target`, and its block problem has a feasible
/// permutation set.
pub fn propose_intermediate(
    current: &CoherenceVector,
    target: &CoherenceVector,
    unfixed: &[usize],
    d_prime: usize,
    tol: &Tolerances,
) -> Result<IntermediateState> {
    propose(current, target, unfixed, d_prime, tol).map(|a| a.intermediate)
}

/// Every candidate intermediate that [`propose_intermediate`] would accept,
/// in search order.
pub fn enumerate_intermediates(
    current: &CoherenceVector,
    target: &CoherenceVector,
    unfixed: &[usize],
    d_prime: usize,
    tol: &Tolerances,
) -> Result<Vec<IntermediateState>> {
    validate_unfixed(current.dim(), unfixed, d_prime)?;
    if unfixed.len() <= d_prime {
        return Ok(vec![final_step(current, target, unfixed, tol)?.intermediate]);
    }
    let mut out = Vec::new();
    for (fixed, balances, repaired) in candidates(unfixed, d_prime - 1) {
        for b in balances {
            if let Some(acc) = try_candidate(current, target, &fixed, b, repaired, tol) {
                if !out.iter().any(|s: &IntermediateState| s.state == acc.intermediate.state) {
                    out.push(acc.intermediate);
                }
            }
        }
    }
    Ok(out)
}

/// Lifts a channel on the levels `block` (sorted, any positions) to `dim`
/// levels: operator `i` acts as `sqrt(p_i)` outside the block.
pub fn embed_subspace_channel(
    sub: &IncoherentChannel,
    dim: usize,
    block: &[usize],
) -> Result<IncoherentChannel> {
    if sub.dim != block.len() {
        return Err(Error::BlockMismatch(format!(
            "channel has {} levels but the block has {}",
            sub.dim,
            block.len()
        )));
    }
    if block.windows(2).any(|w| w[0] >= w[1]) || block.last().is_some_and(|&l| l >= dim) {
        return Err(Error::BlockMismatch(
            "block levels must be strictly increasing and in range".into(),
        ));
    }
    let mut inside = vec![None; dim];
    for (k, &l) in block.iter().enumerate() {
        inside[l] = Some(k);
    }
    let kraus = sub
        .kraus
        .iter()
        .zip(sub.probabilities.values())
        .map(|(op, &p)| {
            let sq = p.sqrt();
            let triplets: Vec<(usize, usize, f64)> = (0..dim)
                .filter_map(|j| match inside[j] {
                    Some(k) => op.column(k).map(|(r, v)| (block[r], j, v)),
                    None => Some((j, j, sq)),
                })
                .collect();
            KrausOperator::from_triplets(dim, &triplets)
        })
        .collect::<Result<Vec<_>>>()?;
    let transpositions = sub
        .sp
        .transpositions()
        .iter()
        .map(|t| Transposition::new(block[t.x()], block[t.y()]))
        .collect();
    Ok(IncoherentChannel {
        dim,
        kraus,
        probabilities: sub.probabilities.clone(),
        sp: PermutationSet::new(dim, transpositions)?,
    })
}

/// Plans the cascade `source -> eta_1 -> ... -> target` with blocks of at most
/// `d_prime` levels.
pub fn plan_sequence(
    source: &CoherenceVector,
    target: &CoherenceVector,
    d_prime: usize,
    tol: &Tolerances,
) -> Result<TransformPlan> {
    let report = majorizes(target, source, tol)?;
    if let Some(k) = report.first_violation {
        return Err(Error::Majorization { first_violation: k });
    }
    if d_prime < 2 {
        return Err(Error::BlockMismatch(format!("d' = {d_prime} is below 2")));
    }
    let d = source.dim();
    let tgt = target.mu().entries;
    let mut current = source.clone();
    let mut unfixed: Vec<usize> = (0..d).collect();
    let mut steps = Vec::new();
    let mut fallback = false;
    loop {
        let cur = current.mu().entries;
        if unfixed.iter().all(|&l| (cur[l] - tgt[l]).abs() <= tol.maj) {
            break;
        }
        let acc = match propose(&current, target, &unfixed, d_prime, tol) {
            Ok(acc) => acc,
            Err(Error::NoIntermediateFound { .. }) => {
                fallback = true;
                final_step(&current, target, &unfixed, tol)?
            }
            Err(e) => return Err(e),
        };
        let sol = &acc.sub_solution;
        let sub_channel = build_kraus(&sol.sp, &sol.probabilities, &sol.cmat, &acc.sub_source, tol)?;
        let channel = embed_subspace_channel(&sub_channel, d, &acc.intermediate.block)?;
        unfixed.retain(|l| !acc.intermediate.fixed_levels.contains(l));
        current = acc.intermediate.state.clone();
        steps.push(PlanStep {
            intermediate: acc.intermediate,
            block_norm: acc.block_norm,
            sub_solution: acc.sub_solution,
            channel,
        });
        if unfixed.is_empty() {
            break;
        }
    }
    Ok(TransformPlan {
        source: source.clone(),
        target: target.clone(),
        d_prime,
        steps,
        fallback,
    })
}

pub fn execute_plan(plan: &TransformPlan, rho: &DensityMatrix) -> Result<DensityMatrix> {
    plan.steps
        .iter()
        .try_fold(rho.clone(), |r, step| apply_channel(&step.channel, &r))
}

/// `max |execute_plan(rho_source) - rho_target|`.
pub fn plan_residual(plan: &TransformPlan) -> Result<f64> {
    let out = execute_plan(plan, &pure_density(&plan.source))?;
    Ok(out.max_abs_diff(&pure_density(&plan.target)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kraus::verify_completeness;
    use crate::sampling::random_majorizing_pair;
    use crate::solver::ProbabilityVector;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn tol() -> Tolerances {
        Tolerances::default()
    }

    fn over53(v: &[f64]) -> CoherenceVector {
        CoherenceVector::from_mu(&v.iter().map(|x| x / 53.0).collect::<Vec<_>>(), &tol()).unwrap()
    }

    fn six() -> (CoherenceVector, CoherenceVector) {
        (
            over53(&[11.0, 11.0, 8.0, 8.0, 8.0, 7.0]),
            over53(&[12.0, 12.0, 10.0, 9.0, 6.0, 4.0]),
        )
    }

    fn mu53(v: &CoherenceVector) -> Vec<f64> {
        v.mu().entries.iter().map(|m| m * 53.0).collect()
    }

    #[test]
    fn balance_of_trailing_block() {
        let (psi, phi) = six();
        let b = balance_coefficient(&psi, &phi, &[2, 3, 4, 5], 1).unwrap();
        assert!((b * b - 13.0 / 53.0).abs() < 1e-14);
        let same = balance_coefficient(&psi, &psi, &[3, 4, 5], 2).unwrap();
        assert!((same - psi.amp(2)).abs() < 1e-15);
    }

    #[test]
    fn balance_negative_radicand() {
        let psi = CoherenceVector::from_mu(&[0.4, 0.3, 0.2, 0.1], &tol()).unwrap();
        let phi = CoherenceVector::from_mu(&[0.1 + 0.6, 0.1, 0.1, 0.1], &tol()).unwrap();
        assert!(matches!(
            balance_coefficient(&psi, &phi, &[0, 1], 3),
            Err(Error::NegativeRadicand { .. })
        ));
    }

    #[test]
    fn six_level_intermediate_is_repaired() {
        let (psi, phi) = six();
        let eta = propose_intermediate(&psi, &phi, &[0, 1, 2, 3, 4, 5], 5, &tol()).unwrap();
        let got = mu53(&eta.state);
        for (a, b) in got.iter().zip([12.0, 12.0, 10.0, 8.0, 7.0, 4.0]) {
            assert!((a - b).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(eta.fixed_levels, vec![0, 1, 2, 5]);
        assert_eq!(eta.balance_level, Some(4));
        assert!(eta.repaired);
    }

    #[test]
    fn intermediates_are_not_unique() {
        let (psi, phi) = six();
        let all = enumerate_intermediates(&psi, &phi, &[0, 1, 2, 3, 4, 5], 5, &tol()).unwrap();
        assert!(all.len() >= 2);
        for eta in &all {
            assert!(majorizes(&eta.state, &psi, &tol()).unwrap().holds);
            assert!(majorizes(&phi, &eta.state, &tol()).unwrap().holds);
        }
    }

    #[test]
    fn six_level_plan() {
        let (psi, phi) = six();
        let plan = plan_sequence(&psi, &phi, 5, &tol()).unwrap();
        assert_eq!(plan.step_count(), 2);
        assert!(!plan.fallback);
        let p1 = plan.steps[0].channel.probabilities.values();
        for (a, b) in p1.iter().zip([0.25, 0.125, 0.125, 1.0 / 3.0, 1.0 / 6.0]) {
            assert!((a - b).abs() < 1e-12, "{p1:?}");
        }
        let p2 = plan.steps[1].channel.probabilities.values();
        assert!((p2[0] - 2.0 / 3.0).abs() < 1e-12);
        assert!((p2[1] - 1.0 / 3.0).abs() < 1e-12);
        assert_eq!(plan.final_m(), Some(1));

        // K_12 = sqrt(2/3) diag(1, 1, 1, 3/(2 sqrt 2), sqrt(6/7), 1)
        let k = &plan.steps[1].channel.kraus[0];
        let want = [1.0, 1.0, 1.0, 3.0 / (2.0 * 2f64.sqrt()), (6.0f64 / 7.0).sqrt(), 1.0];
        for (j, w) in want.iter().enumerate() {
            let (r, v) = k.column(j).unwrap();
            assert_eq!(r, j);
            assert!((v - w * (2.0f64 / 3.0).sqrt()).abs() < 1e-12);
        }
        assert!(plan_residual(&plan).unwrap() < 1e-12);
    }

    #[test]
    fn wrong_input_is_detected() {
        let (psi, phi) = six();
        let plan = plan_sequence(&psi, &phi, 5, &tol()).unwrap();
        let other = over53(&[10.0, 10.0, 9.0, 9.0, 8.0, 7.0]);
        let out = execute_plan(&plan, &pure_density(&other)).unwrap();
        assert!(out.max_abs_diff(&pure_density(&phi)) > 1e-3);
    }

    #[test]
    fn empty_plan() {
        let (psi, _) = six();
        let plan = plan_sequence(&psi, &psi, 5, &tol()).unwrap();
        assert_eq!(plan.step_count(), 0);
        let rho = pure_density(&psi);
        assert_eq!(execute_plan(&plan, &rho).unwrap(), rho);
    }

    #[test]
    fn final_step_is_target() {
        let phi = CoherenceVector::from_mu(&[0.3, 0.25, 0.2, 0.15, 0.1], &tol()).unwrap();
        let cur = CoherenceVector::from_mu(&[0.3, 0.25, 0.2, 0.13, 0.12], &tol()).unwrap();
        let eta = propose_intermediate(&cur, &phi, &[3, 4], 5, &tol()).unwrap();
        assert!(eta.state.approx_eq(&phi, 1e-15));
        assert_eq!(eta.balance_level, None);
    }

    #[test]
    fn embedding_full_block_is_unchanged() {
        let (psi, phi) = six();
        let s = find_feasible_sp(&psi, &phi, &tol()).unwrap();
        let ch = build_kraus(&s.sp, &s.probabilities, &s.cmat, &psi, &tol()).unwrap();
        let e = embed_subspace_channel(&ch, 6, &[0, 1, 2, 3, 4, 5]).unwrap();
        assert_eq!(e, ch);
    }

    #[test]
    fn embedding_zero_operator() {
        let sub = IncoherentChannel {
            dim: 2,
            kraus: vec![
                KrausOperator::from_triplets(2, &[(0, 0, 1.0), (1, 1, 1.0)]).unwrap(),
                KrausOperator::zero(2),
            ],
            probabilities: ProbabilityVector::new(vec![1.0, 0.0]),
            sp: PermutationSet::from_levels(2, &[(1, 2)]).unwrap(),
        };
        let e = embed_subspace_channel(&sub, 4, &[1, 3]).unwrap();
        assert!(e.kraus[1].is_zero());
        assert!(verify_completeness(&e) < 1e-15);
        assert_eq!(e.sp.transpositions(), &[Transposition::new(1, 3)]);
        assert!(matches!(
            embed_subspace_channel(&sub, 4, &[1, 2, 3]),
            Err(Error::BlockMismatch(_))
        ));
        assert!(matches!(
            embed_subspace_channel(&sub, 4, &[3, 1]),
            Err(Error::BlockMismatch(_))
        ));
    }

    #[test]
    fn trailing_proposal_accepted_with_slack() {
        // geometric target, source slightly mixed towards uniform
        let d = 10;
        let raw: Vec<f64> = (0..d).map(|k| 0.7f64.powi(k as i32)).collect();
        let s: f64 = raw.iter().sum();
        let mu: Vec<f64> = raw.iter().map(|x| x / s).collect();
        let phi = CoherenceVector::from_mu(&mu, &tol()).unwrap();
        let mixed: Vec<f64> = mu.iter().map(|m| 0.99 * m + 0.01 / d as f64).collect();
        let psi = CoherenceVector::from_mu(&mixed, &tol()).unwrap();
        let eta = propose_intermediate(&psi, &phi, &(0..d).collect::<Vec<_>>(), 5, &tol()).unwrap();
        assert!(!eta.repaired);
        assert_eq!(eta.fixed_levels, vec![6, 7, 8, 9]);
        assert_eq!(eta.balance_level, Some(5));
        let plan = plan_sequence(&psi, &phi, 5, &tol()).unwrap();
        assert!(plan.steps.iter().all(|s| !s.intermediate.repaired));
        assert_eq!(plan.step_count(), plan.step_bound());
        assert_eq!(plan.step_bound(), (d + 2) / 4);
    }

    #[test]
    fn step_bound_formula() {
        assert_eq!(step_bound(6, 5), 2);
        assert_eq!(step_bound(9, 5), 2);
        assert_eq!(step_bound(10, 5), 3);
        for d in 2..40 {
            assert_eq!(step_bound(d, 5), (d + 2) / 4);
            assert_eq!(step_bound(d, 3), (d - 1).div_ceil(2));
        }
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(60))]

        #[test]
        fn plans_are_exact(d in 2usize..=10, dp in 2usize..=6, seed in any::<u64>()) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (psi, phi) = random_majorizing_pair(d, &mut rng, &tol());
            if let Ok(plan) = plan_sequence(&psi, &phi, dp, &tol()) {
                prop_assert!(plan_residual(&plan).unwrap() <= 1e-8);
                let mut prev = psi.clone();
                let mut fixed: Vec<usize> = Vec::new();
                for step in &plan.steps {
                    prop_assert!(verify_completeness(&step.channel) <= 1e-10);
                    prop_assert!(step.intermediate.block.len() <= dp || plan.fallback);
                    let eta = &step.intermediate.state;
                    prop_assert!(majorizes(eta, &prev, &tol()).unwrap().holds);
                    prop_assert!(majorizes(&phi, eta, &tol()).unwrap().holds);
                    for l in &step.intermediate.fixed_levels {
                        prop_assert!(!fixed.contains(l));
                        fixed.push(*l);
                    }
                    prev = eta.clone();
                }
                if !plan.fallback {
                    prop_assert!(plan.step_count() <= plan.step_bound());
                }
            }
        }
    }
}
