//! Synthesis and verification of deterministic incoherent transformations
//! between pure coherent states.
//!
//! The pipeline is: canonicalize both states ([`coherence`]), gate on
//! majorization, build the case table of candidate transpositions and
//! enumerate non-crossing permutation sets ([`permutation`]), solve for the
//! outcome probabilities ([`solver`]), and materialize Kraus operators or an
//! equivalent LOCC plan ([`kraus`]). [`sequential`] chains lower-dimensional
//! subspace steps through intermediate states.

pub mod cli;
pub mod coherence;
pub mod error;
pub mod kraus;
pub mod permutation;
pub mod sampling;
pub mod sequential;
pub mod solver;
pub mod tolerance;

pub use coherence::{majorizes, pure_density, CoherenceVector, DensityMatrix, MajorizationReport, MuVector};
pub use error::{Error, Result};
pub use kraus::{
    apply_channel, build_kraus, build_locc_plan, simulate_locc, verify_completeness,
    verify_incoherent, IncoherentChannel, KrausOperator, LoccPlan, LoccReport,
};
pub use permutation::{
    build_table, crossing, enumerate_sps, mandatory_permutations, sign_pattern, CasePattern,
    PermutationSet, PermutationTable, Relation, Transposition,
};
pub use sequential::{
    balance_coefficient, embed_subspace_channel, execute_plan, plan_sequence, propose_intermediate,
    IntermediateState, PlanStep, TransformPlan,
};
pub use solver::{
    brute_force_oracle, closed_form_probability, coefficient_matrix, find_feasible_sp,
    solve_probabilities, ClosedFormKind, CoefficientMatrix, Infeasible, ProbabilityVector,
    SolutionFamily, SpSolution,
};
pub use tolerance::Tolerances;
