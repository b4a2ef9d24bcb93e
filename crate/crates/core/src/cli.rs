//! Request/report layer behind the `cohtrans` binary.
//!
//! A request is a JSON document with the two states and optional settings; a
//! report is a JSON document with every result the command produced. All
//! residuals in a report are recomputed from the emitted data, so a report can
//! be fed back to `verify`.

use std::fmt;
use std::str::FromStr;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::Deserializer;
use serde::ser::Serializer;
use serde::{Deserialize, Serialize};
use serde_json::value::RawValue;

use crate::coherence::{majorizes, pure_density, CoherenceVector, DensityMatrix};
use crate::error::Error;
use crate::kraus::{
    apply_channel, build_kraus, build_locc_plan, simulate_locc, verify_completeness, verify_incoherent,
    IncoherentChannel, KrausOperator,
};
use crate::permutation::{sign_pattern, PermutationSet, Relation};
use crate::sequential::{
    enumerate_intermediates, execute_plan, plan_sequence, TransformPlan, DEFAULT_D_PRIME,
};
use crate::solver::{find_all_feasible, find_feasible_sp, system_residual, ProbabilityVector};
use crate::tolerance::Tolerances;

pub const EXIT_OK: i32 = 0;
pub const EXIT_PARSE: i32 = 2;
pub const EXIT_MAJORIZATION: i32 = 3;
pub const EXIT_NO_FEASIBLE_SP: i32 = 4;
pub const EXIT_NO_INTERMEDIATE: i32 = 5;
pub const EXIT_VERIFICATION: i32 = 6;

/// Tolerance on the difference between reported and recomputed residuals.
const ROUND_TRIP_TOL: f64 = 1e-12;

/// Number of random density matrices `verify` pushes through each channel.
const VERIFY_SAMPLES: usize = 8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Command {
    Check,
    Synthesize,
    Sequence,
    Locc,
    Verify,
}

impl Command {
    pub const NAMES: [&'static str; 5] = ["check", "synthesize", "sequence", "locc", "verify"];

    pub fn name(&self) -> &'static str {
        match self {
            Command::Check => "check",
            Command::Synthesize => "synthesize",
            Command::Sequence => "sequence",
            Command::Locc => "locc",
            Command::Verify => "verify",
        }
    }
}

impl FromStr for Command {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "check" => Ok(Command::Check),
            "synthesize" => Ok(Command::Synthesize),
            "sequence" => Ok(Command::Sequence),
            "locc" => Ok(Command::Locc),
            "verify" => Ok(Command::Verify),
            other => Err(format!("unknown command `{other}`")),
        }
    }
}

impl fmt::Display for Command {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Settings given on the command line; they take precedence over the
/// document's `options`.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub d_prime: Option<usize>,
    /// Replaces the residual tolerance.
    pub tolerance: Option<f64>,
    pub enumerate_all: bool,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct JobRequest {
    pub command: Command,
    /// Raw JSON text: a state document, or a report for `verify`.
    pub document: String,
    pub overrides: Overrides,
}

/// A real amplitude or a `[re, im]` pair.
#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(untagged)]
enum Amplitude {
    Real(f64),
    Complex([f64; 2]),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct Options {
    d_prime: Option<usize>,
    tolerances: Option<Tolerances>,
    enumerate_all: Option<bool>,
    seed: Option<u64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct StateDocument {
    source: Option<Vec<Amplitude>>,
    target: Option<Vec<Amplitude>>,
    source_mu: Option<Vec<f64>>,
    target_mu: Option<Vec<f64>>,
    #[serde(default)]
    options: Options,
}

/// `f64` serialized with 17 significant digits.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Real(pub f64);

impl Serialize for Real {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        if !self.0.is_finite() {
            return serializer.serialize_none();
        }
        let raw = RawValue::from_string(format!("{:.16e}", self.0)).map_err(serde::ser::Error::custom)?;
        raw.serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Real {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        Option::<f64>::deserialize(deserializer).map(|v| Real(v.unwrap_or(f64::NAN)))
    }
}

fn reals(v: &[f64]) -> Vec<Real> {
    v.iter().copied().map(Real).collect()
}

fn floats(v: &[Real]) -> Vec<f64> {
    v.iter().map(|r| r.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorInfo {
    pub code: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StateInfo {
    /// Canonical amplitudes, descending.
    pub amplitudes: Vec<Real>,
    pub mu: Vec<Real>,
    /// `order[k]` is the caller's 1-based level placed at canonical level `k + 1`.
    pub order: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MajorizationInfo {
    pub holds: bool,
    pub first_violation: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Residuals {
    /// `max |sum K^T K - I|`.
    pub completeness: Real,
    /// `max |Phi(rho_source) - rho_target|`.
    pub exactness: Real,
    /// Residual of the probability system, when there is one.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub system: Option<Real>,
}

/// 1-based `[row, col, value]` triplets of one operator.
pub type Triplets = Vec<(usize, usize, Real)>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeasibleSp {
    pub sp: Vec<[usize; 2]>,
    pub probabilities: Vec<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepInfo {
    pub block: Vec<usize>,
    pub fixed_levels: Vec<usize>,
    pub balance_level: Option<usize>,
    pub repaired: bool,
    pub block_norm: Real,
    pub intermediate_mu: Vec<Real>,
    /// Permutation set in global labels.
    pub sp: Vec<[usize; 2]>,
    pub probabilities: Vec<Real>,
    pub kraus: Vec<Triplets>,
    pub completeness: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanInfo {
    pub d_prime: usize,
    pub step_count: usize,
    pub step_bound: usize,
    pub fallback: bool,
    pub steps: Vec<StepInfo>,
    /// `max |execute(rho_source) - rho_target|`.
    pub end_to_end: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutcomeInfo {
    pub probability: Real,
    pub overlap: Option<Real>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LoccInfo {
    /// Diagonals of the measurement operators.
    pub measurement: Vec<Vec<Real>>,
    /// Correction applied to both parties; `null` is the identity.
    pub corrections: Vec<Option<[usize; 2]>>,
    pub probabilities: Vec<Real>,
    pub completeness: Real,
    pub outcomes: Vec<OutcomeInfo>,
    pub total_probability: Real,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationInfo {
    pub completeness: Real,
    pub exactness: Real,
    /// Largest `|tr Phi(rho) - 1|` over the random test states.
    pub trace_defect: Real,
    pub incoherent: bool,
    /// Recomputed residuals agree with the reported ones.
    pub consistent: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobReport {
    pub command: String,
    pub status: String,
    pub exit_code: i32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ErrorInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub source: Option<StateInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub target: Option<StateInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub majorization: Option<MajorizationInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pattern: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sp: Option<Vec<[usize; 2]>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub probabilities: Option<Vec<Real>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kraus: Option<Vec<Triplets>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub residuals: Option<Residuals>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub feasible_sps: Option<Vec<FeasibleSp>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub plan: Option<PlanInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub intermediates: Option<Vec<Vec<Real>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub locc: Option<LoccInfo>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub verification: Option<VerificationInfo>,
}

impl JobReport {
    fn new(command: Command) -> Self {
        Self {
            command: command.name().into(),
            status: "ok".into(),
            exit_code: EXIT_OK,
            error: None,
            source: None,
            target: None,
            majorization: None,
            pattern: None,
            sp: None,
            probabilities: None,
            kraus: None,
            residuals: None,
            feasible_sps: None,
            plan: None,
            intermediates: None,
            locc: None,
            verification: None,
        }
    }

    fn fail(&mut self, err: &Error) {
        let (code, exit) = classify(err);
        self.status = "error".into();
        self.exit_code = exit;
        self.error = Some(ErrorInfo {
            code: code.into(),
            message: err.to_string(),
        });
    }

    fn verification_failure(&mut self, message: String) {
        self.status = "verification_failed".into();
        self.exit_code = EXIT_VERIFICATION;
        self.error = Some(ErrorInfo {
            code: "verification".into(),
            message,
        });
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report serialization cannot fail");
        s.push('\n');
        s
    }
}

/// Reason code and exit status of an error.
pub fn classify(err: &Error) -> (&'static str, i32) {
    match err {
        Error::Parse(_) => ("parse", EXIT_PARSE),
        Error::Norm { .. } => ("norm", EXIT_PARSE),
        Error::ZeroAmplitude { .. } => ("zero_amplitude", EXIT_PARSE),
        Error::Empty => ("empty", EXIT_PARSE),
        Error::NotDescending { .. } => ("not_descending", EXIT_PARSE),
        Error::DimensionMismatch { .. } => ("dimension_mismatch", EXIT_PARSE),
        Error::DimensionTooLarge { .. } => ("dimension_too_large", EXIT_PARSE),
        Error::InvalidPattern(_) => ("invalid_pattern", EXIT_PARSE),
        Error::Majorization { .. } => ("majorization", EXIT_MAJORIZATION),
        Error::NoCandidate => ("no_candidate", EXIT_NO_FEASIBLE_SP),
        Error::NoFeasibleSp { .. } => ("no_feasible_sp", EXIT_NO_FEASIBLE_SP),
        Error::NoIntermediateFound { .. } => ("no_intermediate", EXIT_NO_INTERMEDIATE),
        Error::DegenerateGamma { .. } => ("degenerate_gamma", EXIT_VERIFICATION),
        Error::NegativeRadicand { .. } => ("negative_radicand", EXIT_VERIFICATION),
        Error::BlockMismatch(_) => ("block_mismatch", EXIT_PARSE),
        Error::NotMonomial { .. } => ("not_incoherent", EXIT_VERIFICATION),
        Error::InvalidDensity(_) => ("invalid_density", EXIT_VERIFICATION),
    }
}

fn state_info(v: &CoherenceVector) -> StateInfo {
    StateInfo {
        amplitudes: reals(v.amps()),
        mu: reals(&v.mu().entries),
        order: v.order().iter().map(|k| k + 1).collect(),
    }
}

fn kraus_triplets(channel: &IncoherentChannel) -> Vec<Triplets> {
    channel
        .kraus
        .iter()
        .map(|k| {
            k.triplets()
                .into_iter()
                .map(|(r, c, v)| (r + 1, c + 1, Real(v)))
                .collect()
        })
        .collect()
}

fn channel_exactness(channel: &IncoherentChannel, source: &CoherenceVector, target: &CoherenceVector) -> crate::Result<f64> {
    let out = apply_channel(channel, &pure_density(source))?;
    Ok(out.max_abs_diff(&pure_density(target)))
}

struct Settings {
    tol: Tolerances,
    d_prime: usize,
    enumerate_all: bool,
    seed: u64,
}

fn settings(options: &Options, overrides: &Overrides) -> Settings {
    let mut tol = options.tolerances.unwrap_or_default();
    if let Some(t) = overrides.tolerance {
        tol.res = t;
    }
    Settings {
        tol,
        d_prime: overrides.d_prime.or(options.d_prime).unwrap_or(DEFAULT_D_PRIME),
        enumerate_all: overrides.enumerate_all || options.enumerate_all.unwrap_or(false),
        seed: overrides.seed.or(options.seed).unwrap_or(0),
    }
}

fn parse_state(
    name: &str,
    amps: &Option<Vec<Amplitude>>,
    mu: &Option<Vec<f64>>,
    tol: &Tolerances,
) -> crate::Result<CoherenceVector> {
    match (amps, mu) {
        (Some(a), None) => {
            let raw: Vec<Complex64> = a
                .iter()
                .map(|x| match *x {
                    Amplitude::Real(r) => Complex64::new(r, 0.0),
                    Amplitude::Complex([re, im]) => Complex64::new(re, im),
                })
                .collect();
            CoherenceVector::canonicalize(&raw, tol)
        }
        (None, Some(m)) => CoherenceVector::from_mu(m, tol),
        (Some(_), Some(_)) => Err(Error::Parse(format!("give either `{name}` or `{name}_mu`, not both"))),
        (None, None) => Err(Error::Parse(format!("missing `{name}` (or `{name}_mu`)"))),
    }
}

fn parse_document(text: &str, overrides: &Overrides) -> crate::Result<(CoherenceVector, CoherenceVector, Settings)> {
    let doc: StateDocument = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
    let s = settings(&doc.options, overrides);
    let source = parse_state("source", &doc.source, &doc.source_mu, &s.tol)?;
    let target = parse_state("target", &doc.target, &doc.target_mu, &s.tol)?;
    if source.dim() != target.dim() {
        return Err(Error::DimensionMismatch {
            left: source.dim(),
            right: target.dim(),
        });
    }
    Ok((source, target, s))
}

fn pattern_labels(source: &CoherenceVector, target: &CoherenceVector, tol: &Tolerances) -> Option<Vec<String>> {
    sign_pattern(source, target, tol).ok().map(|p| {
        p.relations()
            .iter()
            .map(|r| match r {
                Relation::Le => "LE".to_string(),
                Relation::Ge => "GE".to_string(),
            })
            .collect()
    })
}

/// Executes one request. Never panics on bad input; every failure is
/// reported in the returned document with its exit code.
pub fn run(request: &JobRequest) -> JobReport {
    let mut report = JobReport::new(request.command);
    if request.command == Command::Verify {
        if let Err(e) = run_verify(request, &mut report) {
            report.fail(&e);
        }
        return report;
    }
    let (source, target, s) = match parse_document(&request.document, &request.overrides) {
        Ok(x) => x,
        Err(e) => {
            report.fail(&e);
            return report;
        }
    };
    report.source = Some(state_info(&source));
    report.target = Some(state_info(&target));
    let result = majorizes(&target, &source, &s.tol).and_then(|m| {
        report.majorization = Some(MajorizationInfo {
            holds: m.holds,
            first_violation: m.first_violation,
        });
        if let Some(k) = m.first_violation {
            return Err(Error::Majorization { first_violation: k });
        }
        report.pattern = pattern_labels(&source, &target, &s.tol);
        match request.command {
            Command::Check => Ok(()),
            Command::Synthesize => run_synthesize(&source, &target, &s, &mut report),
            Command::Sequence => run_sequence(&source, &target, &s, &mut report),
            Command::Locc => run_locc(&source, &target, &s, &mut report),
            Command::Verify => unreachable!(),
        }
    });
    if let Err(e) = result {
        report.fail(&e);
    }
    report
}

fn run_synthesize(
    source: &CoherenceVector,
    target: &CoherenceVector,
    s: &Settings,
    report: &mut JobReport,
) -> crate::Result<()> {
    let tol = &s.tol;
    if s.enumerate_all {
        let all = find_all_feasible(source, target, tol)?;
        report.feasible_sps = Some(
            all.iter()
                .map(|x| FeasibleSp {
                    sp: x.sp.labels(),
                    probabilities: reals(x.probabilities.values()),
                })
                .collect(),
        );
    }
    let sol = find_feasible_sp(source, target, tol)?;
    let channel = build_kraus(&sol.sp, &sol.probabilities, &sol.cmat, source, tol)?;
    let completeness = verify_completeness(&channel);
    let exactness = channel_exactness(&channel, source, target)?;
    report.sp = Some(sol.sp.labels());
    report.probabilities = Some(reals(sol.probabilities.values()));
    report.kraus = Some(kraus_triplets(&channel));
    report.residuals = Some(Residuals {
        completeness: Real(completeness),
        exactness: Real(exactness),
        system: Some(Real(system_residual(&sol.cmat, &sol.probabilities, source))),
    });
    if !verify_incoherent(&channel) || completeness > tol.comp || exactness > tol.res {
        report.verification_failure(format!(
            "channel check failed: completeness {completeness:e}, exactness {exactness:e}"
        ));
    }
    Ok(())
}

fn plan_info(plan: &TransformPlan, end_to_end: f64) -> PlanInfo {
    let one = |v: &[usize]| v.iter().map(|l| l + 1).collect::<Vec<_>>();
    PlanInfo {
        d_prime: plan.d_prime,
        step_count: plan.step_count(),
        step_bound: plan.step_bound(),
        fallback: plan.fallback,
        steps: plan
            .steps
            .iter()
            .map(|st| StepInfo {
                block: one(&st.intermediate.block),
                fixed_levels: one(&st.intermediate.fixed_levels),
                balance_level: st.intermediate.balance_level.map(|l| l + 1),
                repaired: st.intermediate.repaired,
                block_norm: Real(st.block_norm),
                intermediate_mu: reals(&st.intermediate.state.mu().entries),
                sp: st.channel.sp.labels(),
                probabilities: reals(st.channel.probabilities.values()),
                kraus: kraus_triplets(&st.channel),
                completeness: Real(verify_completeness(&st.channel)),
            })
            .collect(),
        end_to_end: Real(end_to_end),
    }
}

fn run_sequence(
    source: &CoherenceVector,
    target: &CoherenceVector,
    s: &Settings,
    report: &mut JobReport,
) -> crate::Result<()> {
    let tol = &s.tol;
    if s.enumerate_all && source.dim() > 0 {
        let all: Vec<usize> = (0..source.dim()).collect();
        let found = enumerate_intermediates(source, target, &all, s.d_prime.max(2), tol)?;
        report.intermediates = Some(found.iter().map(|i| reals(&i.state.mu().entries)).collect());
    }
    let plan = plan_sequence(source, target, s.d_prime, tol)?;
    let end_to_end = execute_plan(&plan, &pure_density(source))?.max_abs_diff(&pure_density(target));
    let info = plan_info(&plan, end_to_end);
    let worst_completeness = info.steps.iter().map(|st| st.completeness.0).fold(0.0, f64::max);
    report.plan = Some(info);
    if plan.fallback {
        report.status = "fallback".into();
        report.exit_code = EXIT_NO_INTERMEDIATE;
        report.error = Some(ErrorInfo {
            code: "no_intermediate".into(),
            message: "no valid intermediate state; the remaining levels were handled in one step".into(),
        });
    }
    let incoherent = plan.steps.iter().all(|st| verify_incoherent(&st.channel));
    if !incoherent || worst_completeness > tol.comp || end_to_end > tol.plan_res {
        report.verification_failure(format!(
            "plan check failed: completeness {worst_completeness:e}, end-to-end {end_to_end:e}"
        ));
    }
    Ok(())
}

fn run_locc(
    source: &CoherenceVector,
    target: &CoherenceVector,
    s: &Settings,
    report: &mut JobReport,
) -> crate::Result<()> {
    let tol = &s.tol;
    let sol = find_feasible_sp(source, target, tol)?;
    let plan = build_locc_plan(&sol.sp, &sol.probabilities, &sol.cmat, source, tol)?;
    let sim = simulate_locc(&plan, source, target)?;
    report.sp = Some(sol.sp.labels());
    report.probabilities = Some(reals(sol.probabilities.values()));
    let completeness = plan.completeness();
    report.locc = Some(LoccInfo {
        measurement: plan.measurement.iter().map(|m| reals(m)).collect(),
        corrections: plan.corrections.iter().map(|c| c.map(|t| [t.x() + 1, t.y() + 1])).collect(),
        probabilities: reals(plan.probabilities.values()),
        completeness: Real(completeness),
        outcomes: sim
            .outcomes
            .iter()
            .map(|o| OutcomeInfo {
                probability: Real(o.probability),
                overlap: o.overlap.map(Real),
            })
            .collect(),
        total_probability: Real(sim.total_probability),
    });
    let min_overlap = sim.min_overlap();
    if completeness > tol.comp || (sim.total_probability - 1.0).abs() > tol.comp || 1.0 - min_overlap > tol.res {
        report.verification_failure(format!(
            "LOCC check failed: completeness {completeness:e}, total probability {}, min overlap {min_overlap}",
            sim.total_probability
        ));
    }
    Ok(())
}

fn channel_from_triplets(dim: usize, ops: &[Triplets], probabilities: &[Real]) -> crate::Result<(IncoherentChannel, bool)> {
    let mut incoherent = true;
    let mut kraus = Vec::with_capacity(ops.len());
    for op in ops {
        let mut t = Vec::with_capacity(op.len());
        for &(r, c, v) in op {
            if r == 0 || c == 0 || r > dim || c > dim {
                return Err(Error::Parse(format!("Kraus entry [{r}, {c}] outside 1..={dim}")));
            }
            t.push((r - 1, c - 1, v.0));
        }
        incoherent &= crate::kraus::is_incoherent(dim, &t);
        kraus.push(KrausOperator::from_triplets(dim, &t)?);
    }
    Ok((
        IncoherentChannel {
            dim,
            kraus,
            probabilities: ProbabilityVector::new(floats(probabilities)),
            sp: PermutationSet::identity(dim),
        },
        incoherent,
    ))
}

fn random_density<R: Rng>(dim: usize, rng: &mut R) -> DensityMatrix {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let m = &a * a.transpose() + DMatrix::<f64>::identity(dim, dim) * 1e-3;
    let tr = m.trace();
    DensityMatrix::new(m / tr, &Tolerances::default()).expect("A A^T is a valid density matrix")
}

fn run_verify(request: &JobRequest, report: &mut JobReport) -> crate::Result<()> {
    let input: JobReport = serde_json::from_str(&request.document).map_err(|e| Error::Parse(e.to_string()))?;
    let s = settings(&Options::default(), &request.overrides);
    let tol = &s.tol;
    let state = |info: &Option<StateInfo>, name: &str| -> crate::Result<CoherenceVector> {
        let info = info
            .as_ref()
            .ok_or_else(|| Error::Parse(format!("report has no `{name}` state")))?;
        CoherenceVector::from_descending(floats(&info.amplitudes), tol)
    };
    let source = state(&input.source, "source")?;
    let target = state(&input.target, "target")?;
    let d = source.dim();
    if target.dim() != d {
        return Err(Error::DimensionMismatch { left: d, right: target.dim() });
    }
    report.source = input.source.clone();
    report.target = input.target.clone();

    let mut channels = Vec::new();
    let mut incoherent = true;
    let (reported_completeness, reported_exactness, exact_tol) = if let Some(plan) = &input.plan {
        for st in &plan.steps {
            let (ch, inc) = channel_from_triplets(d, &st.kraus, &st.probabilities)?;
            incoherent &= inc;
            channels.push(ch);
        }
        let worst = plan.steps.iter().map(|st| st.completeness.0).fold(0.0, f64::max);
        (worst, plan.end_to_end.0, tol.plan_res)
    } else if let (Some(ops), Some(p), Some(res)) = (&input.kraus, &input.probabilities, &input.residuals) {
        let (ch, inc) = channel_from_triplets(d, ops, p)?;
        incoherent &= inc;
        channels.push(ch);
        (res.completeness.0, res.exactness.0, tol.res)
    } else {
        return Err(Error::Parse("report contains neither `kraus` nor `plan`".into()));
    };

    let completeness = channels.iter().map(verify_completeness).fold(0.0, f64::max);
    let rho = channels
        .iter()
        .try_fold(pure_density(&source), |r, ch| apply_channel(ch, &r))?;
    let exactness = rho.max_abs_diff(&pure_density(&target));

    let mut rng = ChaCha8Rng::seed_from_u64(s.seed);
    let mut trace_defect: f64 = 0.0;
    for _ in 0..VERIFY_SAMPLES {
        let r = channels
            .iter()
            .try_fold(random_density(d, &mut rng), |r, ch| apply_channel(ch, &r))?;
        trace_defect = trace_defect.max((r.trace() - 1.0).abs()).max(r.hermiticity_defect());
    }
    let consistent = (completeness - reported_completeness).abs() <= ROUND_TRIP_TOL
        && (exactness - reported_exactness).abs() <= ROUND_TRIP_TOL;
    report.verification = Some(VerificationInfo {
        completeness: Real(completeness),
        exactness: Real(exactness),
        trace_defect: Real(trace_defect),
        incoherent,
        consistent,
    });
    if !incoherent || completeness > tol.comp || exactness > exact_tol || trace_defect > tol.norm || !consistent {
        report.verification_failure(format!(
            "completeness {completeness:e}, exactness {exactness:e}, trace defect {trace_defect:e}, \
             incoherent {incoherent}, consistent with report {consistent}"
        ));
    }
    Ok(())
}
