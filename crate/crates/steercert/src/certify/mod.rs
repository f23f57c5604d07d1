//! Certification of lower bounds on the number of incompatible measurements.
//!
//! A set of n_m measurements is k-compatible when a single joint observable
//! on k copies of the system, together with classical post-processing,
//! reproduces every effect — with the joint observable additionally required
//! to behave like a separable (unentangled) k-copy measurement. Testing this
//! is a semidefinite feasibility problem over joint-observable blocks G_λ,
//! one per deterministic response tuple λ. Separability itself is not
//! semidefinite-representable, so the test runs as a hierarchy of nested
//! relaxations:
//!
//! - [`ConstraintTier::Kcompat`]: marginal and normalization constraints with
//!   G_λ ⪰ 0 — plain k-compatibility of the lifted effects;
//! - [`ConstraintTier::KcompatPpt`]: adds a partial-transpose cut across
//!   every single copy;
//! - [`ConstraintTier::KcompatPptDps`]: adds an extension variable per G_λ in
//!   which every copy but the first is duplicated, with marginal recovery,
//!   duplicate-swap invariance, and transpose cuts on the extension.
//!
//! Each tier only ever adds constraints, so infeasibility at any tier
//! certifies infeasibility of the separable model. The physical payoff:
//! if the steering-equivalent observables on Bob's side fail the k-test,
//! Alice must control at least k + 1 incompatible measurements.
//!
//! Two solve modes: [`SolveMode::Feasibility`] queries a fixed visibility t
//! (effects depolarized to t·M + (1−t)·I/n_a), and [`SolveMode::MaxVisibility`]
//! finds the critical visibility t_c in a single solve by making t a boxed
//! scalar variable — valid because the targets are affine in t. For t above
//! t_c (beyond solver tolerance) the tier's test is infeasible.
//!
//! Verdicts are deliberately conservative: [`Verdict::CertifiedAtLeast`]
//! requires a solver infeasibility certificate that passes an independent
//! quality re-check, and every ambiguous outcome (iteration limits, reduced
//! accuracy, failed certificates) collapses to [`Verdict::Inconclusive`].

mod builder;
mod covariance;
pub mod lift;
pub mod symmetry;

pub use builder::ProblemStats;
pub use lift::{lift, LiftedAssemblage, Responses};

use std::fmt;
use std::time::Instant;

use thiserror::Error;

use crate::qops::{eigvalsh, identity, min_eig, partial_trace, partial_transpose, Operator, C64};
use crate::scenarios::MeasurementAssemblage;
use crate::sdp_adapter::{
    run, CertificateQuality, ConicProgram, SdpError, SolveStatus, SolverSettings,
};
use crate::seo::{seo, steer, SeoError};

use builder::BuildOutput;
use covariance::LambdaQuotient;

/// Refuse instances with more response tuples than this unless overridden:
/// fail fast with a clear message instead of a solver meltdown.
pub const MAX_PARENT_BLOCKS: usize = 256;
/// Same guard for the extension dimension d^(1+level·(k−1)) on the DPS tier.
pub const MAX_EXTENSION_DIM: usize = 256;

/// The nested constraint tiers, ordered by strength.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum ConstraintTier {
    /// Plain k-compatibility: marginals, normalization, G_λ ⪰ 0.
    Kcompat,
    /// Adds partial-transpose positivity across every single copy.
    KcompatPpt,
    /// Adds symmetric extensions: each copy but the first duplicated
    /// `level` − 1 times, with marginal recovery, swap invariance, and
    /// transpose cuts on the extension. `level` = 2 is the first step of the
    /// hierarchy; levels above 3 are out of scope.
    KcompatPptDps { level: u32 },
}

impl fmt::Display for ConstraintTier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConstraintTier::Kcompat => write!(f, "kcompat"),
            ConstraintTier::KcompatPpt => write!(f, "kcompat+ppt"),
            ConstraintTier::KcompatPptDps { level } => write!(f, "kcompat+ppt+dps({level})"),
        }
    }
}

impl std::str::FromStr for ConstraintTier {
    type Err = String;

    /// Accepts the display forms and the shorthands `ppt`, `dps`, `dps3`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let t = s.trim().to_ascii_lowercase();
        if let Some(rest) = t.strip_prefix("kcompat+ppt+dps").or_else(|| t.strip_prefix("dps")) {
            let digits = rest.trim_matches(|c| c == '(' || c == ')');
            let level = if digits.is_empty() {
                2
            } else {
                digits.parse().map_err(|_| format!("unrecognized tier {s:?}"))?
            };
            return Ok(ConstraintTier::KcompatPptDps { level });
        }
        match t.as_str() {
            "kcompat" => Ok(ConstraintTier::Kcompat),
            "kcompat+ppt" | "ppt" => Ok(ConstraintTier::KcompatPpt),
            _ => Err(format!(
                "unrecognized tier {s:?}; expected kcompat, kcompat+ppt, or kcompat+ppt+dps(N)"
            )),
        }
    }
}

/// What the program asks: a fixed-visibility membership test, or the
/// visibility threshold itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum SolveMode {
    /// Test the effects depolarized to visibility `t`.
    Feasibility { t: f64 },
    /// Maximize the visibility that stays feasible (single solve, no
    /// bisection; the targets are affine in t).
    MaxVisibility,
}

/// Encodings of the extension tier.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DpsEncoding {
    /// Extension variables on all invariant blocks of the duplicate-swap
    /// group — equivalent to the explicit formulation, much smaller.
    SwapBlocks,
    /// Only the fully symmetric block: duplicates projected onto their
    /// symmetric subspace. A further relaxation-free restriction that is
    /// exact for this hierarchy (the symmetrized part of any feasible
    /// extension is feasible); validated against the other encodings.
    BoseSymmetric,
    /// Every extension written out as a full Hermitian with explicit swap
    /// constraints. For cross-validation and small instances only.
    Uncompressed,
}

/// Knobs for problem assembly. Defaults are the fastest sound configuration;
/// every reduction they enable is either proved exact or verified at
/// detection time, and can be switched off for cross-validation.
#[derive(Debug, Clone)]
pub struct ProblemOptions {
    /// Restrict each G_λ to the copy-permutation commutant (k ≥ 2). Exact:
    /// twirling a feasible family preserves every constraint.
    pub use_symmetry_reduction: bool,
    /// Quotient the response tuples by a verified outcome-covariance group
    /// when one is detected (see the covariance module). Exact by group
    /// averaging; silently skipped when no symmetry is found.
    pub use_covariance_quotient: bool,
    pub dps_encoding: DpsEncoding,
    /// Proceed past [`MAX_PARENT_BLOCKS`] / [`MAX_EXTENSION_DIM`].
    pub override_caps: bool,
    /// Refuse to assemble programs whose estimated solver working set
    /// exceeds this many megabytes.
    pub mem_budget_mb: usize,
}

impl Default for ProblemOptions {
    fn default() -> Self {
        Self {
            use_symmetry_reduction: true,
            use_covariance_quotient: true,
            dps_encoding: DpsEncoding::SwapBlocks,
            override_caps: false,
            mem_budget_mb: SolverSettings::from_env().mem_budget_mb,
        }
    }
}

/// Errors from problem assembly or the solve pipeline.
#[derive(Debug, Error)]
pub enum CertifyError {
    #[error("copy count k must be at least 1")]
    InvalidCopyCount,
    #[error("visibility {0} outside [0, 1]")]
    InvalidVisibility(f64),
    #[error("extension level {level} unsupported: implemented levels are 2 and 3")]
    UnsupportedDpsLevel { level: u32 },
    #[error("{what} = {value} exceeds the cap of {cap}; enable override_caps to proceed")]
    CapExceeded { what: &'static str, value: usize, cap: usize },
    #[error(
        "estimated solver working set {estimate_mb} MB exceeds the {budget_mb} MB budget; \
         raise the budget or pick a smaller encoding"
    )]
    ResourceBudget { estimate_mb: usize, budget_mb: usize },
    #[error("program assembly failed: {0}")]
    Encoding(String),
    #[error(transparent)]
    Solver(#[from] SdpError),
    #[error(transparent)]
    Seo(#[from] SeoError),
    #[error("bisection probe at t = {t} gave no usable answer: {reason}")]
    BisectionProbe { t: f64, reason: String },
}

/// A fully assembled compatibility test, ready to solve.
pub struct CompatProblem {
    lifted: LiftedAssemblage,
    tier: ConstraintTier,
    mode: SolveMode,
    out: BuildOutput,
}

impl CompatProblem {
    pub fn lifted(&self) -> &LiftedAssemblage {
        &self.lifted
    }

    pub fn tier(&self) -> ConstraintTier {
        self.tier
    }

    pub fn k(&self) -> usize {
        self.lifted.k()
    }

    pub fn mode(&self) -> SolveMode {
        self.mode
    }

    /// The deterministic response table indexing the joint-observable blocks.
    pub fn responses(&self) -> Responses {
        Responses {
            n_outcomes: self.lifted.n_outcomes(),
            n_settings: self.lifted.n_settings(),
        }
    }

    pub fn stats(&self) -> &ProblemStats {
        &self.out.stats
    }

    /// The assembled conic program (for dumps and diagnostics).
    pub fn program(&self) -> &ConicProgram {
        &self.out.program
    }

    /// Decode the joint-observable family `{G_lambda}` from a solution vector
    /// of [`Self::program`], undoing whatever symmetry compression the builder
    /// applied.  Blocks follow the ordering of [`Self::responses`].
    pub fn joint_observable(&self, x: &[f64]) -> Vec<Operator> {
        self.out.decode.parents(x, &self.out.program)
    }
}

/// The certification outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Verdict {
    /// The tier's test is infeasible with a validated certificate: the
    /// measurements cannot be produced by k compatible ones, so at least
    /// this many incompatible measurements are present.
    CertifiedAtLeast(usize),
    /// Feasible, undecided, or numerically ambiguous — never a claim.
    Inconclusive,
}

impl Verdict {
    pub fn is_certified(&self) -> bool {
        matches!(self, Verdict::CertifiedAtLeast(_))
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Verdict::CertifiedAtLeast(n) => write!(f, "CERTIFIED_AT_LEAST({n})"),
            Verdict::Inconclusive => write!(f, "INCONCLUSIVE"),
        }
    }
}

/// Everything one solve establishes, with diagnostics.
#[derive(Debug, Clone)]
pub struct CertificationReport {
    pub verdict: Verdict,
    pub tier: ConstraintTier,
    pub k: usize,
    /// The visibility queried, in fixed-visibility mode.
    pub t_queried: Option<f64>,
    /// The critical visibility, in threshold mode: for t > t_c (beyond
    /// solver tolerance) this tier certifies k + 1.
    pub t_c: Option<f64>,
    pub solver_status: SolveStatus,
    /// Backend status string before the conservative mapping.
    pub raw_solver_status: String,
    /// Largest violation of the tier's displayed constraints by the decoded
    /// solution, when a solution exists (spectral norms for equalities,
    /// negative-eigenvalue magnitudes for cones).
    pub max_constraint_violation: Option<f64>,
    /// Quality of the infeasibility certificate behind a CERTIFIED verdict.
    pub certificate: Option<CertificateQuality>,
    pub iterations: u32,
    pub wall_time_s: f64,
    /// Encoding path taken by the builder.
    pub encoding: &'static str,
    /// Numerical rank of the steered reduced state, when the problem came
    /// from a state (the observables live on its support).
    pub seo_rank: Option<usize>,
}

/// Assemble the tier's conic program for `k` copies of `m` with default
/// options.
pub fn build_problem(
    m: &MeasurementAssemblage,
    k: usize,
    tier: ConstraintTier,
    mode: SolveMode,
) -> Result<CompatProblem, CertifyError> {
    build_problem_with(m, k, tier, mode, &ProblemOptions::default())
}

/// Assemble the tier's conic program with explicit options.
pub fn build_problem_with(
    m: &MeasurementAssemblage,
    k: usize,
    tier: ConstraintTier,
    mode: SolveMode,
    opts: &ProblemOptions,
) -> Result<CompatProblem, CertifyError> {
    if k < 1 {
        return Err(CertifyError::InvalidCopyCount);
    }
    if let SolveMode::Feasibility { t } = mode {
        if !(0.0..=1.0).contains(&t) {
            return Err(CertifyError::InvalidVisibility(t));
        }
    }
    let dps_level = match tier {
        ConstraintTier::KcompatPptDps { level } => {
            if !(2..=3).contains(&level) {
                return Err(CertifyError::UnsupportedDpsLevel { level });
            }
            Some(level as usize)
        }
        _ => None,
    };

    let n_lam = m.n_outcomes().pow(m.n_settings() as u32);
    if !opts.override_caps && n_lam > MAX_PARENT_BLOCKS {
        return Err(CertifyError::CapExceeded {
            what: "response tuples",
            value: n_lam,
            cap: MAX_PARENT_BLOCKS,
        });
    }
    if let Some(level) = dps_level.filter(|_| k >= 2 && !opts.override_caps) {
        let ext_dim = m.d().pow((1 + level * (k - 1)) as u32);
        if ext_dim > MAX_EXTENSION_DIM {
            return Err(CertifyError::CapExceeded {
                what: "extension dimension",
                value: ext_dim,
                cap: MAX_EXTENSION_DIM,
            });
        }
    }

    let lifted = lift(m, k);
    // The quotient only pays off on the class-indexed paths; detection is
    // cheap but skip it where the result would be unused.
    let quotient_applies = k >= 2
        && match tier {
            ConstraintTier::KcompatPptDps { .. } => opts.dps_encoding != DpsEncoding::Uncompressed,
            _ => opts.use_symmetry_reduction,
        };
    let quotient = (opts.use_covariance_quotient && quotient_applies)
        .then(|| LambdaQuotient::detect(m))
        .flatten();

    let out = builder::build(
        &lifted,
        tier,
        &mode,
        opts.dps_encoding,
        opts.use_symmetry_reduction,
        quotient.as_ref(),
        opts.mem_budget_mb,
    )?;
    Ok(CompatProblem { lifted, tier, mode, out })
}

/// Solve an assembled problem and map the outcome to a conservative verdict.
///
/// Fixed-visibility mode: a validated infeasibility certificate yields
/// `CERTIFIED_AT_LEAST(k+1)`; a solved (feasible) program or any ambiguous
/// status yields `INCONCLUSIVE`. Threshold mode: a solved program reports
/// t_c; the verdict is always `INCONCLUSIVE` because no single visibility was
/// put to the test.
pub fn solve(
    p: &CompatProblem,
    settings: &SolverSettings,
) -> Result<CertificationReport, CertifyError> {
    let start = Instant::now();
    let outcome = run(&p.out.program, settings)?;

    let mut verdict = Verdict::Inconclusive;
    let mut t_queried = None;
    let mut t_c = None;
    let mut max_violation = None;
    match p.mode {
        SolveMode::Feasibility { t } => {
            t_queried = Some(t);
            match outcome.status {
                SolveStatus::PrimalInfeasible => {
                    verdict = Verdict::CertifiedAtLeast(p.k() + 1);
                }
                SolveStatus::Optimal => {
                    max_violation = Some(max_tier_violation(p, &outcome.x, t));
                }
                SolveStatus::Unknown { .. } => {}
            }
        }
        SolveMode::MaxVisibility => {
            if outcome.status == SolveStatus::Optimal {
                let t_var = p.out.t_var.expect("threshold mode allocates the scalar");
                let t = p.out.program.decode_scalar(&outcome.x, t_var).clamp(0.0, 1.0);
                t_c = Some(t);
                max_violation = Some(max_tier_violation(p, &outcome.x, t));
            }
        }
    }

    Ok(CertificationReport {
        verdict,
        tier: p.tier,
        k: p.k(),
        t_queried,
        t_c,
        solver_status: outcome.status,
        raw_solver_status: outcome.raw_status,
        max_constraint_violation: max_violation,
        certificate: outcome.certificate,
        iterations: outcome.iterations,
        wall_time_s: start.elapsed().as_secs_f64(),
        encoding: p.out.stats.encoding,
        seo_rank: None,
    })
}

/// Critical visibility of the tier's test in a single threshold solve.
pub fn critical_visibility(
    m: &MeasurementAssemblage,
    k: usize,
    tier: ConstraintTier,
    settings: &SolverSettings,
    opts: &ProblemOptions,
) -> Result<CertificationReport, CertifyError> {
    let p = build_problem_with(m, k, tier, SolveMode::MaxVisibility, opts)?;
    solve(&p, settings)
}

/// Cross-check for the threshold mode: bisect fixed-visibility feasibility
/// down to a bracket of width `tol`. t = 0 is feasible for every tier (the
/// trivial joint observable splits the identity), so only the upper end is
/// probed.
pub fn critical_visibility_bisection(
    m: &MeasurementAssemblage,
    k: usize,
    tier: ConstraintTier,
    settings: &SolverSettings,
    opts: &ProblemOptions,
    tol: f64,
) -> Result<f64, CertifyError> {
    let probe = |t: f64| -> Result<bool, CertifyError> {
        let p = build_problem_with(m, k, tier, SolveMode::Feasibility { t }, opts)?;
        let rep = solve(&p, settings)?;
        match rep.solver_status {
            SolveStatus::Optimal => Ok(true),
            SolveStatus::PrimalInfeasible => Ok(false),
            SolveStatus::Unknown { ref reason } => {
                Err(CertifyError::BisectionProbe { t, reason: reason.clone() })
            }
        }
    };
    if probe(1.0)? {
        return Ok(1.0);
    }
    let (mut lo, mut hi) = (0.0f64, 1.0f64);
    while hi - lo > tol {
        let mid = 0.5 * (lo + hi);
        if probe(mid)? {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Full pipeline from Bob's side of a steering experiment: steer the state
/// with Alice's measurements, form the steering-equivalent observables on the
/// support of the reduced state, and run the tier's k-test on them at full
/// visibility. The report records the support's numerical rank.
pub fn certify_from_state(
    state: &Operator,
    m: &MeasurementAssemblage,
    k: usize,
    tier: ConstraintTier,
    settings: &SolverSettings,
    opts: &ProblemOptions,
) -> Result<CertificationReport, CertifyError> {
    let observables = seo(&steer(state, m)?)?;
    let p = build_problem_with(&observables, k, tier, SolveMode::Feasibility { t: 1.0 }, opts)?;
    let mut report = solve(&p, settings)?;
    report.seo_rank = Some(observables.d());
    Ok(report)
}

/// Largest magnitude eigenvalue of a Hermitian operator.
fn spec_norm(h: &Operator) -> f64 {
    eigvalsh(h).iter().fold(0.0f64, |m, v| m.max(v.abs()))
}

/// How negative the spectrum gets (0 for PSD).
fn neg_part(h: &Operator) -> f64 {
    (-min_eig(h)).max(0.0)
}

/// Re-check the decoded solution against the tier's displayed constraints —
/// independently of the encoding, so every reduction path is audited on
/// every solve. Returns the largest violation found.
fn max_tier_violation(p: &CompatProblem, x: &[f64], t: f64) -> f64 {
    let lifted = &p.lifted;
    let dim = lifted.dim();
    let k = lifted.k();
    let n_a = lifted.n_outcomes() as f64;
    let resp = p.responses();
    let parents = p.out.decode.parents(x, &p.out.program);
    let noise = identity(dim) * C64::new((1.0 - t) / n_a, 0.0);

    let mut worst = 0.0f64;
    for x_set in 0..lifted.n_settings() {
        for a in 0..lifted.n_outcomes() {
            let target = lifted.effect(x_set, a) * C64::new(t, 0.0) + &noise;
            let mut sum = Operator::zeros(dim, dim);
            for l in resp.responding(x_set, a) {
                sum += &parents[l];
            }
            worst = worst.max(spec_norm(&(sum - target)));
        }
    }
    let total = parents.iter().fold(Operator::zeros(dim, dim), |acc, g| acc + g);
    worst = worst.max(spec_norm(&(total - identity(dim))));
    for g in &parents {
        worst = worst.max(neg_part(g));
    }

    if k < 2 {
        return worst;
    }
    let shape = lifted.shape();
    if p.tier >= ConstraintTier::KcompatPpt {
        for g in &parents {
            for f in 0..k {
                worst = worst.max(neg_part(&partial_transpose(g, shape, &[f]).unwrap()));
            }
        }
    }
    let (ConstraintTier::KcompatPptDps { level }, Some(exts)) =
        (p.tier, p.out.decode.extensions(x, &p.out.program))
    else {
        return worst;
    };
    let l = builder::ext_layout(lifted.base().d(), k, level as usize);
    for (lam, ext) in exts.iter().enumerate() {
        worst = worst.max(neg_part(ext));
        for f in 0..l.shape.n_factors() {
            worst = worst.max(neg_part(&partial_transpose(ext, &l.shape, &[f]).unwrap()));
        }
        let mut choices = vec![l.keep.clone()];
        for (set_idx, set) in l.sets.iter().enumerate() {
            for &alt in &set[1..] {
                let mut keep = l.keep.clone();
                keep[1 + set_idx] = alt;
                choices.push(keep);
            }
        }
        for keep in &choices {
            let marg = partial_trace(ext, &l.shape, keep).unwrap();
            worst = worst.max(spec_norm(&(marg - &parents[lam])));
        }
        for set in &l.sets {
            for w in set.windows(2) {
                let mut perm: Vec<usize> = (0..l.shape.n_factors()).collect();
                perm.swap(w[0], w[1]);
                let swap = symmetry::factor_permutation(&l.shape, &perm).unwrap();
                worst = worst.max(spec_norm(&(ext - &swap * ext * swap.adjoint())));
            }
        }
    }
    worst
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scenarios::{maximally_entangled, mub_assemblage, random_povm};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn quick_settings() -> SolverSettings {
        SolverSettings::default()
    }

    fn literal_opts() -> ProblemOptions {
        ProblemOptions {
            use_symmetry_reduction: false,
            use_covariance_quotient: false,
            dps_encoding: DpsEncoding::Uncompressed,
            ..ProblemOptions::default()
        }
    }

    #[test]
    fn tier_ordering_and_display_roundtrip() {
        let tiers = [
            ConstraintTier::Kcompat,
            ConstraintTier::KcompatPpt,
            ConstraintTier::KcompatPptDps { level: 2 },
            ConstraintTier::KcompatPptDps { level: 3 },
        ];
        for pair in tiers.windows(2) {
            assert!(pair[0] < pair[1]);
        }
        for tier in tiers {
            assert_eq!(tier.to_string().parse::<ConstraintTier>().unwrap(), tier);
        }
        assert_eq!(
            "dps".parse::<ConstraintTier>().unwrap(),
            ConstraintTier::KcompatPptDps { level: 2 }
        );
        assert_eq!("ppt".parse::<ConstraintTier>().unwrap(), ConstraintTier::KcompatPpt);
        assert!("dsp".parse::<ConstraintTier>().is_err());
    }

    /// Literal two-copy program for the three qubit bases: one block per
    /// response tuple (2³ = 8) of dimension 2² = 4, one marginal equality per
    /// effect plus normalization, one cone per block.
    #[test]
    fn literal_count_audit_qubit_three_bases() {
        let m = mub_assemblage(2, 3).unwrap();
        let p = build_problem_with(
            &m,
            2,
            ConstraintTier::Kcompat,
            SolveMode::Feasibility { t: 0.5 },
            &literal_opts(),
        )
        .unwrap();
        let s = p.stats();
        assert_eq!(s.encoding, "literal");
        assert_eq!(s.parent_blocks, 8);
        assert_eq!(s.parent_dim, 4);
        assert_eq!(s.lambda_classes, 8);
        assert_eq!(s.operator_equalities, 3 * 2 + 1);
        assert_eq!(s.cone_dims, vec![8; 8]);
    }

    /// The extension tier at level 2 doubles the second copy: 8 parent
    /// blocks of dimension 4 plus 8 extension blocks of dimension 8.
    #[test]
    fn literal_extension_count_audit() {
        let m = mub_assemblage(2, 3).unwrap();
        let p = build_problem_with(
            &m,
            2,
            ConstraintTier::KcompatPptDps { level: 2 },
            SolveMode::Feasibility { t: 0.5 },
            &literal_opts(),
        )
        .unwrap();
        let s = p.stats();
        assert_eq!(s.encoding, "literal+extensions");
        assert_eq!((s.parent_blocks, s.parent_dim), (8, 4));
        assert_eq!((s.extension_blocks, s.extension_dim), (8, 8));
    }

    #[test]
    fn caps_and_level_validation() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let wide = MeasurementAssemblage::new(
            (0..5).map(|_| random_povm(2, 4, &mut rng)).collect(),
        )
        .unwrap();
        match build_problem(&wide, 1, ConstraintTier::Kcompat, SolveMode::MaxVisibility) {
            Err(CertifyError::CapExceeded { value: 1024, cap: 256, .. }) => {}
            other => panic!("expected cap refusal, got {other:?}", other = other.err()),
        }
        let m = mub_assemblage(3, 3).unwrap();
        for level in [1, 4] {
            match build_problem(
                &m,
                2,
                ConstraintTier::KcompatPptDps { level },
                SolveMode::MaxVisibility,
            ) {
                Err(CertifyError::UnsupportedDpsLevel { .. }) => {}
                other => panic!("expected level refusal, got {other:?}", other = other.err()),
            }
        }
        assert!(matches!(
            build_problem(&m, 0, ConstraintTier::Kcompat, SolveMode::MaxVisibility),
            Err(CertifyError::InvalidCopyCount)
        ));
        assert!(matches!(
            build_problem(&m, 1, ConstraintTier::Kcompat, SolveMode::Feasibility { t: 1.2 }),
            Err(CertifyError::InvalidVisibility(_))
        ));
    }

    /// Single-copy thresholds for the unbiased qubit bases: 1/√2 for two,
    /// 1/√3 for three. The two-basis value is the classic joint-measurement
    /// bound for orthogonal spin directions; adding the third basis tightens
    /// it to the inscribed-sphere radius of the Bloch octahedron.
    #[test]
    fn single_copy_thresholds_for_qubit_bases() {
        for (n_bases, want) in [(2, 1.0 / 2f64.sqrt()), (3, 1.0 / 3f64.sqrt())] {
            let m = mub_assemblage(2, n_bases).unwrap();
            let rep = critical_visibility(
                &m,
                1,
                ConstraintTier::Kcompat,
                &quick_settings(),
                &ProblemOptions::default(),
            )
            .unwrap();
            let t_c = rep.t_c.expect("threshold solved");
            assert!((t_c - want).abs() < 1e-4, "n_bases={n_bases}: {t_c} vs {want}");
            assert_eq!(rep.verdict, Verdict::Inconclusive);
            assert_eq!(rep.encoding, "literal");
            assert!(rep.max_constraint_violation.unwrap() < 1e-6);
        }
    }

    #[test]
    fn bisection_cross_checks_the_threshold() {
        let m = mub_assemblage(2, 2).unwrap();
        let t_bis = critical_visibility_bisection(
            &m,
            1,
            ConstraintTier::Kcompat,
            &quick_settings(),
            &ProblemOptions::default(),
            1e-4,
        )
        .unwrap();
        assert!((t_bis - 1.0 / 2f64.sqrt()).abs() < 2e-4, "bisection gave {t_bis}");
    }

    /// Verdict mapping on both sides of the two-copy qubit threshold √3/2.
    #[test]
    fn feasibility_verdicts_bracket_the_two_copy_threshold() {
        let m = mub_assemblage(2, 3).unwrap();
        for (t, expect_certified) in [(0.90, true), (0.80, false)] {
            let p = build_problem(&m, 2, ConstraintTier::Kcompat, SolveMode::Feasibility { t })
                .unwrap();
            let rep = solve(&p, &quick_settings()).unwrap();
            if expect_certified {
                assert_eq!(rep.verdict, Verdict::CertifiedAtLeast(3), "t={t}");
                assert!(rep.certificate.is_some());
            } else {
                assert_eq!(rep.verdict, Verdict::Inconclusive, "t={t}");
                assert!(rep.max_constraint_violation.unwrap() < 1e-6, "t={t}");
            }
        }
    }

    /// t = 0 is feasible at every tier: the trivial joint observable
    /// splitting the identity satisfies all constraints.
    #[test]
    fn zero_visibility_feasible_at_every_tier() {
        let m = mub_assemblage(2, 3).unwrap();
        for tier in [
            ConstraintTier::Kcompat,
            ConstraintTier::KcompatPpt,
            ConstraintTier::KcompatPptDps { level: 2 },
        ] {
            let p = build_problem(&m, 2, tier, SolveMode::Feasibility { t: 0.0 }).unwrap();
            let rep = solve(&p, &quick_settings()).unwrap();
            assert_eq!(rep.solver_status, SolveStatus::Optimal, "tier {tier}");
            assert!(rep.max_constraint_violation.unwrap() < 1e-6, "tier {tier}");
        }
    }

    /// Steering pipeline: a maximally entangled qubit pair with the three
    /// noisy bases at t = 0.80 sits below the transpose-cut threshold
    /// √(2/3) ≈ 0.8165, so the test stays feasible.
    #[test]
    fn state_pipeline_below_threshold_is_inconclusive() {
        use crate::scenarios::{depolarize, NoiseModel};
        let m = depolarize(&mub_assemblage(2, 3).unwrap(), NoiseModel::new(0.80).unwrap());
        let state = maximally_entangled(2);
        let rep = certify_from_state(
            &state,
            &m,
            2,
            ConstraintTier::KcompatPpt,
            &quick_settings(),
            &ProblemOptions::default(),
        )
        .unwrap();
        assert_eq!(rep.verdict, Verdict::Inconclusive);
        assert_eq!(rep.seo_rank, Some(2));
    }
}
