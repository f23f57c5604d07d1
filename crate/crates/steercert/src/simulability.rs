//! Explicit simulation models and their product-form joint observables, plus
//! a constructive sufficient condition for simulability with two copies.
//!
//! A family {M_{a|x}} is *k-simulable* when it can be reproduced by k fixed
//! POVMs {B_{b|y}} and classical randomness: pick simulator y with probability
//! p(y|x), measure it, and post-process its outcome through q(a|x,b,y). Such a
//! family always passes the k-copy compatibility tests: the product operators
//! B_{b₁|1} ⊗ … ⊗ B_{b_k|k} form a separable k-copy joint observable
//! ([`product_joint_observable`]), and [`ProductJointObservable::response_family`]
//! converts it into an explicit feasible point of the certification programs.
//!
//! The converse direction is covered for two copies by a sufficient condition:
//! when every block of a 2-copy joint observable lies in the span
//! {A⊗1 + 1⊗B} ([`span_split`]), the blocks can be rearranged into
//! G_λ = q·C_λ⊗1 + (1−q)·1⊗D_λ with {C_λ}, {D_λ} POVMs
//! ([`two_sim_decompose`]), which is a verbatim 2-simulation of the measured
//! family. A block outside the span, or a shift that fails to be PSD, aborts
//! the construction with an error — the condition is sufficient only, and the
//! module never converts a near-miss into a certificate.

use rand::Rng;
use thiserror::Error;

use crate::certify::lift::Responses;
use crate::certify::symmetry::permutations;
use crate::qops::{
    hermitize, hs_norm, identity, kron_all, min_eig, partial_trace, trace, FactorShape, Operator,
    C64,
};
use crate::scenarios::{random_povm, random_stochastic, MeasurementAssemblage, ScenarioError};
use crate::tol::{SPAN_TOL, TOL_PSD};

/// Tables are accepted as normalized when rows sum to one within this slack.
const TABLE_TOL: f64 = 1e-9;

/// Errors from model validation and the two-copy decomposition.
#[derive(Debug, Error)]
pub enum SimulabilityError {
    /// Simulation-model tables are malformed (shape, sign, or normalization).
    #[error("invalid simulation model: {0}")]
    BadModel(String),
    /// An operator block has the wrong dimension for the declared factors.
    #[error("block {lambda} is {got}×{got}, expected {want}×{want}")]
    DimensionMismatch { lambda: usize, got: usize, want: usize },
    /// A joint-observable block leaves the span {A⊗1 + 1⊗B}; the sufficient
    /// condition does not apply to this family.
    #[error("block {lambda} is outside the one-sided span (residual {residual:.3e})")]
    NotInSpan { lambda: usize, residual: f64 },
    /// The canonical shift failed to make both parts PSD, which contradicts
    /// positivity of the input block within tolerance.
    #[error("shifted part of block {lambda} has eigenvalue {min_eig:.3e} < 0")]
    ShiftNotPsd { lambda: usize, min_eig: f64 },
    /// The assembled POVMs failed validation (propagates the reason).
    #[error(transparent)]
    Assemblage(#[from] ScenarioError),
}

/// Explicit k-simulation of a measurement family:
/// M_{a|x} = Σ_y p(y|x) Σ_b q(a|x,b,y) B_{b|y}.
///
/// `p` is row-stochastic over simulators, `q` post-processes simulator
/// outcomes into reported outcomes, and the simulators are one POVM per copy.
#[derive(Debug, Clone)]
pub struct SimulationModel {
    /// p\[x\]\[y\]: probability of consulting simulator y on setting x.
    p: Vec<Vec<f64>>,
    /// q\[x\]\[y\]\[b\]\[a\]: probability of reporting a given simulator y
    /// produced b on setting x.
    q: Vec<Vec<Vec<Vec<f64>>>>,
    /// B_{b|y}: setting y of this assemblage is the y-th simulator.
    simulators: MeasurementAssemblage,
}

impl SimulationModel {
    /// Validate table shapes, nonnegativity, and row normalization.
    pub fn new(
        p: Vec<Vec<f64>>,
        q: Vec<Vec<Vec<Vec<f64>>>>,
        simulators: MeasurementAssemblage,
    ) -> Result<Self, SimulabilityError> {
        let k = simulators.n_settings();
        let n_b = simulators.n_outcomes();
        if p.is_empty() {
            return Err(SimulabilityError::BadModel("no measurement settings".into()));
        }
        if q.len() != p.len() {
            return Err(SimulabilityError::BadModel(format!(
                "p covers {} settings but q covers {}",
                p.len(),
                q.len()
            )));
        }
        let n_a = q
            .first()
            .and_then(|per_y| per_y.first())
            .and_then(|per_b| per_b.first())
            .map(|row| row.len())
            .unwrap_or(0);
        if n_a == 0 {
            return Err(SimulabilityError::BadModel("empty post-processing table".into()));
        }
        for (x, row) in p.iter().enumerate() {
            if row.len() != k {
                return Err(SimulabilityError::BadModel(format!(
                    "p row {x} has {} entries, expected one per simulator ({k})",
                    row.len()
                )));
            }
            check_distribution(row, &format!("p(·|{x})"))?;
            if q[x].len() != k {
                return Err(SimulabilityError::BadModel(format!(
                    "q at setting {x} covers {} simulators, expected {k}",
                    q[x].len()
                )));
            }
            for y in 0..k {
                if q[x][y].len() != n_b {
                    return Err(SimulabilityError::BadModel(format!(
                        "q at ({x},{y}) covers {} simulator outcomes, expected {n_b}",
                        q[x][y].len()
                    )));
                }
                for (b, dist) in q[x][y].iter().enumerate() {
                    if dist.len() != n_a {
                        return Err(SimulabilityError::BadModel(format!(
                            "q(·|{x},{b},{y}) has {} entries, expected {n_a}",
                            dist.len()
                        )));
                    }
                    check_distribution(dist, &format!("q(·|{x},{b},{y})"))?;
                }
            }
        }
        Ok(Self { p, q, simulators })
    }

    /// Number of simulators (copies).
    pub fn k(&self) -> usize {
        self.simulators.n_settings()
    }

    /// Number of simulated measurement settings.
    pub fn n_settings(&self) -> usize {
        self.p.len()
    }

    /// Number of simulated outcomes per setting.
    pub fn n_outcomes(&self) -> usize {
        self.q[0][0][0].len()
    }

    pub fn simulators(&self) -> &MeasurementAssemblage {
        &self.simulators
    }

    /// p(y|x).
    pub fn setting_weight(&self, x: usize, y: usize) -> f64 {
        self.p[x][y]
    }

    /// q(a|x,b,y).
    pub fn post_processing(&self, x: usize, y: usize, b: usize, a: usize) -> f64 {
        self.q[x][y][b][a]
    }

    /// The simulated family M_{a|x}, assembled from the tables and validated
    /// as a POVM family (positivity and completeness are automatic for exact
    /// tables; validation guards against rounding drift).
    pub fn reconstruct(&self) -> Result<MeasurementAssemblage, SimulabilityError> {
        let d = self.simulators.d();
        let n_a = self.n_outcomes();
        let effects = (0..self.n_settings())
            .map(|x| {
                (0..n_a)
                    .map(|a| {
                        let mut m = Operator::zeros(d, d);
                        for y in 0..self.k() {
                            for b in 0..self.simulators.n_outcomes() {
                                let w = self.p[x][y] * self.q[x][y][b][a];
                                if w != 0.0 {
                                    m += self.simulators.effect(y, b) * C64::new(w, 0.0);
                                }
                            }
                        }
                        m
                    })
                    .collect()
            })
            .collect();
        Ok(MeasurementAssemblage::new(effects)?)
    }
}

fn check_distribution(row: &[f64], what: &str) -> Result<(), SimulabilityError> {
    if row.iter().any(|&v| !(v >= 0.0) || !v.is_finite()) {
        return Err(SimulabilityError::BadModel(format!("{what} has a negative or non-finite entry")));
    }
    let s: f64 = row.iter().sum();
    if (s - 1.0).abs() > TABLE_TOL {
        return Err(SimulabilityError::BadModel(format!("{what} sums to {s}, expected 1")));
    }
    Ok(())
}

/// Random k-simulation model: stochastic tables plus k random `n_b`-outcome
/// POVMs on dimension `d`, simulating `n_m` settings with `n_a` outcomes.
pub fn random_simulation_model(
    k: usize,
    d: usize,
    n_m: usize,
    n_a: usize,
    n_b: usize,
    rng: &mut impl Rng,
) -> SimulationModel {
    assert!(k >= 1 && n_m >= 1 && n_a >= 1 && n_b >= 1);
    let p = random_stochastic(n_m, k, rng);
    let q = (0..n_m)
        .map(|_| (0..k).map(|_| random_stochastic(n_b, n_a, rng)).collect())
        .collect();
    let simulators =
        MeasurementAssemblage::new((0..k).map(|_| random_povm(d, n_b, rng)).collect())
            .expect("random POVMs satisfy the assemblage invariants");
    SimulationModel::new(p, q, simulators).expect("constructed tables are stochastic")
}

/// Product-form k-copy joint observable of a simulation model: effects
/// Ñ_b̄ = B_{b₁|1} ⊗ … ⊗ B_{b_k|k} over outcome tuples b̄, with the response
/// table p(a|x,b̄) = Σ_y p(y|x)·q(a|x,b_y,y). Measuring every copy and
/// answering through the response table reproduces the simulated family's
/// statistics on k copies of any state.
#[derive(Debug, Clone)]
pub struct ProductJointObservable {
    k: usize,
    d: usize,
    n_b: usize,
    simulators: MeasurementAssemblage,
    effects: Vec<Operator>,
    /// response\[x\]\[tuple\]\[a\].
    response: Vec<Vec<Vec<f64>>>,
}

/// Build the product joint observable of a validated model.
pub fn product_joint_observable(model: &SimulationModel) -> ProductJointObservable {
    let k = model.k();
    let d = model.simulators().d();
    let n_b = model.simulators().n_outcomes();
    let n_tuples = n_b.pow(k as u32);
    let digit = |tuple: usize, y: usize| tuple / n_b.pow((k - 1 - y) as u32) % n_b;

    let effects = (0..n_tuples)
        .map(|tuple| {
            let factors: Vec<Operator> =
                (0..k).map(|y| model.simulators().effect(y, digit(tuple, y)).clone()).collect();
            kron_all(&factors)
        })
        .collect();
    let response = (0..model.n_settings())
        .map(|x| {
            (0..n_tuples)
                .map(|tuple| {
                    (0..model.n_outcomes())
                        .map(|a| {
                            (0..k)
                                .map(|y| {
                                    model.setting_weight(x, y)
                                        * model.post_processing(x, y, digit(tuple, y), a)
                                })
                                .sum()
                        })
                        .collect()
                })
                .collect()
        })
        .collect();
    ProductJointObservable {
        k,
        d,
        n_b,
        simulators: model.simulators().clone(),
        effects,
        response,
    }
}

impl ProductJointObservable {
    pub fn k(&self) -> usize {
        self.k
    }

    /// Dimension of the k-copy space.
    pub fn dim(&self) -> usize {
        self.d.pow(self.k as u32)
    }

    pub fn n_tuples(&self) -> usize {
        self.effects.len()
    }

    /// Ñ_b̄ for the flat tuple index (copy 1 is the most significant digit).
    pub fn effects(&self) -> &[Operator] {
        &self.effects
    }

    /// p(a|x,b̄).
    pub fn response(&self, x: usize, tuple: usize) -> &[f64] {
        &self.response[x][tuple]
    }

    /// Outcome of copy `y` under flat tuple index `tuple`.
    pub fn digit(&self, tuple: usize, y: usize) -> usize {
        tuple / self.n_b.pow((self.k - 1 - y) as u32) % self.n_b
    }

    /// Probability of outcome a on setting x when every copy of `rho` is
    /// measured and the response table answers.
    pub fn probability(&self, rho: &Operator, x: usize, a: usize) -> f64 {
        (0..self.n_tuples())
            .map(|tuple| {
                let w = self.response[x][tuple][a];
                if w == 0.0 {
                    return 0.0;
                }
                let joint: f64 = (0..self.k)
                    .map(|y| {
                        trace(&(self.simulators.effect(y, self.digit(tuple, y)) * rho)).re
                    })
                    .product();
                w * joint
            })
            .sum()
    }

    /// Deterministic-response joint observable built from the products: the
    /// copy-permutation–symmetrized family
    /// G_λ = avg_π P_π (Σ_b̄ Π_x p(λ_x|x,b̄) Ñ_b̄) P_π†.
    /// It is a feasible point of the k-compatibility program for the
    /// reconstructed family at full visibility: marginals hit the symmetrized
    /// lift exactly, blocks are manifestly separable, and every partial
    /// transpose is PSD.
    pub fn response_family(&self, resp: &Responses) -> Vec<Operator> {
        let perms = permutations(self.k);
        let dim = self.dim();
        (0..resp.count())
            .map(|lam| {
                let mut g = Operator::zeros(dim, dim);
                for tuple in 0..self.n_tuples() {
                    let w = self.tuple_weight(resp, lam, tuple) / perms.len() as f64;
                    if w == 0.0 {
                        continue;
                    }
                    for perm in &perms {
                        let factors: Vec<Operator> = perm
                            .iter()
                            .map(|&y| self.simulators.effect(y, self.digit(tuple, y)).clone())
                            .collect();
                        g += kron_all(&factors) * C64::new(w, 0.0);
                    }
                }
                hermitize(&g)
            })
            .collect()
    }

    /// Π_x p(λ_x|x,b̄): probability that the response table answers the full
    /// deterministic tuple λ on tuple b̄.
    fn tuple_weight(&self, resp: &Responses, lam: usize, tuple: usize) -> f64 {
        (0..resp.n_settings)
            .map(|x| self.response[x][tuple][resp.digit(lam, x)])
            .product()
    }

    /// Symmetric extension of [`Self::response_family`]: every copy except the
    /// first is duplicated `level − 1` times, each product term A⊗X⊗Y⊗… being
    /// extended to A ⊗ (X ⊗ (X/tr X)^(level−1)) ⊗ … . The result satisfies the
    /// extension-tier constraints by construction: duplicate partial traces
    /// recover the parent, duplicate swaps leave it invariant, and all
    /// single-factor partial transposes stay PSD.
    pub fn extension_family(&self, resp: &Responses, level: usize) -> Vec<Operator> {
        assert!(level >= 2, "an extension duplicates at least once");
        assert!(self.k >= 2, "extensions only arise for k ≥ 2");
        let perms = permutations(self.k);
        let ext_dim = self.d * self.d.pow((level * (self.k - 1)) as u32);
        (0..resp.count())
            .map(|lam| {
                let mut g = Operator::zeros(ext_dim, ext_dim);
                for tuple in 0..self.n_tuples() {
                    let w = self.tuple_weight(resp, lam, tuple) / perms.len() as f64;
                    if w == 0.0 {
                        continue;
                    }
                    for perm in &perms {
                        let base: Vec<&Operator> = perm
                            .iter()
                            .map(|&y| self.simulators.effect(y, self.digit(tuple, y)))
                            .collect();
                        if let Some(term) = extend_product(&base, level) {
                            g += term * C64::new(w, 0.0);
                        }
                    }
                }
                hermitize(&g)
            })
            .collect()
    }
}

/// A ⊗ X ⊗ (X/tr X)^(level−1) ⊗ Y ⊗ (Y/tr Y)^(level−1) ⊗ …; `None` when a
/// duplicated factor is (numerically) zero, in which case the term vanishes.
fn extend_product(base: &[&Operator], level: usize) -> Option<Operator> {
    let mut factors: Vec<Operator> = vec![base[0].clone()];
    for x in &base[1..] {
        let s = trace(x).re;
        if s <= 1e-14 {
            return None;
        }
        factors.push((*x).clone());
        for _ in 1..level {
            factors.push(*x * C64::new(1.0 / s, 0.0));
        }
    }
    Some(kron_all(&factors))
}

/// Orthogonal split of a Hermitian block against {A⊗1 + 1⊗B}: the two parts,
/// the residual norm, and the membership flag.
#[derive(Debug, Clone)]
pub struct SpanSplit {
    /// Residual is within [`SPAN_TOL`].
    pub member: bool,
    /// Hilbert–Schmidt norm of the component orthogonal to the span.
    pub residual: f64,
    /// Ã: the first-factor part, gauge-fixed to tr[Ã] = tr[B̃]·d_A/d_B.
    pub a_part: Operator,
    /// B̃: the second-factor part.
    pub b_part: Operator,
}

/// Hilbert–Schmidt projection of `g` onto {A⊗1_B + 1_A⊗B : A, B Hermitian}.
///
/// The projection solves tr_B[g − P] = tr_A[g − P] = 0; the one-parameter
/// identity-shift gauge is fixed by tr[Ã] = tr[B̃]·d_A/d_B. Membership means
/// the residual is at most [`SPAN_TOL`] (solver-grade inputs).
pub fn span_split(g: &Operator, d_a: usize, d_b: usize) -> Result<SpanSplit, SimulabilityError> {
    let dim = d_a * d_b;
    if g.nrows() != dim || g.ncols() != dim {
        return Err(SimulabilityError::DimensionMismatch { lambda: 0, got: g.nrows(), want: dim });
    }
    let g = hermitize(g);
    let shape = FactorShape::new([d_a, d_b]);
    let alpha = trace(&g).re;
    let tr_b = partial_trace(&g, &shape, &[0]).expect("factor 0 exists");
    let tr_a = partial_trace(&g, &shape, &[1]).expect("factor 1 exists");
    let a_part = (tr_b - identity(d_a) * C64::new(alpha / (2.0 * d_a as f64), 0.0))
        * C64::new(1.0 / d_b as f64, 0.0);
    let b_part = (tr_a - identity(d_b) * C64::new(alpha / (2.0 * d_b as f64), 0.0))
        * C64::new(1.0 / d_a as f64, 0.0);
    let projected = kron_all(&[a_part.clone(), identity(d_b)])
        + kron_all(&[identity(d_a), b_part.clone()]);
    let residual = hs_norm(&(&g - projected));
    Ok(SpanSplit { member: residual <= SPAN_TOL, residual, a_part, b_part })
}

/// [`span_split`] applied to a family, with the block index wired into errors.
pub fn span_test(
    family: &[Operator],
    d_a: usize,
    d_b: usize,
) -> Result<Vec<SpanSplit>, SimulabilityError> {
    family
        .iter()
        .enumerate()
        .map(|(lambda, g)| {
            span_split(g, d_a, d_b).map_err(|e| match e {
                SimulabilityError::DimensionMismatch { got, want, .. } => {
                    SimulabilityError::DimensionMismatch { lambda, got, want }
                }
                other => other,
            })
        })
        .collect()
}

/// Weight-q mixture split of a 2-copy joint observable:
/// G_λ = q·C_λ⊗1 + (1−q)·1⊗D_λ with {C_λ}, {D_λ} POVMs — an explicit witness
/// that the family answering through G is 2-simulable.
#[derive(Debug, Clone)]
pub struct TwoSimDecomposition {
    q: f64,
    c_part: MeasurementAssemblage,
    d_part: MeasurementAssemblage,
    a_tilde: Vec<Operator>,
    b_tilde: Vec<Operator>,
    nu_min: Vec<f64>,
}

impl TwoSimDecomposition {
    /// Mixture weight of the first-factor part.
    pub fn q(&self) -> f64 {
        self.q
    }

    /// {C_λ} as a single-setting POVM.
    pub fn c_part(&self) -> &MeasurementAssemblage {
        &self.c_part
    }

    /// {D_λ} as a single-setting POVM.
    pub fn d_part(&self) -> &MeasurementAssemblage {
        &self.d_part
    }

    /// The span part Ã_λ before the canonical shift.
    pub fn a_tilde(&self, lambda: usize) -> &Operator {
        &self.a_tilde[lambda]
    }

    /// The span part B̃_λ before the canonical shift.
    pub fn b_tilde(&self, lambda: usize) -> &Operator {
        &self.b_tilde[lambda]
    }

    /// The shift ν_λ^min moved from the first part to the second.
    pub fn nu_min(&self, lambda: usize) -> f64 {
        self.nu_min[lambda]
    }

    pub fn n_blocks(&self) -> usize {
        self.a_tilde.len()
    }

    /// q·C_λ⊗1 + (1−q)·1⊗D_λ.
    pub fn reconstruction(&self, lambda: usize) -> Operator {
        let d_a = self.c_part.d();
        let d_b = self.d_part.d();
        kron_all(&[self.c_part.effect(0, lambda).clone(), identity(d_b)])
            * C64::new(self.q, 0.0)
            + kron_all(&[identity(d_a), self.d_part.effect(0, lambda).clone()])
                * C64::new(1.0 - self.q, 0.0)
    }

    /// Package the split as a two-copy simulation model for the family that
    /// answers through `resp`: simulator 1 measures {C_λ} with weight q,
    /// simulator 2 measures {D_λ} with weight 1−q, and both post-process
    /// deterministically through the response tuples.
    pub fn to_model(&self, resp: &Responses) -> Result<SimulationModel, SimulabilityError> {
        if self.c_part.d() != self.d_part.d() {
            return Err(SimulabilityError::BadModel(
                "simulators must act on a common dimension".into(),
            ));
        }
        let n = self.n_blocks();
        if resp.count() != n {
            return Err(SimulabilityError::BadModel(format!(
                "response tuples count {} but the decomposition has {n} blocks",
                resp.count()
            )));
        }
        let n_m = resp.n_settings;
        let n_a = resp.n_outcomes;
        let p = vec![vec![self.q, 1.0 - self.q]; n_m];
        let q_table = (0..n_m)
            .map(|x| {
                (0..2)
                    .map(|_| {
                        (0..n)
                            .map(|lam| {
                                (0..n_a)
                                    .map(|a| if resp.responds(lam, x, a) { 1.0 } else { 0.0 })
                                    .collect()
                            })
                            .collect()
                    })
                    .collect()
            })
            .collect();
        let simulators = MeasurementAssemblage::new(vec![
            self.c_part.effects()[0].clone(),
            self.d_part.effects()[0].clone(),
        ])?;
        SimulationModel::new(p, q_table, simulators)
    }
}

/// Constructive sufficient condition for 2-simulability.
///
/// Every block must lie in the span {A⊗1 + 1⊗B}; the split parts are then
/// shifted by ν_λ^min (the smallest eigenvalue of Ã_λ) so both become PSD —
/// positivity of G_λ guarantees the shifted second part is PSD, and a failure
/// beyond tolerance aborts instead of certifying. Normalization aggregates
/// into q = 1 − Σ_λ tr[B_λ]/d_B, and rescaling yields the POVMs {C_λ}, {D_λ}.
pub fn two_sim_decompose(
    family: &[Operator],
    d_a: usize,
    d_b: usize,
) -> Result<TwoSimDecomposition, SimulabilityError> {
    let splits = span_test(family, d_a, d_b)?;
    for (lambda, s) in splits.iter().enumerate() {
        if !s.member {
            return Err(SimulabilityError::NotInSpan { lambda, residual: s.residual });
        }
    }

    let mut a_shifted = Vec::with_capacity(splits.len());
    let mut b_shifted = Vec::with_capacity(splits.len());
    let mut nu_mins = Vec::with_capacity(splits.len());
    for (lambda, s) in splits.iter().enumerate() {
        let nu = min_eig(&s.a_part);
        let a = &s.a_part - identity(d_a) * C64::new(nu, 0.0);
        let b = &s.b_part + identity(d_b) * C64::new(nu, 0.0);
        let worst = min_eig(&b);
        if worst < -TOL_PSD {
            return Err(SimulabilityError::ShiftNotPsd { lambda, min_eig: worst });
        }
        a_shifted.push(a);
        b_shifted.push(b);
        nu_mins.push(nu);
    }

    let tr_b: f64 = b_shifted.iter().map(|b| trace(b).re).sum();
    let tr_a: f64 = a_shifted.iter().map(|a| trace(a).re).sum();
    let q = 1.0 - tr_b / d_b as f64;
    let q_prime = 1.0 - tr_a / d_a as f64;
    if (q + q_prime - 1.0).abs() > 1e-6 {
        return Err(SimulabilityError::BadModel(format!(
            "blocks do not sum to the identity: complementary weights {q} and {q_prime}"
        )));
    }

    let n = family.len();
    let uniform = |d: usize| vec![identity(d) * C64::new(1.0 / n as f64, 0.0); n];
    let c_effects = if q > TABLE_TOL {
        a_shifted.iter().map(|a| a * C64::new(1.0 / q, 0.0)).collect()
    } else {
        uniform(d_a)
    };
    let d_effects = if 1.0 - q > TABLE_TOL {
        b_shifted.iter().map(|b| b * C64::new(1.0 / (1.0 - q), 0.0)).collect()
    } else {
        uniform(d_b)
    };

    Ok(TwoSimDecomposition {
        q: q.clamp(0.0, 1.0),
        c_part: MeasurementAssemblage::new(vec![c_effects])?,
        d_part: MeasurementAssemblage::new(vec![d_effects])?,
        a_tilde: splits.iter().map(|s| s.a_part.clone()).collect(),
        b_tilde: splits.iter().map(|s| s.b_part.clone()).collect(),
        nu_min: nu_mins,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    use crate::certify::lift::lift;
    use crate::certify::symmetry::factor_permutation;
    use crate::qops::{eigvalsh, hs_norm, is_psd, kron, partial_transpose};
    use crate::scenarios::random_state;

    fn sigma(which: char) -> Operator {
        let (a, b, c, d) = match which {
            'x' => (C64::new(0., 0.), C64::new(1., 0.), C64::new(1., 0.), C64::new(0., 0.)),
            'y' => (C64::new(0., 0.), C64::new(0., -1.), C64::new(0., 1.), C64::new(0., 0.)),
            'z' => (C64::new(1., 0.), C64::new(0., 0.), C64::new(0., 0.), C64::new(-1., 0.)),
            _ => unreachable!(),
        };
        Operator::from_row_slice(2, 2, &[a, b, c, d])
    }

    #[test]
    fn model_validation_rejects_malformed_tables() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = random_simulation_model(2, 2, 3, 2, 4, &mut rng);
        // Break p's normalization.
        let mut p = model.p.clone();
        p[0][0] += 0.2;
        assert!(matches!(
            SimulationModel::new(p, model.q.clone(), model.simulators.clone()),
            Err(SimulabilityError::BadModel(_))
        ));
        // Negative post-processing entry.
        let mut q = model.q.clone();
        q[1][0][2][0] = -0.1;
        q[1][0][2][1] = 1.1;
        assert!(matches!(
            SimulationModel::new(model.p.clone(), q, model.simulators.clone()),
            Err(SimulabilityError::BadModel(_))
        ));
        // Simulator count mismatch: k=2 tables against 1 simulator.
        let one = MeasurementAssemblage::new(vec![model.simulators.effects()[0].clone()]).unwrap();
        assert!(matches!(
            SimulationModel::new(model.p.clone(), model.q.clone(), one),
            Err(SimulabilityError::BadModel(_))
        ));
    }

    #[test]
    fn reconstruction_is_a_valid_assemblage() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        for (k, d, n_m, n_a, n_b) in [(1, 2, 2, 2, 3), (2, 2, 3, 2, 4), (3, 3, 2, 3, 2)] {
            let model = random_simulation_model(k, d, n_m, n_a, n_b, &mut rng);
            let m = model.reconstruct().unwrap();
            assert_eq!(m.d(), d);
            assert_eq!(m.n_settings(), n_m);
            assert_eq!(m.n_outcomes(), n_a);
        }
    }

    #[test]
    fn product_observable_with_one_copy_returns_the_simulators() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let model = random_simulation_model(1, 3, 2, 2, 4, &mut rng);
        let prod = product_joint_observable(&model);
        assert_eq!(prod.n_tuples(), 4);
        for b in 0..4 {
            assert!(hs_norm(&(&prod.effects()[b] - model.simulators().effect(0, b))) < 1e-14);
            for x in 0..2 {
                for a in 0..2 {
                    let expect = model.setting_weight(x, 0) * model.post_processing(x, 0, b, a);
                    assert!((prod.response(x, b)[a] - expect).abs() < 1e-14);
                }
            }
        }
    }

    #[test]
    fn product_observable_of_trivial_simulators_is_uniform() {
        let n_b = 3;
        let trivial: Vec<Operator> =
            (0..n_b).map(|_| identity(2) * C64::new(1.0 / n_b as f64, 0.0)).collect();
        let simulators =
            MeasurementAssemblage::new(vec![trivial.clone(), trivial.clone()]).unwrap();
        let p = vec![vec![0.5, 0.5]];
        let q = vec![vec![random_stochastic(n_b, 2, &mut ChaCha8Rng::seed_from_u64(4)); 2]];
        let model = SimulationModel::new(p, q, simulators).unwrap();
        let prod = product_joint_observable(&model);
        let expect = identity(4) * C64::new(1.0 / (n_b * n_b) as f64, 0.0);
        for eff in prod.effects() {
            assert!(hs_norm(&(eff - &expect)) < 1e-14);
        }
    }

    #[test]
    fn product_statistics_reproduce_the_reconstruction() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let model = random_simulation_model(2, 2, 3, 2, 4, &mut rng);
        let m = model.reconstruct().unwrap();
        let prod = product_joint_observable(&model);
        for _ in 0..50 {
            let rho = random_state(2, &mut rng);
            for x in 0..3 {
                for a in 0..2 {
                    let direct = trace(&(m.effect(x, a) * &rho)).re;
                    let via_products = prod.probability(&rho, x, a);
                    assert!((direct - via_products).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn response_family_is_feasible_for_the_lifted_targets() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for (k, d) in [(2, 2), (3, 2), (2, 3)] {
            let model = random_simulation_model(k, d, 2, 2, 3, &mut rng);
            let m = model.reconstruct().unwrap();
            let resp = Responses { n_outcomes: 2, n_settings: 2 };
            let family = prod_family(&model, &resp);
            let dim = d.pow(k as u32);

            let mut total = Operator::zeros(dim, dim);
            for g in &family {
                assert!(min_eig(g) > -1e-10, "blocks stay PSD");
                total += g;
            }
            assert!(hs_norm(&(total - identity(dim))) < 1e-9, "family is normalized");

            let lifted = lift(&m, k);
            for x in 0..2 {
                for a in 0..2 {
                    let mut sum = Operator::zeros(dim, dim);
                    for lam in resp.responding(x, a) {
                        sum += &family[lam];
                    }
                    assert!(
                        hs_norm(&(sum - lifted.effect(x, a))) < 1e-9,
                        "marginals hit the symmetrized lift (k={k}, d={d})"
                    );
                }
            }
        }
    }

    fn prod_family(model: &SimulationModel, resp: &Responses) -> Vec<Operator> {
        product_joint_observable(model).response_family(resp)
    }

    #[test]
    fn extension_family_extends_the_response_family() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let model = random_simulation_model(2, 2, 2, 2, 3, &mut rng);
        let resp = Responses { n_outcomes: 2, n_settings: 2 };
        let prod = product_joint_observable(&model);
        let parents = prod.response_family(&resp);
        let exts = prod.extension_family(&resp, 2);
        let shape = FactorShape::uniform(2, 3);

        for (g, parent) in exts.iter().zip(&parents) {
            assert!(min_eig(g) > -1e-10);
            // Either duplicate's trace recovers the parent.
            let m2 = partial_trace(g, &shape, &[0, 1]).unwrap();
            let m1 = partial_trace(g, &shape, &[0, 2]).unwrap();
            assert!(hs_norm(&(m2 - parent)) < 1e-9);
            assert!(hs_norm(&(m1 - parent)) < 1e-9);
            // Swapping the duplicates leaves the extension invariant.
            let swap = factor_permutation(&shape, &[0, 2, 1]).unwrap();
            assert!(hs_norm(&(&swap * g * swap.adjoint() - g)) < 1e-10);
            // All single-factor partial transposes stay PSD (separability).
            for cut in 0..3 {
                let pt = partial_transpose(g, &shape, &[cut]).unwrap();
                assert!(min_eig(&pt) > -1e-10);
            }
        }
    }

    #[test]
    fn span_split_examples() {
        // The identity splits evenly.
        let s = span_split(&identity(4), 2, 2).unwrap();
        assert!(s.member);
        assert!(s.residual < 1e-14);
        // A two-sided product operator is orthogonal to the span.
        let zz = kron(&sigma('z'), &sigma('z'));
        let s = span_split(&zz, 2, 2).unwrap();
        assert!(!s.member);
        assert!((s.residual - hs_norm(&zz)).abs() < 1e-12);
        assert!((s.residual - 2.0).abs() < 1e-12);
        // A span member by construction reconstructs exactly, and the split
        // respects the trace gauge.
        let g = kron(&sigma('x'), &identity(2))
            + kron(&identity(2), &sigma('y'))
            + identity(4) * C64::new(2.0, 0.0);
        let s = span_split(&g, 2, 2).unwrap();
        assert!(s.member);
        assert!(s.residual < 1e-13);
        let rebuilt = kron(&s.a_part, &identity(2)) + kron(&identity(2), &s.b_part);
        assert!(hs_norm(&(rebuilt - &g)) < 1e-13);
        assert!((trace(&s.a_part).re - trace(&s.b_part).re).abs() < 1e-13, "d_A = d_B gauge");
        // Projection is idempotent: re-splitting the projection leaves no
        // residual.
        let p = kron(&s.a_part, &identity(2)) + kron(&identity(2), &s.b_part);
        assert!(span_split(&p, 2, 2).unwrap().residual < 1e-12);
    }

    #[test]
    fn decompose_recovers_a_planted_mixture() {
        // Singular planted effects make the canonical shift vanish, so the
        // recovery is exact including the weight.
        let zs = [
            (identity(2) + sigma('z')) * C64::new(0.5, 0.0),
            (identity(2) - sigma('z')) * C64::new(0.5, 0.0),
        ];
        let xs = [
            (identity(2) + sigma('x')) * C64::new(0.5, 0.0),
            (identity(2) - sigma('x')) * C64::new(0.5, 0.0),
        ];
        let family: Vec<Operator> = (0..2)
            .map(|lam| {
                kron(&zs[lam], &identity(2)) * C64::new(0.5, 0.0)
                    + kron(&identity(2), &xs[lam]) * C64::new(0.5, 0.0)
            })
            .collect();
        let dec = two_sim_decompose(&family, 2, 2).unwrap();
        assert!((dec.q() - 0.5).abs() < 1e-12);
        for lam in 0..2 {
            assert!(hs_norm(&(dec.c_part().effect(0, lam) - &zs[lam])) < 1e-12);
            assert!(hs_norm(&(dec.d_part().effect(0, lam) - &xs[lam])) < 1e-12);
            assert!(hs_norm(&(dec.reconstruction(lam) - &family[lam])) < 1e-12);
        }
    }

    #[test]
    fn decompose_random_mixture_reconstructs() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let c = random_povm(2, 4, &mut rng);
        let d = random_povm(2, 4, &mut rng);
        let family: Vec<Operator> = (0..4)
            .map(|lam| {
                kron(&c[lam], &identity(2)) * C64::new(0.3, 0.0)
                    + kron(&identity(2), &d[lam]) * C64::new(0.7, 0.0)
            })
            .collect();
        let dec = two_sim_decompose(&family, 2, 2).unwrap();
        // The split is gauge-shifted relative to the plant, but the mixture
        // itself is recovered exactly and the parts are genuine POVMs.
        for lam in 0..4 {
            assert!(hs_norm(&(dec.reconstruction(lam) - &family[lam])) < 1e-10);
            assert!(is_psd(dec.c_part().effect(0, lam)));
            assert!(is_psd(dec.d_part().effect(0, lam)));
        }
    }

    #[test]
    fn decompose_one_sided_case_yields_unit_weight() {
        // Joint observable of a compatible pair (the same sharp measurement
        // twice), embedded one-sidedly: tuples (0,0) and (1,1) carry the
        // projectors, the off-diagonal tuples vanish.
        let proj = [
            (identity(2) + sigma('z')) * C64::new(0.5, 0.0),
            (identity(2) - sigma('z')) * C64::new(0.5, 0.0),
        ];
        let family: Vec<Operator> = (0..4)
            .map(|lam| {
                let (a1, a2) = (lam / 2, lam % 2);
                if a1 == a2 {
                    kron(&proj[a1], &identity(2))
                } else {
                    Operator::zeros(4, 4)
                }
            })
            .collect();
        let dec = two_sim_decompose(&family, 2, 2).unwrap();
        assert!((dec.q() - 1.0).abs() < 1e-12);
        for lam in 0..4 {
            assert!(hs_norm(&(dec.reconstruction(lam) - &family[lam])) < 1e-12);
        }
    }

    #[test]
    fn out_of_span_blocks_are_rejected() {
        let zz = kron(&sigma('z'), &sigma('z'));
        let family = vec![
            identity(4) * C64::new(0.5, 0.0) + &zz * C64::new(0.25, 0.0),
            identity(4) * C64::new(0.5, 0.0) - &zz * C64::new(0.25, 0.0),
        ];
        // Valid POVM (eigenvalues 1/4 and 3/4), yet outside the span.
        assert!(family.iter().all(is_psd));
        match two_sim_decompose(&family, 2, 2) {
            Err(SimulabilityError::NotInSpan { lambda: 0, residual }) => {
                assert!((residual - 0.5).abs() < 1e-12);
            }
            other => panic!("expected NotInSpan, got {other:?}"),
        }
    }

    #[test]
    fn decomposition_to_model_round_trips() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let c = random_povm(2, 4, &mut rng);
        let d = random_povm(2, 4, &mut rng);
        let family: Vec<Operator> = (0..4)
            .map(|lam| {
                kron(&c[lam], &identity(2)) * C64::new(0.6, 0.0)
                    + kron(&identity(2), &d[lam]) * C64::new(0.4, 0.0)
            })
            .collect();
        let dec = two_sim_decompose(&family, 2, 2).unwrap();
        // Interpret the four blocks as response tuples for two binary
        // settings and check the model reproduces the answered family.
        let resp = Responses { n_outcomes: 2, n_settings: 2 };
        let model = dec.to_model(&resp).unwrap();
        assert_eq!(model.k(), 2);
        let m = model.reconstruct().unwrap();
        for x in 0..2 {
            for a in 0..2 {
                let mut expect = Operator::zeros(2, 2);
                for lam in resp.responding(x, a) {
                    expect += dec.c_part().effect(0, lam) * C64::new(dec.q(), 0.0)
                        + dec.d_part().effect(0, lam) * C64::new(1.0 - dec.q(), 0.0);
                }
                assert!(hs_norm(&(m.effect(x, a) - expect)) < 1e-10);
            }
        }
        // Product-form statistics agree with the reconstruction on random
        // states.
        let prod = product_joint_observable(&model);
        for _ in 0..20 {
            let rho = random_state(2, &mut rng);
            for x in 0..2 {
                for a in 0..2 {
                    let direct = trace(&(m.effect(x, a) * &rho)).re;
                    assert!((direct - prod.probability(&rho, x, a)).abs() < 1e-9);
                }
            }
        }
    }

    #[test]
    fn eigenvalue_sum_structure_behind_the_shift() {
        // The split of a PSD span member has eigenvalues ν_i + μ_j, so the
        // minimal shift leaves the second part PSD; verify on a random member.
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let a = random_state(2, &mut rng) * C64::new(1.4, 0.0);
        let b = random_state(2, &mut rng) * C64::new(0.9, 0.0);
        let g = kron(&a, &identity(2)) + kron(&identity(2), &b);
        let s = span_split(&g, 2, 2).unwrap();
        let mut sums: Vec<f64> = eigvalsh(&s.a_part)
            .iter()
            .flat_map(|nu| eigvalsh(&s.b_part).iter().map(|mu| nu + mu).collect::<Vec<_>>())
            .collect();
        let mut eigs = eigvalsh(&g);
        sums.sort_by(f64::total_cmp);
        eigs.sort_by(f64::total_cmp);
        for (s, e) in sums.iter().zip(&eigs) {
            assert!((s - e).abs() < 1e-10);
        }
    }
}
