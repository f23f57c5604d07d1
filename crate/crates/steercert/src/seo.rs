//! From a shared bipartite state and the remote party's measurements to Bob's
//! state assemblage, and on to steering-equivalent observables (SEO).
//!
//! The SEO of an assemblage {ρ_{a|x}} with reduced state ρ_B is
//! S_{a|x} = ρ_B^{−1/2} ρ_{a|x} ρ_B^{−1/2} on the support of ρ_B. The
//! assemblage admits a local-hidden-state model exactly when its SEO are
//! jointly measurable, which is what lets measurement-compatibility tests run
//! on Bob's side alone.

use thiserror::Error;

use crate::qops::{
    self, herm_eigen, hermitize, identity, is_psd, kron, partial_trace, trace, FactorShape,
    Operator, QopsError, C64,
};
use crate::scenarios::{MeasurementAssemblage, ScenarioError};
use crate::tol::{RANK_TOL_REL, TOL_PSD};

/// Errors from the steering pipeline.
#[derive(Debug, Error)]
pub enum SeoError {
    /// The shared state is not a valid density operator.
    #[error("shared state invalid: {0}")]
    BadState(String),
    /// The state's dimension is incompatible with the measurement assemblage.
    #[error("state dimension {state_dim} is not divisible by measurement dimension {d_a}")]
    DimensionMismatch { state_dim: usize, d_a: usize },
    /// The conditional states violate an assemblage invariant.
    #[error("invalid state assemblage: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Qops(#[from] QopsError),
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
}

/// Bob's conditional (subnormalized) states {ρ_{a|x}} plus the reduced state
/// ρ_B = Σ_a ρ_{a|x}, which is setting-independent by no-signalling.
#[derive(Debug, Clone)]
pub struct StateAssemblage {
    d_b: usize,
    members: Vec<Vec<Operator>>,
    reduced: Operator,
}

impl StateAssemblage {
    /// Build from members indexed `[setting][outcome]`, validating positivity,
    /// no-signalling consistency, and normalization of the reduced state.
    pub fn new(members: Vec<Vec<Operator>>) -> Result<Self, SeoError> {
        let d_b = members
            .first()
            .and_then(|row| row.first())
            .map(|m| m.nrows())
            .ok_or_else(|| SeoError::Inconsistent("empty assemblage".into()))?;
        let mut reduced: Option<Operator> = None;
        for (x, row) in members.iter().enumerate() {
            let mut sum = Operator::zeros(d_b, d_b);
            for (a, rho) in row.iter().enumerate() {
                if rho.nrows() != d_b || rho.ncols() != d_b {
                    return Err(SeoError::Inconsistent(format!(
                        "member ({a}|{x}) is not {d_b}×{d_b}"
                    )));
                }
                if !is_psd(rho) {
                    return Err(SeoError::Inconsistent(format!("member ({a}|{x}) is not PSD")));
                }
                sum += rho;
            }
            match &reduced {
                None => reduced = Some(sum),
                Some(r) => {
                    if qops::hs_norm(&(&sum - r)) > TOL_PSD * (d_b as f64) {
                        return Err(SeoError::Inconsistent(format!(
                            "setting {x} signals: marginals differ"
                        )));
                    }
                }
            }
        }
        let reduced = reduced.expect("at least one setting");
        let tr = trace(&reduced).re;
        if (tr - 1.0).abs() > 1e-10 {
            return Err(SeoError::Inconsistent(format!("reduced state has trace {tr}")));
        }
        Ok(Self { d_b, members, reduced })
    }

    pub fn d_b(&self) -> usize {
        self.d_b
    }

    pub fn n_settings(&self) -> usize {
        self.members.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.members[0].len()
    }

    pub fn member(&self, x: usize, a: usize) -> &Operator {
        &self.members[x][a]
    }

    /// Reduced state ρ_B.
    pub fn reduced(&self) -> &Operator {
        &self.reduced
    }
}

fn validate_state(state: &Operator) -> Result<(), SeoError> {
    if state.nrows() != state.ncols() {
        return Err(SeoError::BadState("state matrix is not square".into()));
    }
    if !is_psd(state) {
        return Err(SeoError::BadState("state is not PSD".into()));
    }
    let tr = trace(state).re;
    if (tr - 1.0).abs() > 1e-8 {
        return Err(SeoError::BadState(format!("state trace is {tr}, expected 1")));
    }
    Ok(())
}

/// Bob's state assemblage from a shared state on A⊗B and Alice's measurements:
/// ρ_{a|x} = tr_A[(M_{a|x} ⊗ 𝟙) ρ_AB].
pub fn steer(state: &Operator, m: &MeasurementAssemblage) -> Result<StateAssemblage, SeoError> {
    validate_state(state)?;
    let d_a = m.d();
    let total = state.nrows();
    if total % d_a != 0 || total / d_a == 0 {
        return Err(SeoError::DimensionMismatch { state_dim: total, d_a });
    }
    let d_b = total / d_a;
    let shape = FactorShape::new([d_a, d_b]);
    let id_b = identity(d_b);
    let members = m
        .effects()
        .iter()
        .map(|povm| {
            povm.iter()
                .map(|eff| {
                    let lifted = kron(eff, &id_b);
                    let steered = partial_trace(&(&lifted * state), &shape, &[1])?;
                    Ok(hermitize(&steered))
                })
                .collect::<Result<Vec<_>, SeoError>>()
        })
        .collect::<Result<Vec<_>, _>>()?;
    StateAssemblage::new(members)
}

/// Support data of a PSD operator: kept eigenvalues (above the relative rank
/// cutoff) and the isometry whose columns span the support.
fn support(rho: &Operator) -> (Vec<f64>, Operator) {
    let (vals, vecs) = herm_eigen(rho);
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = RANK_TOL_REL * lam_max;
    let kept: Vec<usize> = (0..vals.len()).filter(|&i| vals[i] > cutoff).collect();
    let iso = Operator::from_columns(
        &kept.iter().map(|&i| vecs.column(i).into_owned()).collect::<Vec<_>>(),
    );
    (kept.iter().map(|&i| vals[i]).collect(), iso)
}

/// Steering-equivalent observables S_{a|x} = ρ_B^{−1/2} ρ_{a|x} ρ_B^{−1/2} on
/// the support of ρ_B; the output dimension is the numerical rank of ρ_B.
pub fn seo(sa: &StateAssemblage) -> Result<MeasurementAssemblage, SeoError> {
    let d_b = sa.d_b();
    let full_rank = qops::psd_rank(sa.reduced()) == d_b;
    let effects = if full_rank {
        // Full-rank fast path: invert in place, no support-basis rotation.
        let (_, inv_sqrt) = qops::psd_sqrt_pinv(sa.reduced())?;
        sa.members
            .iter()
            .map(|row| {
                row.iter().map(|rho| hermitize(&(&inv_sqrt * rho * &inv_sqrt))).collect()
            })
            .collect()
    } else {
        let (vals, iso) = support(sa.reduced());
        let scale = Operator::from_diagonal(&nalgebra::DVector::from_iterator(
            vals.len(),
            vals.iter().map(|&v| C64::new(1.0 / v.sqrt(), 0.0)),
        ));
        let conj = &scale * iso.adjoint();
        sa.members
            .iter()
            .map(|row| row.iter().map(|rho| hermitize(&(&conj * rho * conj.adjoint()))).collect())
            .collect()
    };
    Ok(MeasurementAssemblage::new(effects)?)
}

/// Simulators of the SEO: the same support-compressed conjugation applied to
/// the assemblage steered by `b` instead of the original measurements,
/// B̃_{b|y} = ρ_B^{−1/2} Π_B tr_A[(B_{b|y} ⊗ 𝟙) ρ_AB] Π_B ρ_B^{−1/2}.
///
/// If the original measurements are simulable from `b` by classical pre- and
/// post-processing, the SEO are simulable from these outputs with the same
/// processings.
pub fn seo_simulators(
    b: &MeasurementAssemblage,
    state: &Operator,
) -> Result<MeasurementAssemblage, SeoError> {
    seo(&steer(state, b)?)
}
