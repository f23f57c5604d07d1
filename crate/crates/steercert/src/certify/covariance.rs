//! Outcome-covariance quotient for response tuples.
//!
//! Depolarized bases built from discrete Fourier families are covariant under
//! the Weyl displacement operators: conjugating every effect by W = X^u Z^v
//! permutes outcomes within each setting. When such a verified symmetry acts
//! freely on the deterministic response tuples, a feasible family {G_λ} can be
//! group-averaged into one satisfying G_{g·λ} = U_g G_λ U_g† without touching
//! any constraint, so the program only needs one variable block per orbit.
//! For the four-basis qutrit instances this cuts the 81 response tuples to 9
//! representatives — the difference between fitting in memory and not.
//!
//! Everything claimed here is checked numerically before use: each candidate
//! unitary must permute every setting's effects exactly (within tolerance),
//! the permutation tables must close under the group law, and the induced
//! action on response tuples must be free. Any failure disables the quotient;
//! it is never assumed.

use crate::qops::{hs_norm, Operator, C64};
use crate::scenarios::MeasurementAssemblage;

use super::lift::Responses;

/// Match tolerance for "conjugation maps this effect onto that one", relative
/// to the effect's scale. Scenario constructions are exact to rounding, so
/// this is generous.
const MATCH_TOL: f64 = 1e-9;

/// Weyl displacement X^u Z^v on dimension d: X|m⟩ = |m+1 mod d⟩,
/// Z|m⟩ = ω^m|m⟩.
pub(crate) fn weyl(d: usize, u: usize, v: usize) -> Operator {
    Operator::from_fn(d, d, |row, col| {
        if row == (col + u) % d {
            let phi = 2.0 * std::f64::consts::PI * (v * col % d) as f64 / d as f64;
            C64::new(phi.cos(), phi.sin())
        } else {
            C64::new(0.0, 0.0)
        }
    })
}

/// A verified projective symmetry group of an assemblage: unitaries U_g with
/// U_g M_{a|x} U_g† = M_{perm[g][x][a] | x} for every effect.
#[derive(Debug, Clone)]
pub(crate) struct CovariantAction {
    unitaries: Vec<Operator>,
    /// perms[g][x][a] = outcome that (a|x) is mapped onto by U_g.
    perms: Vec<Vec<Vec<usize>>>,
}

/// The outcome permutation induced by conjugation with `u`, if it exists.
fn permutation_table(m: &MeasurementAssemblage, u: &Operator) -> Option<Vec<Vec<usize>>> {
    let mut table = Vec::with_capacity(m.n_settings());
    for x in 0..m.n_settings() {
        let mut row = vec![usize::MAX; m.n_outcomes()];
        let mut hit = vec![false; m.n_outcomes()];
        for a in 0..m.n_outcomes() {
            let conj = u * m.effect(x, a) * u.adjoint();
            let scale = hs_norm(m.effect(x, a)).max(1.0);
            let mut found = None;
            for b in 0..m.n_outcomes() {
                if hs_norm(&(&conj - m.effect(x, b))) <= MATCH_TOL * scale {
                    if found.is_some() {
                        return None; // ambiguous match (near-equal effects)
                    }
                    found = Some(b);
                }
            }
            let b = found?;
            if hit[b] {
                return None;
            }
            hit[b] = true;
            row[a] = b;
        }
        table.push(row);
    }
    Some(table)
}

fn compose(outer: &[Vec<usize>], inner: &[Vec<usize>]) -> Vec<Vec<usize>> {
    outer
        .iter()
        .zip(inner)
        .map(|(o, i)| i.iter().map(|&a| o[a]).collect())
        .collect()
}

impl CovariantAction {
    /// Scan the Weyl displacement group for elements that permute every POVM
    /// of `m`, and keep them only if the surviving index set is closed under
    /// the group law with matching permutation composition. Returns `None`
    /// when nothing beyond the identity survives.
    pub(crate) fn detect(m: &MeasurementAssemblage) -> Option<Self> {
        let d = m.d();
        let mut found: Vec<((usize, usize), Operator, Vec<Vec<usize>>)> = Vec::new();
        for u in 0..d {
            for v in 0..d {
                let w = weyl(d, u, v);
                if let Some(t) = permutation_table(m, &w) {
                    found.push(((u, v), w, t));
                }
            }
        }
        if found.len() <= 1 {
            return None;
        }
        // Closure: for every pair, (u,v)+(u',v') must be in the surviving set
        // and its table must equal the composition of the pair's tables.
        let index_of = |uv: (usize, usize)| found.iter().position(|(key, _, _)| *key == uv);
        for (uv_a, _, ta) in &found {
            for (uv_b, _, tb) in &found {
                let sum = ((uv_a.0 + uv_b.0) % d, (uv_a.1 + uv_b.1) % d);
                let Some(i) = index_of(sum) else { return None };
                if found[i].2 != compose(ta, tb) {
                    return None;
                }
            }
        }
        let (unitaries, perms) = found.into_iter().map(|(_, w, t)| (w, t)).unzip();
        Some(Self { unitaries, perms })
    }

    pub(crate) fn order(&self) -> usize {
        self.unitaries.len()
    }

    /// U_g ⊗ … ⊗ U_g on `n` factors.
    pub(crate) fn power_unitary(&self, g: usize, n: usize) -> Operator {
        let mut out = Operator::identity(1, 1);
        for _ in 0..n {
            out = crate::qops::kron(&out, &self.unitaries[g]);
        }
        out
    }

    pub(crate) fn outcome_image(&self, g: usize, x: usize, a: usize) -> usize {
        self.perms[g][x][a]
    }
}

/// Free-orbit quotient of the response tuples under a [`CovariantAction`].
#[derive(Debug, Clone)]
pub(crate) struct LambdaQuotient {
    action: CovariantAction,
    reps: Vec<usize>,
    /// For every tuple index: (position of its representative in `reps`,
    /// group element g with λ = g · rep).
    orbit_of: Vec<(usize, usize)>,
    resp: Responses,
}

impl LambdaQuotient {
    /// Build the quotient if the action is free on tuples (every orbit has
    /// full group size); otherwise `None`.
    pub(crate) fn try_new(action: CovariantAction, resp: Responses) -> Option<Self> {
        let n = resp.count();
        let order = action.order();
        let mut orbit_of = vec![(usize::MAX, usize::MAX); n];
        let mut reps = Vec::new();
        for lam in 0..n {
            if orbit_of[lam].0 != usize::MAX {
                continue;
            }
            let r = reps.len();
            for g in 0..order {
                let image = apply(&action, g, lam, &resp);
                if orbit_of[image].0 != usize::MAX {
                    return None; // revisited: action not free
                }
                orbit_of[image] = (r, g);
            }
            reps.push(lam);
        }
        Some(Self { action, reps, orbit_of, resp })
    }

    /// Detect covariance of `m` and build the quotient for its response
    /// tuples in one step.
    pub(crate) fn detect(m: &MeasurementAssemblage) -> Option<Self> {
        let resp = Responses { n_outcomes: m.n_outcomes(), n_settings: m.n_settings() };
        CovariantAction::detect(m).and_then(|action| Self::try_new(action, resp))
    }

    pub(crate) fn action(&self) -> &CovariantAction {
        &self.action
    }

    pub(crate) fn n_reps(&self) -> usize {
        self.reps.len()
    }

    pub(crate) fn group_order(&self) -> usize {
        self.action.order()
    }

    pub(crate) fn orbit_of(&self) -> &[(usize, usize)] {
        &self.orbit_of
    }

    /// Group elements g for which the orbit member g·λ_r responds with
    /// outcome `a` on setting `x`.
    pub(crate) fn selectors(&self, r: usize, x: usize, a: usize) -> Vec<usize> {
        let digit = self.resp.digit(self.reps[r], x);
        (0..self.action.order())
            .filter(|&g| self.action.outcome_image(g, x, digit) == a)
            .collect()
    }

    /// One representative outcome per orbit of the group's action on setting
    /// `x`'s outcomes; marginal constraints are only needed for these.
    pub(crate) fn outcome_reps(&self, x: usize) -> Vec<usize> {
        let n_a = self.resp.n_outcomes;
        let mut seen = vec![false; n_a];
        let mut out = Vec::new();
        for a in 0..n_a {
            if seen[a] {
                continue;
            }
            out.push(a);
            for g in 0..self.action.order() {
                seen[self.action.outcome_image(g, x, a)] = true;
            }
        }
        out
    }
}

/// Index of g·λ: apply the outcome permutation of g to every digit.
fn apply(action: &CovariantAction, g: usize, lam: usize, resp: &Responses) -> usize {
    let mut index = 0;
    for x in 0..resp.n_settings {
        index = index * resp.n_outcomes + action.outcome_image(g, x, resp.digit(lam, x));
    }
    index
}
