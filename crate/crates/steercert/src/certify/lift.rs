//! Lifting a measurement assemblage to k copies, and the deterministic
//! response table over outcome tuples.
//!
//! Testing k-compatibility of {M_{a|x}} is equivalent to testing joint
//! measurability of the lifted family
//! M̃^k_{a|x} = (1/k) Σ_ℓ I^{⊗ℓ} ⊗ M_{a|x} ⊗ I^{⊗(k−ℓ−1)} on d^k, so the
//! hierarchy below works entirely with the lifted effects.

use crate::qops::{identity, kron_all, FactorShape, Operator, C64};
use crate::scenarios::MeasurementAssemblage;

/// A measurement assemblage lifted to k copies.
#[derive(Debug, Clone)]
pub struct LiftedAssemblage {
    base: MeasurementAssemblage,
    k: usize,
    shape: FactorShape,
    /// effects[x][a] on dimension d^k.
    effects: Vec<Vec<Operator>>,
}

impl LiftedAssemblage {
    pub fn base(&self) -> &MeasurementAssemblage {
        &self.base
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Factor shape [d; k] of the lifted space.
    pub fn shape(&self) -> &FactorShape {
        &self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.total_dim()
    }

    pub fn n_settings(&self) -> usize {
        self.effects.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects[0].len()
    }

    pub fn effect(&self, x: usize, a: usize) -> &Operator {
        &self.effects[x][a]
    }
}

/// Lift each effect to the k-copy average of one-slot embeddings. `k = 1`
/// reproduces the base effects.
pub fn lift(m: &MeasurementAssemblage, k: usize) -> LiftedAssemblage {
    assert!(k >= 1, "copy count must be at least 1");
    let d = m.d();
    let shape = FactorShape::uniform(d, k);
    let scale = C64::new(1.0 / k as f64, 0.0);
    let effects = m
        .effects()
        .iter()
        .map(|row| {
            row.iter()
                .map(|eff| {
                    let mut out = Operator::zeros(shape.total_dim(), shape.total_dim());
                    for slot in 0..k {
                        let factors: Vec<Operator> = (0..k)
                            .map(|f| if f == slot { eff.clone() } else { identity(d) })
                            .collect();
                        out += kron_all(&factors);
                    }
                    out * scale
                })
                .collect()
        })
        .collect();
    LiftedAssemblage { base: m.clone(), k, shape, effects }
}

/// Deterministic response tables over outcome tuples λ ∈ [n_a]^{n_m}:
/// D(a|x,λ) = 1 iff λ_x = a. Tuples are enumerated with setting 0 as the most
/// significant digit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Responses {
    pub n_outcomes: usize,
    pub n_settings: usize,
}

impl Responses {
    pub fn count(&self) -> usize {
        self.n_outcomes.pow(self.n_settings as u32)
    }

    /// The outcome assigned to setting `x` by tuple `lambda`.
    pub fn digit(&self, lambda: usize, x: usize) -> usize {
        let place = self.n_settings - 1 - x;
        lambda / self.n_outcomes.pow(place as u32) % self.n_outcomes
    }

    pub fn responds(&self, lambda: usize, x: usize, a: usize) -> bool {
        self.digit(lambda, x) == a
    }

    /// All tuples that answer `a` on setting `x` (a 1/n_a fraction).
    pub fn responding(&self, x: usize, a: usize) -> Vec<usize> {
        (0..self.count()).filter(|&l| self.responds(l, x, a)).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::qops::{self, hs_norm};
    use crate::scenarios::{depolarize, mub_assemblage, NoiseModel};

    #[test]
    fn lift_with_one_copy_is_the_identity() {
        let m = mub_assemblage(3, 2).unwrap();
        let lifted = lift(&m, 1);
        for x in 0..2 {
            for a in 0..3 {
                assert!(hs_norm(&(lifted.effect(x, a) - m.effect(x, a))) < 1e-15);
            }
        }
    }

    #[test]
    fn lift_of_a_projector_has_the_forced_spectrum() {
        // M = diag(1,0), k = 2: (M⊗I + I⊗M)/2 = diag(1, 1/2, 1/2, 0).
        let mut proj = Operator::zeros(2, 2);
        proj[(0, 0)] = C64::new(1.0, 0.0);
        let m = MeasurementAssemblage::new(vec![vec![proj.clone(), identity(2) - proj]]).unwrap();
        let lifted = lift(&m, 2);
        let got = lifted.effect(0, 0);
        for (i, want) in [1.0, 0.5, 0.5, 0.0].iter().enumerate() {
            assert!((got[(i, i)].re - want).abs() < 1e-15);
            assert!(got[(i, i)].im.abs() < 1e-15);
        }
    }

    #[test]
    fn lift_commutes_with_depolarizing_noise() {
        let m = mub_assemblage(3, 3).unwrap();
        let t = 0.63;
        let lhs = lift(&depolarize(&m, NoiseModel::new(t).unwrap()), 2);
        let rhs_base = lift(&m, 2);
        let n_a = m.n_outcomes() as f64;
        for x in 0..3 {
            for a in 0..3 {
                let rhs = rhs_base.effect(x, a) * C64::new(t, 0.0)
                    + identity(9) * C64::new((1.0 - t) / n_a, 0.0);
                assert!(hs_norm(&(lhs.effect(x, a) - rhs)) < 1e-12);
            }
        }
    }

    #[test]
    fn lifted_effects_still_form_povms() {
        let lifted = lift(&mub_assemblage(2, 3).unwrap(), 3);
        for x in 0..3 {
            let sum = lifted.effects[x]
                .iter()
                .fold(Operator::zeros(8, 8), |acc, e| acc + e.clone());
            assert!(hs_norm(&(sum - identity(8))) < 1e-12);
            for a in 0..2 {
                assert!(qops::min_eig(lifted.effect(x, a)) > -1e-12);
            }
        }
    }

    #[test]
    fn lifted_effects_are_permutation_symmetric() {
        let lifted = lift(&mub_assemblage(3, 2).unwrap(), 2);
        let shape = lifted.shape().clone();
        for x in 0..2 {
            for a in 0..3 {
                let eff = lifted.effect(x, a);
                // Swapping the two copies is a relabeling of tensor factors.
                let swapped = crate::certify::symmetry::factor_permutation(&shape, &[1, 0])
                    .map(|p| &p * eff * p.adjoint())
                    .unwrap();
                assert!(hs_norm(&(swapped - eff)) < 1e-14);
            }
        }
    }

    #[test]
    fn response_table_digits_and_partition() {
        let r = Responses { n_outcomes: 3, n_settings: 2 };
        assert_eq!(r.count(), 9);
        // λ = 5 = (1, 2): setting 0 answers 1, setting 1 answers 2.
        assert_eq!(r.digit(5, 0), 1);
        assert_eq!(r.digit(5, 1), 2);
        // For each setting, the responding sets partition the tuples.
        for x in 0..2 {
            let mut seen = vec![false; 9];
            for a in 0..3 {
                for l in r.responding(x, a) {
                    assert!(!seen[l]);
                    seen[l] = true;
                }
            }
            assert!(seen.into_iter().all(|s| s));
        }
    }
}
