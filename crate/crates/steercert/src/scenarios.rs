//! Generators for benchmark inputs: mutually unbiased bases, depolarizing
//! noise, maximally entangled states, and control instances with known
//! compatibility structure.

use nalgebra::DMatrix;
use rand::Rng;
use thiserror::Error;

use crate::qops::{self, hermitize, identity, is_psd, kron, Operator, C64};
use crate::tol::TOL_PSD;

/// Errors from scenario construction and assemblage validation.
#[derive(Debug, Error)]
pub enum ScenarioError {
    /// Mutually unbiased basis families are generated for prime dimensions only.
    #[error("dimension {0} is not prime; MUB construction unavailable")]
    NonPrimeDimension(usize),
    /// At most d+1 mutually unbiased bases exist in prime dimension d.
    #[error("requested {requested} bases but dimension {d} admits at most {max}")]
    TooManyBases { requested: usize, d: usize, max: usize },
    /// At least one basis is required.
    #[error("an assemblage needs at least one measurement setting")]
    NoSettings,
    /// Visibility parameter outside [0, 1].
    #[error("visibility {0} outside [0, 1]")]
    BadVisibility(f64),
    /// Effects failed the POVM invariants (PSD, completeness, uniform shape).
    #[error("invalid assemblage: {0}")]
    InvalidAssemblage(String),
}

/// Indexed family of POVMs {M_{a|x}}: `n_m` settings, `n_a` outcomes each, on
/// a `d`-dimensional system. Every effect is PSD and each setting's effects
/// sum to the identity.
#[derive(Debug, Clone)]
pub struct MeasurementAssemblage {
    d: usize,
    effects: Vec<Vec<Operator>>,
}

impl MeasurementAssemblage {
    /// Build from effects indexed `[setting][outcome]`, validating the POVM
    /// invariants within tolerance.
    pub fn new(effects: Vec<Vec<Operator>>) -> Result<Self, ScenarioError> {
        if effects.is_empty() {
            return Err(ScenarioError::NoSettings);
        }
        let n_a = effects[0].len();
        let d = effects
            .first()
            .and_then(|povm| povm.first())
            .map(|m| m.nrows())
            .ok_or_else(|| ScenarioError::InvalidAssemblage("empty POVM".into()))?;
        for (x, povm) in effects.iter().enumerate() {
            if povm.len() != n_a {
                return Err(ScenarioError::InvalidAssemblage(format!(
                    "setting {x} has {} outcomes, expected {n_a}",
                    povm.len()
                )));
            }
            let mut sum = Operator::zeros(d, d);
            for (a, m) in povm.iter().enumerate() {
                if m.nrows() != d || m.ncols() != d {
                    return Err(ScenarioError::InvalidAssemblage(format!(
                        "effect ({a}|{x}) is not {d}×{d}"
                    )));
                }
                if !is_psd(m) {
                    return Err(ScenarioError::InvalidAssemblage(format!(
                        "effect ({a}|{x}) is not PSD"
                    )));
                }
                sum += m;
            }
            let dev = (&sum - identity(d)).iter().map(|z| z.norm()).fold(0.0, f64::max);
            if dev > TOL_PSD {
                return Err(ScenarioError::InvalidAssemblage(format!(
                    "setting {x} effects sum to identity only within {dev:.3e}"
                )));
            }
        }
        Ok(Self { d, effects })
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn n_settings(&self) -> usize {
        self.effects.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.effects[0].len()
    }

    /// Effect M_{a|x}.
    pub fn effect(&self, x: usize, a: usize) -> &Operator {
        &self.effects[x][a]
    }

    pub fn effects(&self) -> &[Vec<Operator>] {
        &self.effects
    }

    /// Sub-assemblage restricted to the listed settings, in the given order.
    pub fn subset(&self, settings: &[usize]) -> Self {
        Self {
            d: self.d,
            effects: settings.iter().map(|&x| self.effects[x].clone()).collect(),
        }
    }
}

/// Depolarizing-noise visibility t ∈ [0, 1].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    t: f64,
}

impl NoiseModel {
    pub fn new(t: f64) -> Result<Self, ScenarioError> {
        if !(0.0..=1.0).contains(&t) || !t.is_finite() {
            return Err(ScenarioError::BadVisibility(t));
        }
        Ok(Self { t })
    }

    pub fn visibility(&self) -> f64 {
        self.t
    }
}

/// Replace every effect by t·M_{a|x} + (1−t)·I/n_a.
pub fn depolarize(m: &MeasurementAssemblage, noise: NoiseModel) -> MeasurementAssemblage {
    let t = noise.t;
    let d = m.d();
    let n_a = m.n_outcomes();
    let iso = identity(d) * C64::new((1.0 - t) / n_a as f64, 0.0);
    let effects = m
        .effects
        .iter()
        .map(|povm| povm.iter().map(|eff| eff * C64::new(t, 0.0) + &iso).collect())
        .collect();
    MeasurementAssemblage { d, effects }
}

fn is_prime(n: usize) -> bool {
    n >= 2 && (2..).take_while(|k| k * k <= n).all(|k| n % k != 0)
}

/// Orthonormal mutually unbiased bases in prime dimension `d`, as rank-1
/// projective measurements.
///
/// The family is the computational basis followed by the `d` quadratic-phase
/// Fourier bases |e_j^{(s)}⟩ = d^{−1/2} Σ_m ω^{s·m² + j·m} |m⟩ (ω = e^{2πi/d},
/// odd prime d); for d = 2 the three Pauli eigenbases. Any two generated bases
/// satisfy |⟨e_i^{(x)}|e_j^{(y)}⟩|² = 1/d, which is the verified contract —
/// any standard prime-dimension construction would do.
pub fn mub_assemblage(d: usize, n_m: usize) -> Result<MeasurementAssemblage, ScenarioError> {
    if !is_prime(d) {
        return Err(ScenarioError::NonPrimeDimension(d));
    }
    if n_m == 0 {
        return Err(ScenarioError::NoSettings);
    }
    if n_m > d + 1 {
        return Err(ScenarioError::TooManyBases { requested: n_m, d, max: d + 1 });
    }
    let bases: Vec<Vec<Vec<C64>>> = if d == 2 {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        vec![
            // σ_z, σ_x, σ_y eigenbases.
            vec![vec![C64::new(1., 0.), C64::new(0., 0.)], vec![C64::new(0., 0.), C64::new(1., 0.)]],
            vec![
                vec![C64::new(h, 0.), C64::new(h, 0.)],
                vec![C64::new(h, 0.), C64::new(-h, 0.)],
            ],
            vec![
                vec![C64::new(h, 0.), C64::new(0., h)],
                vec![C64::new(h, 0.), C64::new(0., -h)],
            ],
        ]
    } else {
        let omega = |e: usize| {
            let phi = 2.0 * std::f64::consts::PI * (e % d) as f64 / d as f64;
            C64::new(phi.cos(), phi.sin())
        };
        let norm = 1.0 / (d as f64).sqrt();
        let mut bases = Vec::with_capacity(d + 1);
        bases.push(
            (0..d)
                .map(|j| (0..d).map(|m| C64::new(if m == j { 1. } else { 0. }, 0.)).collect())
                .collect::<Vec<Vec<C64>>>(),
        );
        for s in 0..d {
            bases.push(
                (0..d)
                    .map(|j| (0..d).map(|m| omega(s * m * m + j * m) * norm).collect())
                    .collect(),
            );
        }
        bases
    };
    let effects = bases
        .into_iter()
        .take(n_m)
        .map(|basis| {
            basis
                .into_iter()
                .map(|v| {
                    let ket = DMatrix::from_iterator(d, 1, v);
                    hermitize(&(&ket * ket.adjoint()))
                })
                .collect()
        })
        .collect();
    MeasurementAssemblage::new(effects)
}

/// Projector onto the maximally entangled state (1/√d) Σ_i |ii⟩ on C^d ⊗ C^d.
pub fn maximally_entangled(d: usize) -> Operator {
    assert!(d >= 2, "entanglement needs local dimension ≥ 2");
    let mut out = Operator::zeros(d * d, d * d);
    let v = C64::new(1.0 / d as f64, 0.0);
    for i in 0..d {
        for j in 0..d {
            out[(i * d + i, j * d + j)] = v;
        }
    }
    out
}

/// Visibility at which the hollow-triangle control instance is generated:
/// inside (1/√3, 1/√2], so the three noisy Pauli measurements are pairwise
/// jointly measurable but not triplewise.
pub const HOLLOW_TRIANGLE_VISIBILITY: f64 = 0.7;

/// Three binary qubit POVMs that are pairwise compatible yet triplewise
/// incompatible: the Pauli eigenbases depolarized to visibility 0.7
/// (pairwise-compatible for t ≤ 1/√2 ≈ 0.7071, triplewise only for
/// t ≤ 1/√3 ≈ 0.5774).
pub fn hollow_triangle() -> MeasurementAssemblage {
    let paulis = mub_assemblage(2, 3).expect("qubit MUB triple");
    depolarize(&paulis, NoiseModel::new(HOLLOW_TRIANGLE_VISIBILITY).expect("fixed visibility"))
}

/// Random POVM with `n_out` outcomes on dimension `d`: Gram-normalized random
/// PSD operators, B_b = S^{−1/2} R_b S^{−1/2} with S = Σ R_b.
pub fn random_povm(d: usize, n_out: usize, rng: &mut impl Rng) -> Vec<Operator> {
    assert!(n_out >= 1);
    let raw: Vec<Operator> = (0..n_out)
        .map(|_| {
            let g = Operator::from_fn(d, d, |_, _| {
                C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
            });
            hermitize(&(&g * g.adjoint()))
        })
        .collect();
    let mut total = Operator::zeros(d, d);
    for r in &raw {
        total += r;
    }
    let (_, inv_sqrt) = qops::psd_sqrt_pinv(&total).expect("sum of random PSD is PSD");
    raw.iter().map(|r| hermitize(&(&inv_sqrt * r * &inv_sqrt))).collect()
}

/// Random full-rank density operator.
pub fn random_state(d: usize, rng: &mut impl Rng) -> Operator {
    let g = Operator::from_fn(d, d, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    });
    // A small multiple of the identity keeps the spectrum comfortably full rank.
    let p = hermitize(&(&g * g.adjoint())) + identity(d) * C64::new(0.05, 0.0);
    let norm = qops::trace(&p).re;
    p * C64::new(1.0 / norm, 0.0)
}

/// Random separable bipartite state: a mixture of `terms` product states.
pub fn random_separable_state(
    d_a: usize,
    d_b: usize,
    terms: usize,
    rng: &mut impl Rng,
) -> Operator {
    assert!(terms >= 1);
    let mut weights: Vec<f64> = (0..terms).map(|_| rng.gen_range(0.05..1.0)).collect();
    let total: f64 = weights.iter().sum();
    weights.iter_mut().for_each(|w| *w /= total);
    let mut out = Operator::zeros(d_a * d_b, d_a * d_b);
    for w in weights {
        let rho_a = random_state(d_a, rng);
        let rho_b = random_state(d_b, rng);
        out += kron(&rho_a, &rho_b) * C64::new(w, 0.0);
    }
    hermitize(&out)
}

/// Row-stochastic table with `rows` rows and `cols` columns.
pub fn random_stochastic(rows: usize, cols: usize, rng: &mut impl Rng) -> Vec<Vec<f64>> {
    (0..rows)
        .map(|_| {
            let raw: Vec<f64> = (0..cols).map(|_| rng.gen_range(0.05..1.0)).collect();
            let s: f64 = raw.iter().sum();
            raw.into_iter().map(|v| v / s).collect()
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn max_overlap_deviation(m: &MeasurementAssemblage) -> f64 {
        // For rank-1 projective bases, tr[P_i^{(x)} P_j^{(y)}] = |⟨e_i|e_j⟩|².
        let d = m.d() as f64;
        let mut worst: f64 = 0.0;
        for x in 0..m.n_settings() {
            for y in (x + 1)..m.n_settings() {
                for i in 0..m.n_outcomes() {
                    for j in 0..m.n_outcomes() {
                        let ov = qops::hs_inner(m.effect(x, i), m.effect(y, j)).re;
                        worst = worst.max((ov - 1.0 / d).abs());
                    }
                }
            }
        }
        worst
    }

    #[test]
    fn mub_overlap_invariant() {
        for (d, n_m) in [(2, 2), (2, 3), (3, 2), (3, 3), (3, 4), (5, 6)] {
            let m = mub_assemblage(d, n_m).unwrap();
            assert_eq!(m.n_settings(), n_m);
            assert_eq!(m.n_outcomes(), d);
            assert!(
                max_overlap_deviation(&m) < 1e-10,
                "overlap deviation too large for d={d}, n_m={n_m}"
            );
        }
    }

    #[test]
    fn mub_single_basis_is_valid() {
        let m = mub_assemblage(2, 1).unwrap();
        assert_eq!(m.n_settings(), 1);
    }

    #[test]
    fn mub_rejects_bad_requests() {
        assert!(matches!(mub_assemblage(4, 2), Err(ScenarioError::NonPrimeDimension(4))));
        assert!(matches!(mub_assemblage(3, 5), Err(ScenarioError::TooManyBases { .. })));
        assert!(matches!(mub_assemblage(3, 0), Err(ScenarioError::NoSettings)));
    }

    #[test]
    fn depolarize_endpoints_and_midpoint() {
        let m = mub_assemblage(2, 3).unwrap();
        let same = depolarize(&m, NoiseModel::new(1.0).unwrap());
        for x in 0..3 {
            for a in 0..2 {
                assert!(qops::hs_norm(&(same.effect(x, a) - m.effect(x, a))) < 1e-14);
            }
        }
        let trivial = depolarize(&m, NoiseModel::new(0.0).unwrap());
        for x in 0..3 {
            for a in 0..2 {
                let dev = trivial.effect(x, a) - identity(2) * C64::new(0.5, 0.0);
                assert!(qops::hs_norm(&dev) < 1e-14);
            }
        }
        // σ_z basis at t = 1/2: diag(3/4, 1/4) and diag(1/4, 3/4).
        let half = depolarize(&m, NoiseModel::new(0.5).unwrap());
        assert!((half.effect(0, 0)[(0, 0)].re - 0.75).abs() < 1e-14);
        assert!((half.effect(0, 0)[(1, 1)].re - 0.25).abs() < 1e-14);
        assert!((half.effect(0, 1)[(1, 1)].re - 0.75).abs() < 1e-14);
    }

    #[test]
    fn depolarize_is_affine_in_visibility() {
        let m = mub_assemblage(3, 4).unwrap();
        let (t1, t2) = (0.35, 0.9);
        let mid = depolarize(&m, NoiseModel::new((t1 + t2) / 2.0).unwrap());
        let m1 = depolarize(&m, NoiseModel::new(t1).unwrap());
        let m2 = depolarize(&m, NoiseModel::new(t2).unwrap());
        for x in 0..4 {
            for a in 0..3 {
                let avg = (m1.effect(x, a) + m2.effect(x, a)) * C64::new(0.5, 0.0);
                assert!(qops::hs_norm(&(mid.effect(x, a) - avg)) < 1e-12);
            }
        }
    }

    #[test]
    fn noise_model_validates_range() {
        assert!(NoiseModel::new(-0.1).is_err());
        assert!(NoiseModel::new(1.1).is_err());
        assert!(NoiseModel::new(f64::NAN).is_err());
        assert!(NoiseModel::new(0.0).is_ok());
        assert!(NoiseModel::new(1.0).is_ok());
    }

    #[test]
    fn maximally_entangled_properties() {
        let phi2 = maximally_entangled(2);
        assert!((phi2[(0, 0)].re - 0.5).abs() < 1e-15);
        assert!((phi2[(0, 3)].re - 0.5).abs() < 1e-15);
        assert!((phi2[(1, 1)].norm()) < 1e-15);
        let shape = qops::FactorShape::new([2, 2]);
        let marg = qops::partial_trace(&phi2, &shape, &[1]).unwrap();
        assert!(qops::hs_norm(&(marg - identity(2) * C64::new(0.5, 0.0))) < 1e-14);

        let phi3 = maximally_entangled(3);
        assert!((qops::trace(&phi3).re - 1.0).abs() < 1e-14);
        assert_eq!(qops::psd_rank(&phi3), 1);
    }

    #[test]
    fn hollow_triangle_shape() {
        let tri = hollow_triangle();
        assert_eq!(tri.d(), 2);
        assert_eq!(tri.n_settings(), 3);
        assert_eq!(tri.n_outcomes(), 2);
        // Identity-share pins the construction visibility.
        assert!((tri.effect(0, 0)[(1, 1)].re - 0.15).abs() < 1e-12);
    }

    #[test]
    fn random_generators_produce_valid_objects() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let povm = random_povm(3, 4, &mut rng);
        let m = MeasurementAssemblage::new(vec![povm]).unwrap();
        assert_eq!(m.n_outcomes(), 4);

        let rho = random_state(3, &mut rng);
        assert!(is_psd(&rho));
        assert!((qops::trace(&rho).re - 1.0).abs() < 1e-12);
        assert_eq!(qops::psd_rank(&rho), 3);

        let sep = random_separable_state(2, 3, 4, &mut rng);
        assert!(is_psd(&sep));
        assert!((qops::trace(&sep).re - 1.0).abs() < 1e-12);

        let p = random_stochastic(5, 3, &mut rng);
        for row in p {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            assert!(row.iter().all(|&v| v > 0.0));
        }
    }

    #[test]
    fn assemblage_validation_rejects_bad_input() {
        // Effects that do not sum to identity.
        let bad = vec![vec![identity(2) * C64::new(0.4, 0.0), identity(2) * C64::new(0.4, 0.0)]];
        assert!(MeasurementAssemblage::new(bad).is_err());
        // Non-PSD effect.
        let mut neg = identity(2);
        neg[(0, 0)] = C64::new(-0.5, 0.0);
        let comp = identity(2) * C64::new(2.0, 0.0) - &neg;
        assert!(MeasurementAssemblage::new(vec![vec![neg, comp - identity(2)]]).is_err());
    }
}
