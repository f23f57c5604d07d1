//! Complex operator algebra: tensor products, partial traces, partial
//! transposes, and spectral utilities for Hermitian operators.
//!
//! Everything downstream (assemblages, steering maps, SDP data) is built from
//! dense complex square matrices; dimensions in scope stay ≤ 3⁵ = 243, so no
//! sparsity is exploited. All functions are pure.

use nalgebra::{Complex, DMatrix};
use thiserror::Error;

use crate::tol::{RANK_TOL_REL, TOL_HERM, TOL_PSD};

/// Complex scalar used throughout.
pub type C64 = Complex<f64>;

/// Dense complex square matrix: the universal carrier for states, effects,
/// joint-observable blocks, and their extensions.
pub type Operator = DMatrix<C64>;

/// Errors from operator-algebra operations.
#[derive(Debug, Error)]
pub enum QopsError {
    /// A factor shape's total dimension does not match the operator it annotates.
    #[error("factor shape {shape:?} has total dimension {expected}, operator has dimension {found}")]
    ShapeMismatch {
        shape: Vec<usize>,
        expected: usize,
        found: usize,
    },
    /// A factor index set referenced a factor outside the shape, or was empty
    /// where a non-empty set is required.
    #[error("invalid factor subset {subset:?} for a {n_factors}-factor shape")]
    BadFactorSubset { subset: Vec<usize>, n_factors: usize },
    /// The operator was expected to be Hermitian but is not, within tolerance.
    #[error("operator is not Hermitian (max asymmetry {asymmetry:.3e})")]
    NotHermitian { asymmetry: f64 },
    /// The operator was expected to be PSD but has a negative eigenvalue
    /// beyond tolerance.
    #[error("operator is not positive semidefinite (min eigenvalue {min_eig:.3e})")]
    NotPsd { min_eig: f64 },
}

/// Ordered local dimensions of the tensor factors an operator acts on.
///
/// Encodes factorizations such as A ⊗ B₁ ⊗ B₂ for partial traces/transposes;
/// factor 0 is the most significant index (Kronecker convention).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FactorShape {
    dims: Vec<usize>,
}

impl FactorShape {
    /// A shape from local dimensions; every dimension must be ≥ 1.
    pub fn new(dims: impl Into<Vec<usize>>) -> Self {
        let dims = dims.into();
        assert!(
            !dims.is_empty() && dims.iter().all(|&d| d >= 1),
            "factor dimensions must be positive"
        );
        Self { dims }
    }

    /// `k` factors of equal local dimension `d`.
    pub fn uniform(d: usize, k: usize) -> Self {
        Self::new(vec![d; k])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn n_factors(&self) -> usize {
        self.dims.len()
    }

    /// Product of the local dimensions.
    pub fn total_dim(&self) -> usize {
        self.dims.iter().product()
    }

    /// Row-major strides: factor 0 varies slowest.
    pub(crate) fn strides(&self) -> Vec<usize> {
        let mut s = vec![1; self.dims.len()];
        for f in (0..self.dims.len().saturating_sub(1)).rev() {
            s[f] = s[f + 1] * self.dims[f + 1];
        }
        s
    }

    fn check_operator(&self, x: &Operator) -> Result<(), QopsError> {
        if x.nrows() != x.ncols() || x.nrows() != self.total_dim() {
            return Err(QopsError::ShapeMismatch {
                shape: self.dims.clone(),
                expected: self.total_dim(),
                found: x.nrows(),
            });
        }
        Ok(())
    }

    pub(crate) fn check_subset(&self, subset: &[usize]) -> Result<(), QopsError> {
        if subset.is_empty()
            || subset.iter().any(|&f| f >= self.dims.len())
            || (1..subset.len()).any(|i| subset[i..].contains(&subset[i - 1]))
        {
            return Err(QopsError::BadFactorSubset {
                subset: subset.to_vec(),
                n_factors: self.dims.len(),
            });
        }
        Ok(())
    }
}

/// d×d identity operator.
pub fn identity(d: usize) -> Operator {
    DMatrix::identity(d, d)
}

/// Kronecker (tensor) product, factor `x` most significant.
pub fn kron(x: &Operator, y: &Operator) -> Operator {
    let (rx, cx, ry, cy) = (x.nrows(), x.ncols(), y.nrows(), y.ncols());
    let mut out = DMatrix::zeros(rx * ry, cx * cy);
    for i in 0..rx {
        for j in 0..cx {
            let v = x[(i, j)];
            if v != C64::new(0.0, 0.0) {
                for p in 0..ry {
                    for q in 0..cy {
                        out[(i * ry + p, j * cy + q)] = v * y[(p, q)];
                    }
                }
            }
        }
    }
    out
}

/// Tensor product of a sequence of factors, left to right.
pub fn kron_all(factors: &[Operator]) -> Operator {
    assert!(!factors.is_empty());
    let mut out = factors[0].clone();
    for f in &factors[1..] {
        out = kron(&out, f);
    }
    out
}

/// Trace as a complex scalar.
pub fn trace(x: &Operator) -> C64 {
    x.diagonal().sum()
}

/// Hilbert–Schmidt inner product tr[x† y].
pub fn hs_inner(x: &Operator, y: &Operator) -> C64 {
    x.iter().zip(y.iter()).map(|(a, b)| a.conj() * b).sum()
}

/// Frobenius (Hilbert–Schmidt) norm.
pub fn hs_norm(x: &Operator) -> f64 {
    x.iter().map(|a| a.norm_sqr()).sum::<f64>().sqrt()
}

/// Max entrywise deviation from Hermiticity, max |X − X†|.
pub fn herm_asymmetry(x: &Operator) -> f64 {
    let mut worst: f64 = 0.0;
    for i in 0..x.nrows() {
        for j in 0..x.ncols() {
            worst = worst.max((x[(i, j)] - x[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Hermitian within `TOL_HERM`.
pub fn is_hermitian(x: &Operator) -> bool {
    x.nrows() == x.ncols() && herm_asymmetry(x) <= TOL_HERM
}

/// (X + X†)/2 — suppresses floating-point asymmetry before spectral work or
/// SDP encoding.
pub fn hermitize(x: &Operator) -> Operator {
    (x + x.adjoint()) * C64::new(0.5, 0.0)
}

/// Eigendecomposition of a Hermitian operator: eigenvalues ascending, with
/// matching orthonormal eigenvector columns.
pub fn herm_eigen(x: &Operator) -> (Vec<f64>, Operator) {
    let se = nalgebra::SymmetricEigen::new(hermitize(x));
    let mut order: Vec<usize> = (0..se.eigenvalues.len()).collect();
    order.sort_by(|&a, &b| se.eigenvalues[a].total_cmp(&se.eigenvalues[b]));
    let vals: Vec<f64> = order.iter().map(|&i| se.eigenvalues[i]).collect();
    let vecs = Operator::from_columns(
        &order
            .iter()
            .map(|&i| se.eigenvectors.column(i).into_owned())
            .collect::<Vec<_>>(),
    );
    (vals, vecs)
}

/// Eigenvalues of a Hermitian operator, ascending.
pub fn eigvalsh(x: &Operator) -> Vec<f64> {
    let se = nalgebra::SymmetricEigen::new(hermitize(x));
    let mut v: Vec<f64> = se.eigenvalues.iter().copied().collect();
    v.sort_by(f64::total_cmp);
    v
}

/// Minimum eigenvalue of a Hermitian operator.
pub fn min_eig(x: &Operator) -> f64 {
    eigvalsh(x)[0]
}

/// Hermitian with minimum eigenvalue ≥ −`TOL_PSD`.
pub fn is_psd(x: &Operator) -> bool {
    is_hermitian(x) && min_eig(x) >= -TOL_PSD
}

/// Partial trace over the factors *not* listed in `keep`; the kept factors
/// retain their relative order. Preserves the trace.
pub fn partial_trace(
    x: &Operator,
    shape: &FactorShape,
    keep: &[usize],
) -> Result<Operator, QopsError> {
    shape.check_operator(x)?;
    shape.check_subset(keep)?;
    let dims = shape.dims();
    let strides = shape.strides();
    let mut keep = keep.to_vec();
    keep.sort_unstable();
    let drop: Vec<usize> = (0..dims.len()).filter(|f| !keep.contains(f)).collect();

    let d_keep: usize = keep.iter().map(|&f| dims[f]).product();
    let d_drop: usize = drop.iter().map(|&f| dims[f]).product();
    let mut out = DMatrix::zeros(d_keep, d_keep);

    // Decompose a flat result index into per-kept-factor indices once per call.
    let flat_to_offset = |subset: &[usize], mut idx: usize| -> usize {
        let mut offset = 0;
        for &f in subset.iter().rev() {
            offset += (idx % dims[f]) * strides[f];
            idx /= dims[f];
        }
        offset
    };

    let keep_row: Vec<usize> = (0..d_keep).map(|i| flat_to_offset(&keep, i)).collect();
    let drop_off: Vec<usize> = (0..d_drop).map(|r| flat_to_offset(&drop, r)).collect();

    for i in 0..d_keep {
        for j in 0..d_keep {
            let mut acc = C64::new(0.0, 0.0);
            for &r in &drop_off {
                acc += x[(keep_row[i] + r, keep_row[j] + r)];
            }
            out[(i, j)] = acc;
        }
    }
    Ok(out)
}

/// Transpose applied to the listed factors only. Involutive; `subset` = all
/// factors reproduces the plain transpose.
pub fn partial_transpose(
    x: &Operator,
    shape: &FactorShape,
    subset: &[usize],
) -> Result<Operator, QopsError> {
    shape.check_operator(x)?;
    shape.check_subset(subset)?;
    let dims = shape.dims();
    let strides = shape.strides();
    let d = shape.total_dim();

    // For each flat index, precompute its component within the transposed
    // factors (as an offset) and the untouched remainder.
    let mut sub_offset = vec![0usize; d];
    for idx in 0..d {
        let mut off = 0;
        for &f in subset {
            off += (idx / strides[f] % dims[f]) * strides[f];
        }
        sub_offset[idx] = off;
    }

    let mut out = DMatrix::zeros(d, d);
    for i in 0..d {
        for j in 0..d {
            let ni = i - sub_offset[i] + sub_offset[j];
            let nj = j - sub_offset[j] + sub_offset[i];
            out[(ni, nj)] = x[(i, j)];
        }
    }
    Ok(out)
}

/// Support projector and pseudo-inverse square root of a PSD operator.
///
/// Returns `(Π, S)` where Π projects onto the span of eigenvectors with
/// eigenvalue > `RANK_TOL_REL · λ_max` and `S = x^{−1/2}` on that support, so
/// that `S · x · S = Π` up to tolerance.
pub fn psd_sqrt_pinv(x: &Operator) -> Result<(Operator, Operator), QopsError> {
    let asym = herm_asymmetry(x);
    if asym > TOL_HERM {
        return Err(QopsError::NotHermitian { asymmetry: asym });
    }
    let (vals, vecs) = herm_eigen(x);
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    if vals[0] < -TOL_PSD.max(RANK_TOL_REL * lam_max) {
        return Err(QopsError::NotPsd { min_eig: vals[0] });
    }
    let cutoff = RANK_TOL_REL * lam_max;
    let d = x.nrows();
    let mut proj = DMatrix::zeros(d, d);
    let mut pinv_sqrt = DMatrix::zeros(d, d);
    for (idx, &lam) in vals.iter().enumerate() {
        if lam > cutoff {
            let v = vecs.column(idx);
            let outer = &v * v.adjoint();
            proj += &outer;
            pinv_sqrt += outer * C64::new(1.0 / lam.sqrt(), 0.0);
        }
    }
    Ok((proj, pinv_sqrt))
}

/// Numerical rank of a PSD operator under the same cutoff as
/// [`psd_sqrt_pinv`].
pub fn psd_rank(x: &Operator) -> usize {
    let vals = eigvalsh(x);
    let lam_max = vals.last().copied().unwrap_or(0.0).max(0.0);
    let cutoff = RANK_TOL_REL * lam_max;
    vals.iter().filter(|&&v| v > cutoff).count()
}

#[cfg(test)]
mod tests {
    use super::*;

    pub(crate) fn approx_eq(x: &Operator, y: &Operator, tol: f64) -> bool {
        x.nrows() == y.nrows()
            && x.ncols() == y.ncols()
            && x.iter().zip(y.iter()).all(|(a, b)| (a - b).norm() <= tol)
    }

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn sigma_x() -> Operator {
        Operator::from_row_slice(2, 2, &[c(0., 0.), c(1., 0.), c(1., 0.), c(0., 0.)])
    }

    fn sigma_y() -> Operator {
        Operator::from_row_slice(2, 2, &[c(0., 0.), c(0., -1.), c(0., 1.), c(0., 0.)])
    }

    fn diag(entries: &[f64]) -> Operator {
        Operator::from_diagonal(&nalgebra::DVector::from_iterator(
            entries.len(),
            entries.iter().map(|&e| c(e, 0.)),
        ))
    }

    /// |Φ⁺⟩⟨Φ⁺| on C^d ⊗ C^d.
    fn mes_projector(d: usize) -> Operator {
        let mut out = Operator::zeros(d * d, d * d);
        for i in 0..d {
            for j in 0..d {
                out[(i * d + i, j * d + j)] = c(1.0 / d as f64, 0.0);
            }
        }
        out
    }

    #[test]
    fn kron_identities() {
        assert!(approx_eq(&kron(&identity(2), &identity(2)), &identity(4), 0.0));
        assert!(approx_eq(
            &kron(&diag(&[1., 0.]), &diag(&[0., 1.])),
            &diag(&[0., 1., 0., 0.]),
            0.0
        ));
    }

    #[test]
    fn kron_associative_three_factors() {
        let (a, b, z) = (sigma_x(), sigma_y(), diag(&[2., -1.]));
        let left = kron(&kron(&a, &b), &z);
        let right = kron(&a, &kron(&b, &z));
        assert!(approx_eq(&left, &right, 0.0));
    }

    #[test]
    fn partial_trace_product_operators() {
        let a = sigma_x() + diag(&[3., 1.]);
        let b = diag(&[2., 5.]);
        let shape = FactorShape::new([2, 2]);
        let got = partial_trace(&kron(&a, &b), &shape, &[0]).unwrap();
        assert!(approx_eq(&got, &(&a * c(7., 0.)), 1e-12));
        let got = partial_trace(&kron(&a, &b), &shape, &[1]).unwrap();
        assert!(approx_eq(&got, &(&b * c(4., 0.)), 1e-12));
    }

    #[test]
    fn mes_marginal_is_maximally_mixed() {
        let shape = FactorShape::new([2, 2]);
        let got = partial_trace(&mes_projector(2), &shape, &[1]).unwrap();
        assert!(approx_eq(&got, &(identity(2) * c(0.5, 0.)), 1e-12));
    }

    #[test]
    fn partial_trace_preserves_trace_tripartite() {
        let shape = FactorShape::new([2, 3, 2]);
        let x = random_psd(12, 7);
        for keep in [vec![0], vec![1], vec![2], vec![0, 2], vec![1, 2]] {
            let r = partial_trace(&x, &shape, &keep).unwrap();
            assert!((trace(&r) - trace(&x)).norm() < 1e-10);
        }
    }

    #[test]
    fn partial_transpose_on_products() {
        let a = sigma_y() + diag(&[1., 4.]);
        let b = sigma_x() + diag(&[0., 2.]);
        let shape = FactorShape::new([2, 2]);
        let got = partial_transpose(&kron(&a, &b), &shape, &[0]).unwrap();
        assert!(approx_eq(&got, &kron(&a.transpose(), &b), 0.0));
    }

    #[test]
    fn mes_partial_transpose_witnesses_entanglement() {
        // Oracle: the partially transposed two-qubit maximally entangled
        // projector has spectrum {−1/2, 1/2, 1/2, 1/2}.
        let shape = FactorShape::new([2, 2]);
        let pt = partial_transpose(&mes_projector(2), &shape, &[0]).unwrap();
        let vals = eigvalsh(&pt);
        assert!((vals[0] + 0.5).abs() < 1e-12);
        assert!(vals[1..].iter().all(|&v| (v - 0.5).abs() < 1e-12));
    }

    #[test]
    fn separable_mixture_stays_psd_under_partial_transpose() {
        let shape = FactorShape::new([2, 2]);
        let mix = kron(&diag(&[0.3, 0.2]), &diag(&[0.25, 0.25]))
            + kron(&diag(&[0.1, 0.4]), &diag(&[0.4, 0.1]));
        let pt = partial_transpose(&mix, &shape, &[1]).unwrap();
        assert!(is_psd(&pt));
    }

    #[test]
    fn global_partial_transpose_is_plain_transpose() {
        let shape = FactorShape::new([2, 3]);
        let x = random_herm(6, 3);
        let got = partial_transpose(&x, &shape, &[0, 1]).unwrap();
        assert!(approx_eq(&got, &x.transpose(), 0.0));
    }

    #[test]
    fn psd_sqrt_pinv_closed_forms() {
        let (proj, s) = psd_sqrt_pinv(&identity(3)).unwrap();
        assert!(approx_eq(&proj, &identity(3), 1e-12));
        assert!(approx_eq(&s, &identity(3), 1e-12));

        let (proj, s) = psd_sqrt_pinv(&diag(&[4., 0.])).unwrap();
        assert!(approx_eq(&proj, &diag(&[1., 0.]), 1e-12));
        assert!(approx_eq(&s, &diag(&[0.5, 0.]), 1e-12));
    }

    #[test]
    fn psd_sqrt_pinv_rejects_indefinite() {
        assert!(matches!(
            psd_sqrt_pinv(&diag(&[1., -1.])),
            Err(QopsError::NotPsd { .. })
        ));
    }

    pub(crate) fn random_herm(d: usize, seed: u64) -> Operator {
        // Small deterministic LCG; adequate for generic test matrices.
        let mut state = seed.wrapping_mul(6364136223846793005).wrapping_add(1);
        let mut next = || {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            ((state >> 11) as f64 / (1u64 << 53) as f64) * 2.0 - 1.0
        };
        let raw = Operator::from_fn(d, d, |_, _| c(next(), next()));
        hermitize(&raw)
    }

    pub(crate) fn random_psd(d: usize, seed: u64) -> Operator {
        let h = random_herm(d, seed);
        hermitize(&(&h * h.adjoint()))
    }

    /// Rank-deficient PSD built from a thin factor.
    fn random_psd_rank(d: usize, rank: usize, seed: u64) -> Operator {
        let h = random_herm(d, seed);
        let thin = h.columns(0, rank).into_owned();
        hermitize(&(&thin * thin.adjoint()))
    }

    #[test]
    fn pseudo_inverse_identities_on_support() {
        for (dim, rank, seed) in [(4, 2, 1u64), (6, 3, 2), (9, 5, 3), (5, 5, 4), (3, 1, 5)] {
            let x = random_psd_rank(dim, rank, seed);
            let (proj, s) = psd_sqrt_pinv(&x).unwrap();
            // S X S = Π, Π X = X, S Π = S — the Moore–Penrose-style triple.
            assert!(approx_eq(&(&s * &x * &s), &proj, 1e-10), "dim {dim} rank {rank}");
            assert!(approx_eq(&(&proj * &x), &x, 1e-10));
            assert!(approx_eq(&(&s * &proj), &s, 1e-10));
            assert_eq!(psd_rank(&x), rank);
        }
    }

    #[test]
    fn partial_transpose_involution_exact() {
        let shape = FactorShape::new([2, 2, 3]);
        let x = random_herm(12, 11);
        for subset in [vec![0], vec![1], vec![2], vec![0, 2]] {
            let once = partial_transpose(&x, &shape, &subset).unwrap();
            let twice = partial_transpose(&once, &shape, &subset).unwrap();
            // Pure index permutation: equality must be exact, not approximate.
            assert_eq!(x, twice);
        }
    }

    #[test]
    fn shape_errors_are_reported() {
        let shape = FactorShape::new([2, 2]);
        let x = identity(3);
        assert!(matches!(
            partial_trace(&x, &shape, &[0]),
            Err(QopsError::ShapeMismatch { .. })
        ));
        let x = identity(4);
        assert!(matches!(
            partial_trace(&x, &shape, &[]),
            Err(QopsError::BadFactorSubset { .. })
        ));
        assert!(matches!(
            partial_transpose(&x, &shape, &[2]),
            Err(QopsError::BadFactorSubset { .. })
        ));
    }
}
