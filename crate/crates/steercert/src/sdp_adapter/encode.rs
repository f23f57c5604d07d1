//! Coordinate conventions for moving between complex Hermitian operators and
//! the real vectors/cones the solver consumes.
//!
//! A Hermitian d×d operator is parametrized by d² real coordinates: the d
//! diagonal entries, then for each index pair i < j (column-major) the pair
//! (√2·Re X_ij, √2·Im X_ij). The scaling makes the map isometric for the
//! Hilbert–Schmidt inner product. Positive semidefiniteness is enforced only
//! at cone level, through the standard real symmetric embedding
//! [[Re X, −Im X], [Im X, Re X]], whose spectrum is the complex spectrum with
//! every eigenvalue doubled in multiplicity.

use nalgebra::DMatrix;

use crate::qops::{Operator, C64};

pub(crate) const SQRT2: f64 = std::f64::consts::SQRT_2;

/// Number of real coordinates parametrizing a Hermitian `dim`×`dim` operator.
pub fn herm_coord_len(dim: usize) -> usize {
    dim * dim
}

/// Length of the scaled-upper-triangle vectorization of a symmetric
/// `emb_dim`×`emb_dim` real matrix (the solver's PSD cone layout).
pub fn svec_len(emb_dim: usize) -> usize {
    emb_dim * (emb_dim + 1) / 2
}

/// Hermitian operator → real coordinates.
pub fn herm_to_coords(x: &Operator) -> Vec<f64> {
    let d = x.nrows();
    let mut out = Vec::with_capacity(d * d);
    for j in 0..d {
        out.push(x[(j, j)].re);
    }
    for j in 0..d {
        for i in 0..j {
            out.push(SQRT2 * x[(i, j)].re);
            out.push(SQRT2 * x[(i, j)].im);
        }
    }
    out
}

/// Real coordinates → Hermitian operator (exact inverse of
/// [`herm_to_coords`]; the output is Hermitian by construction).
pub fn coords_to_herm(dim: usize, coords: &[f64]) -> Operator {
    assert_eq!(coords.len(), herm_coord_len(dim));
    let mut x = Operator::zeros(dim, dim);
    for j in 0..dim {
        x[(j, j)] = C64::new(coords[j], 0.0);
    }
    let mut c = dim;
    for j in 0..dim {
        for i in 0..j {
            let re = coords[c] / SQRT2;
            let im = coords[c + 1] / SQRT2;
            c += 2;
            x[(i, j)] = C64::new(re, im);
            x[(j, i)] = C64::new(re, -im);
        }
    }
    x
}

/// The Hermitian basis element dual to coordinate `c` (so that
/// X = Σ_c coords[c] · basis_element(dim, c)).
pub fn basis_element(dim: usize, c: usize) -> Operator {
    let mut coords = vec![0.0; herm_coord_len(dim)];
    coords[c] = 1.0;
    coords_to_herm(dim, &coords)
}

/// Real symmetric embedding of a Hermitian operator:
/// [[Re X, −Im X], [Im X, Re X]], size 2d.
pub fn embed(x: &Operator) -> DMatrix<f64> {
    let d = x.nrows();
    let mut out = DMatrix::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let z = x[(i, j)];
            out[(i, j)] = z.re;
            out[(d + i, d + j)] = z.re;
            out[(i, d + j)] = -z.im;
            out[(d + i, j)] = z.im;
        }
    }
    out
}

/// Scaled upper-triangle vectorization of a symmetric real matrix, matching
/// the solver's PSD-triangle cone: column-major upper triangle, off-diagonal
/// entries multiplied by √2.
pub fn sym_to_svec(s: &DMatrix<f64>) -> Vec<f64> {
    let m = s.nrows();
    let mut out = Vec::with_capacity(svec_len(m));
    for j in 0..m {
        for i in 0..=j {
            out.push(if i == j { s[(j, j)] } else { SQRT2 * s[(i, j)] });
        }
    }
    out
}

/// Inverse of [`sym_to_svec`].
pub fn svec_to_sym(emb_dim: usize, v: &[f64]) -> DMatrix<f64> {
    assert_eq!(v.len(), svec_len(emb_dim));
    let mut s = DMatrix::zeros(emb_dim, emb_dim);
    let mut c = 0;
    for j in 0..emb_dim {
        for i in 0..=j {
            if i == j {
                s[(j, j)] = v[c];
            } else {
                s[(i, j)] = v[c] / SQRT2;
                s[(j, i)] = v[c] / SQRT2;
            }
            c += 1;
        }
    }
    s
}

/// Hermitian operator → svec of its real embedding (a PSD-cone row vector).
pub fn herm_to_emb_svec(x: &Operator) -> Vec<f64> {
    sym_to_svec(&embed(x))
}

/// Sparse column: (local row, value) pairs.
pub type SparseCol = Vec<(usize, f64)>;

/// One sparse column per input coordinate of a linear map.
#[derive(Debug, Clone)]
pub struct ColSet {
    /// Complex dimension of the map's output space.
    pub out_dim: usize,
    /// Number of local rows each column spans.
    pub n_rows: usize,
    pub cols: Vec<SparseCol>,
}

const DROP_TOL: f64 = 1e-14;

fn sparsify(dense: &[f64]) -> SparseCol {
    dense
        .iter()
        .enumerate()
        .filter(|(_, v)| v.abs() > DROP_TOL)
        .map(|(i, &v)| (i, v))
        .collect()
}

/// Columns of a Hermitian-to-Hermitian linear map in Hermitian coordinates
/// (rows indexed like [`herm_to_coords`] of the output).
pub fn herm_map_columns(in_dim: usize, map: impl Fn(&Operator) -> Operator) -> ColSet {
    let n_in = herm_coord_len(in_dim);
    let mut cols = Vec::with_capacity(n_in);
    let mut out_dim = 0;
    for c in 0..n_in {
        let image = map(&basis_element(in_dim, c));
        out_dim = image.nrows();
        cols.push(sparsify(&herm_to_coords(&image)));
    }
    ColSet { out_dim, n_rows: herm_coord_len(out_dim), cols }
}

/// Columns of a Hermitian-to-Hermitian linear map with rows in the PSD-cone
/// layout (svec of the real embedding of the output).
pub fn psd_map_columns(in_dim: usize, map: impl Fn(&Operator) -> Operator) -> ColSet {
    let n_in = herm_coord_len(in_dim);
    let mut cols = Vec::with_capacity(n_in);
    let mut out_dim = 0;
    for c in 0..n_in {
        let image = map(&basis_element(in_dim, c));
        out_dim = image.nrows();
        cols.push(sparsify(&herm_to_emb_svec(&image)));
    }
    ColSet { out_dim, n_rows: svec_len(2 * out_dim), cols }
}
