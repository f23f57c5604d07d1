//! Block diagonalization of operators commuting with a finite unitary group.
//!
//! The joint-observable variables below may be restricted, without loss, to
//! operators invariant under certain factor permutations (copy permutations
//! for the lifted effects, duplicate swaps for extension variables). The
//! invariant algebra decomposes as ⊕_c 1_{f_c} ⊗ L(C^{m_c}); parametrizing
//! each block by an m_c × m_c Hermitian replaces one large PSD cone by small
//! ones and shrinks equality bookkeeping accordingly.
//!
//! The decomposition is computed numerically: eigenspaces ("fibers") of a
//! generic invariant Hermitian are grouped into isotypic components by their
//! connectivity under a second invariant Hermitian, and fiber bases are
//! aligned by transporting a reference fiber through that operator. The
//! construction is seeded and deterministic, re-randomizes on degeneracy, and
//! self-validates (round trips and invariance to 1e−10) before being used.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::qops::{hermitize, hs_norm, FactorShape, Operator, QopsError, C64};

/// Unitary that relabels tensor factors: column |u⟩ maps to |v⟩ with
/// v[p] = u[perm[p]]. `perm` must be a permutation of the factor indices.
pub fn factor_permutation(shape: &FactorShape, perm: &[usize]) -> Result<Operator, QopsError> {
    shape.check_subset(perm)?;
    let mut seen = vec![false; shape.n_factors()];
    for &p in perm {
        seen[p] = true;
    }
    if perm.len() != shape.n_factors() || seen.iter().any(|s| !s) {
        return Err(QopsError::BadFactorSubset {
            n_factors: shape.n_factors(),
            subset: perm.to_vec(),
        });
    }
    let dims = shape.dims();
    let strides = shape.strides();
    // The image lives on the factor-reordered space, whose strides follow the
    // permuted dimension list.
    let out_shape = FactorShape::new(perm.iter().map(|&p| dims[p]).collect::<Vec<_>>());
    let out_strides = out_shape.strides();
    let d = shape.total_dim();
    let mut out = Operator::zeros(d, d);
    for col in 0..d {
        let mut row = 0;
        for (p, &src) in perm.iter().enumerate() {
            row += (col / strides[src] % dims[src]) * out_strides[p];
        }
        out[(row, col)] = C64::new(1.0, 0.0);
    }
    Ok(out)
}

pub(crate) fn permutations(k: usize) -> Vec<Vec<usize>> {
    if k == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for shorter in permutations(k - 1) {
        for slot in 0..k {
            let mut perm = shorter.clone();
            perm.insert(slot, k - 1);
            out.push(perm);
        }
    }
    out
}

/// All k! copy-permutation unitaries on a uniform k-factor space.
pub fn copy_permutation_group(shape: &FactorShape) -> Vec<Operator> {
    permutations(shape.n_factors())
        .iter()
        .map(|p| factor_permutation(shape, p).expect("permutation of all factors"))
        .collect()
}

/// Copy permutations acting on the listed factors only (identity elsewhere).
pub fn copy_permutation_subgroup(shape: &FactorShape, moved: &[usize]) -> Vec<Operator> {
    permutations(moved.len())
        .iter()
        .map(|p| {
            let mut perm: Vec<usize> = (0..shape.n_factors()).collect();
            for (slot, &src) in p.iter().enumerate() {
                perm[moved[slot]] = moved[src];
            }
            factor_permutation(shape, &perm).expect("permutation of all factors")
        })
        .collect()
}

/// The 2^{n_pairs} unitaries generated by swapping disjoint factor pairs.
pub fn pair_swap_group(shape: &FactorShape, pairs: &[(usize, usize)]) -> Vec<Operator> {
    let mut out = Vec::with_capacity(1 << pairs.len());
    for mask in 0..1usize << pairs.len() {
        let mut perm: Vec<usize> = (0..shape.n_factors()).collect();
        for (i, &(a, b)) in pairs.iter().enumerate() {
            if mask >> i & 1 == 1 {
                perm.swap(a, b);
            }
        }
        out.push(factor_permutation(shape, &perm).expect("permutation of all factors"));
    }
    out
}

/// Direct product of the full symmetric groups on disjoint factor-position
/// sets: all ways of permuting each set internally. For sets of size 2 this
/// coincides with [`pair_swap_group`].
pub fn duplicate_permutation_group(shape: &FactorShape, sets: &[Vec<usize>]) -> Vec<Operator> {
    let per_set: Vec<Vec<Vec<usize>>> = sets.iter().map(|s| permutations(s.len())).collect();
    let mut out = Vec::new();
    let mut choice = vec![0usize; sets.len()];
    loop {
        let mut perm: Vec<usize> = (0..shape.n_factors()).collect();
        for (i, set) in sets.iter().enumerate() {
            for (slot, &src) in per_set[i][choice[i]].iter().enumerate() {
                perm[set[slot]] = set[src];
            }
        }
        out.push(factor_permutation(shape, &perm).expect("permutation of all factors"));
        // Odometer over the per-set permutation choices.
        let mut i = 0;
        loop {
            if i == sets.len() {
                return out;
            }
            choice[i] += 1;
            if choice[i] < per_set[i].len() {
                break;
            }
            choice[i] = 0;
            i += 1;
        }
    }
}

/// Group average (1/|G|) Σ_g g X g† — the projection onto the invariant
/// algebra.
pub fn twirl(group: &[Operator], x: &Operator) -> Operator {
    let mut acc = Operator::zeros(x.nrows(), x.ncols());
    for g in group {
        acc += g * x * g.adjoint();
    }
    acc * C64::new(1.0 / group.len() as f64, 0.0)
}

/// One isotypic component: `fibers[i]` is a dim × m isometry, and the
/// invariant block it carries is Σ_i V_i H V_i† for an m × m Hermitian H.
#[derive(Debug, Clone)]
pub struct CommutantComponent {
    fibers: Vec<Operator>,
}

impl CommutantComponent {
    /// Block dimension m (the size of the Hermitian SDP variable).
    pub fn block_dim(&self) -> usize {
        self.fibers[0].ncols()
    }

    /// Irrep dimension f (how many copies of the block appear).
    pub fn fiber_count(&self) -> usize {
        self.fibers.len()
    }

    pub fn assemble(&self, h: &Operator) -> Operator {
        let mut out = Operator::zeros(self.fibers[0].nrows(), self.fibers[0].nrows());
        for v in &self.fibers {
            out += v * h * v.adjoint();
        }
        out
    }

    pub fn extract(&self, x: &Operator) -> Operator {
        let mut out = Operator::zeros(self.block_dim(), self.block_dim());
        for v in &self.fibers {
            out += v.adjoint() * x * v;
        }
        out * C64::new(1.0 / self.fibers.len() as f64, 0.0)
    }

    /// Precompute the action h ↦ extract(U · assemble(h) · U†) for a unitary
    /// U that commutes with the whole group (so the conjugation maps this
    /// component to itself). Expanding both maps gives
    /// (1/f) Σ_{j,j'} W_{jj'} h W_{jj'}† with small W_{jj'} = V_j† U V_{j'},
    /// which avoids ever touching the full-dimensional space again.
    pub fn conjugation(&self, u: &Operator) -> ComponentConjugation {
        let w = self
            .fibers
            .iter()
            .map(|vj| self.fibers.iter().map(|vjp| vj.adjoint() * u * vjp).collect())
            .collect();
        ComponentConjugation { w, inv_f: 1.0 / self.fibers.len() as f64 }
    }
}

/// See [`CommutantComponent::conjugation`].
#[derive(Debug, Clone)]
pub struct ComponentConjugation {
    w: Vec<Vec<Operator>>,
    inv_f: f64,
}

impl ComponentConjugation {
    pub fn apply(&self, h: &Operator) -> Operator {
        let m = h.nrows();
        let mut acc = Operator::zeros(m, m);
        for row in &self.w {
            for wij in row {
                acc += wij * h * wij.adjoint();
            }
        }
        acc * C64::new(self.inv_f, 0.0)
    }
}

/// The full block structure of a group's invariant algebra.
#[derive(Debug, Clone)]
pub struct CommutantStructure {
    dim: usize,
    components: Vec<CommutantComponent>,
}

const CLUSTER_GAP_REL: f64 = 1e-7;
const CONNECT_TOL_REL: f64 = 1e-6;
const VALIDATE_TOL: f64 = 1e-9;

impl CommutantStructure {
    /// Build and self-validate the structure for a unitary representation
    /// given as the full list of group elements (identity included).
    /// Deterministic for a fixed seed; panics only if the input is not a
    /// unitary representation (every randomized attempt fails validation).
    pub fn new(group: &[Operator], seed: u64) -> Self {
        assert!(!group.is_empty(), "group must contain at least the identity");
        let dim = group[0].nrows();
        for attempt in 0..8 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt * 0x9E37_79B9));
            if let Some(s) = Self::try_build(group, dim, &mut rng) {
                if s.validate(group, &mut rng) {
                    return s;
                }
            }
        }
        panic!("commutant structure construction failed; input is not a unitary representation");
    }

    fn try_build(group: &[Operator], dim: usize, rng: &mut ChaCha8Rng) -> Option<Self> {
        let r = twirl(group, &random_herm(dim, rng));
        let y = twirl(group, &random_herm(dim, rng));
        let y_scale = hs_norm(&y).max(1e-300);

        // Fibers: eigenspaces of the generic invariant operator R. Distinct
        // eigenvalues of the same block give distinct fibers; the f-fold
        // isotypic repetition makes each eigenvalue exactly f-fold degenerate.
        let (vals, vecs) = crate::qops::herm_eigen(&r);
        let spread = vals.iter().fold(0.0f64, |m, v| m.max(v.abs())).max(1e-300);
        let mut fibers: Vec<Operator> = Vec::new();
        let mut start = 0;
        for i in 0..dim {
            if i + 1 == dim || vals[i + 1] - vals[i] > CLUSTER_GAP_REL * spread {
                fibers.push(vecs.columns(start, i + 1 - start).into_owned());
                start = i + 1;
            }
        }

        // Group fibers into isotypic components: a second invariant operator
        // has exactly zero matrix elements between different components, and
        // generically nonzero ones within a component.
        let n = fibers.len();
        let mut component_of: Vec<usize> = (0..n).collect();
        fn root(c: &mut Vec<usize>, mut i: usize) -> usize {
            while c[i] != i {
                c[i] = c[c[i]];
                i = c[i];
            }
            i
        }
        let y_images: Vec<Operator> = fibers.iter().map(|u| &y * u).collect();
        for i in 0..n {
            for j in i + 1..n {
                let cross = fibers[i].adjoint() * &y_images[j];
                if cross.iter().any(|e| e.norm() > CONNECT_TOL_REL * y_scale) {
                    let (ri, rj) = (root(&mut component_of, i), root(&mut component_of, j));
                    component_of[ri.max(rj)] = ri.min(rj);
                }
            }
        }

        let mut groups: Vec<Vec<usize>> = Vec::new();
        let mut root_index: Vec<Option<usize>> = vec![None; n];
        for i in 0..n {
            let r = root(&mut component_of, i);
            match root_index[r] {
                Some(gi) => groups[gi].push(i),
                None => {
                    root_index[r] = Some(groups.len());
                    groups.push(vec![i]);
                }
            }
        }

        let mut components = Vec::with_capacity(groups.len());
        for members in groups {
            let f = fibers[members[0]].ncols();
            if members.iter().any(|&i| fibers[i].ncols() != f) {
                return None; // accidental eigenvalue collision — resample
            }
            // Align every fiber's basis to the first one: transporting the
            // reference basis through the invariant operator Y scales it by a
            // single scalar per fiber, so normalizing restores an aligned
            // orthonormal basis.
            let reference = &fibers[members[0]];
            let mut aligned: Vec<Operator> = vec![reference.clone()];
            for &i in &members[1..] {
                let w = &fibers[i] * (fibers[i].adjoint() * (&y * reference));
                let c = w.column(0).norm();
                if c < CONNECT_TOL_REL * y_scale {
                    return None; // transport coefficient vanished — resample
                }
                let basis = w * C64::new(1.0 / c, 0.0);
                let gram = basis.adjoint() * &basis;
                let gram_err = (0..f)
                    .flat_map(|a| (0..f).map(move |b| (a, b)))
                    .map(|(a, b)| (gram[(a, b)] - if a == b { C64::new(1.0, 0.0) } else { C64::new(0.0, 0.0) }).norm())
                    .fold(0.0f64, f64::max);
                if gram_err > 1e-7 {
                    return None;
                }
                aligned.push(basis);
            }
            // Fiber isometry i collects column i of every aligned basis.
            let m = members.len();
            let fibers_out = (0..f)
                .map(|i| {
                    let mut v = Operator::zeros(dim, m);
                    for (j, basis) in aligned.iter().enumerate() {
                        v.set_column(j, &basis.column(i));
                    }
                    v
                })
                .collect();
            components.push(CommutantComponent { fibers: fibers_out });
        }
        components.sort_by_key(|c| std::cmp::Reverse(c.block_dim()));
        Some(Self { dim, components })
    }

    fn validate(&self, group: &[Operator], rng: &mut ChaCha8Rng) -> bool {
        let counted: usize =
            self.components.iter().map(|c| c.block_dim() * c.fiber_count()).sum();
        if counted != self.dim {
            return false;
        }
        // Assembled operators must be invariant and round-trip through
        // extraction; generic invariant operators must be reachable.
        let blocks: Vec<Operator> =
            self.components.iter().map(|c| random_herm(c.block_dim(), rng)).collect();
        let x = self.assemble(&blocks);
        let scale = hs_norm(&x).max(1e-300);
        for g in group {
            if hs_norm(&(g * &x * g.adjoint() - &x)) > VALIDATE_TOL * scale {
                return false;
            }
        }
        for (c, h) in self.components.iter().zip(&blocks) {
            if hs_norm(&(c.extract(&x) - h)) > VALIDATE_TOL * hs_norm(h).max(1e-300) {
                return false;
            }
        }
        let t = twirl(group, &random_herm(self.dim, rng));
        let assembled = self.assemble(&self.extract(&t));
        hs_norm(&(assembled - &t)) <= VALIDATE_TOL * hs_norm(&t).max(1e-300)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn components(&self) -> &[CommutantComponent] {
        &self.components
    }

    pub fn block_dims(&self) -> Vec<usize> {
        self.components.iter().map(|c| c.block_dim()).collect()
    }

    /// Total real parameter count Σ m_c² of the invariant algebra.
    pub fn coord_dim(&self) -> usize {
        self.components.iter().map(|c| c.block_dim() * c.block_dim()).sum()
    }

    pub fn assemble(&self, blocks: &[Operator]) -> Operator {
        let mut out = Operator::zeros(self.dim, self.dim);
        for (c, h) in self.components.iter().zip(blocks) {
            out += c.assemble(h);
        }
        out
    }

    pub fn extract(&self, x: &Operator) -> Vec<Operator> {
        self.components.iter().map(|c| c.extract(x)).collect()
    }

    /// Index of the component on which the group acts trivially (the
    /// symmetric-subspace component), if present.
    pub fn symmetric_component(&self, group: &[Operator]) -> Option<usize> {
        self.components.iter().position(|c| {
            c.fibers.iter().all(|v| {
                group.iter().all(|g| hs_norm(&(g * v - v)) <= 1e-8 * (v.ncols() as f64).sqrt())
            })
        })
    }
}

fn random_herm(dim: usize, rng: &mut ChaCha8Rng) -> Operator {
    hermitize(&Operator::from_fn(dim, dim, |_, _| {
        C64::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0))
    }))
}
