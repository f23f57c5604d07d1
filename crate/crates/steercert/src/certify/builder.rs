//! Encoders from compatibility problems to conic programs.
//!
//! Four encodings cover the tier hierarchy:
//! - a literal path keeping every joint-observable block G_λ as a full d^k
//!   Hermitian (and, on the extension tier, every extension written out with
//!   explicit swap rows) — used for k = 1, for cross-validation, and on
//!   request;
//! - a symmetry-reduced path for plain and transpose-cut k-compatibility,
//!   with each G_λ restricted, without loss, to the copy-permutation
//!   commutant;
//! - the extension tier with duplicate factors compressed into blocks of the
//!   duplicate-permutation commutant (optionally only the fully symmetric
//!   block), the parent variables eliminated through the marginal map;
//! - on top of either reduced path, an outcome-covariance quotient keeping
//!   one variable class per orbit of response tuples (see the covariance
//!   module), which is what makes the four-setting qutrit extension instance
//!   fit in memory.
//!
//! All encodings share the target convention: at fixed visibility the
//! marginal targets are t·M̃_{a|x} + (1−t)·I/n_a; in threshold mode t is a
//! boxed scalar variable entering those equalities affinely, and the program
//! maximizes it.

use crate::qops::{
    hs_norm, identity, partial_trace, partial_transpose, FactorShape, Operator, C64,
};
use crate::sdp_adapter::encode::{herm_map_columns, psd_map_columns, svec_len, ColSet};
use crate::sdp_adapter::{ConicProgram, HermBlock, ProgramBuilder, ScalarVar, SdpError};

use super::covariance::LambdaQuotient;
use super::lift::{LiftedAssemblage, Responses};
use super::symmetry::{
    copy_permutation_group, copy_permutation_subgroup, duplicate_permutation_group,
    factor_permutation, CommutantStructure,
};
use super::{CertifyError, ConstraintTier, DpsEncoding, SolveMode};

/// Fixed seeds for the deterministic commutant constructions.
const COPY_STRUCTURE_SEED: u64 = 0x5EED_0001;
const SWAP_STRUCTURE_SEED: u64 = 0x5EED_0002;

/// Factor layout of an extension space: the first copy stays single, every
/// later copy is replicated `level` times in a contiguous run.
pub(crate) struct ExtLayout {
    pub shape: FactorShape,
    /// One representative position per parent factor (position 0 plus the
    /// first copy of each run); tracing out the rest recovers the parent.
    pub keep: Vec<usize>,
    /// The duplicate runs, one per parent factor ≥ 1.
    pub sets: Vec<Vec<usize>>,
}

pub(crate) fn ext_layout(d: usize, k: usize, level: usize) -> ExtLayout {
    let shape = FactorShape::uniform(d, 1 + level * (k - 1));
    let keep = std::iter::once(0).chain((1..k).map(|j| 1 + (j - 1) * level)).collect();
    let sets = (1..k)
        .map(|j| (0..level).map(|l| 1 + (j - 1) * level + l).collect())
        .collect();
    ExtLayout { shape, keep, sets }
}

/// Orbit data a decode plan needs to expand representative solutions back to
/// the full tuple-indexed family.
#[derive(Debug)]
pub(crate) struct QuotientDecode {
    orbit_of: Vec<(usize, usize)>,
    parent_unitaries: Vec<Operator>,
    ext_unitaries: Option<Vec<Operator>>,
}

/// How to map a solution vector back to joint observables.
#[derive(Debug)]
pub(crate) enum DecodePlan {
    Literal {
        parents: Vec<HermBlock>,
        extensions: Option<Vec<HermBlock>>,
    },
    Reduced {
        structure: CommutantStructure,
        /// blocks[class][component]
        blocks: Vec<Vec<HermBlock>>,
        quotient: Option<QuotientDecode>,
    },
    Compressed {
        structure: CommutantStructure,
        /// Indices of the structure components carrying variables.
        used: Vec<usize>,
        /// blocks[class][used-component position]
        blocks: Vec<Vec<HermBlock>>,
        ext_shape: FactorShape,
        keep: Vec<usize>,
        quotient: Option<QuotientDecode>,
    },
}

/// Size bookkeeping reported alongside a built program.
#[derive(Debug, Clone, PartialEq)]
pub struct ProblemStats {
    /// Name of the encoding path taken.
    pub encoding: &'static str,
    /// Response tuples (logical parent blocks), before any quotient.
    pub parent_blocks: usize,
    pub parent_dim: usize,
    pub extension_blocks: usize,
    pub extension_dim: usize,
    /// Variable classes actually encoded (= parent_blocks without a
    /// quotient, orbit count with one).
    pub lambda_classes: usize,
    /// Verified symmetry-group order behind the quotient (1 = none).
    pub quotient_order: usize,
    /// Operator equality row sets emitted.
    pub operator_equalities: usize,
    /// Embedded dimensions of all PSD cones.
    pub cone_dims: Vec<usize>,
}

pub(crate) struct BuildOutput {
    pub program: ConicProgram,
    pub t_var: Option<ScalarVar>,
    pub decode: DecodePlan,
    pub stats: ProblemStats,
}

/// Marginal targets: constant part and, in threshold mode, the coefficient of
/// the visibility variable (the equality reads Σ_λ D·G − t·delta = constant).
struct Targets {
    constant: Vec<Vec<Operator>>,
    delta: Option<Vec<Vec<Operator>>>,
}

fn targets(lifted: &LiftedAssemblage, mode: &SolveMode) -> Targets {
    let dim = lifted.dim();
    let n_a = lifted.n_outcomes() as f64;
    let noise = identity(dim) * C64::new(1.0 / n_a, 0.0);
    match mode {
        SolveMode::Feasibility { t } => Targets {
            constant: (0..lifted.n_settings())
                .map(|x| {
                    (0..lifted.n_outcomes())
                        .map(|a| {
                            lifted.effect(x, a) * C64::new(*t, 0.0)
                                + &noise * C64::new(1.0 - t, 0.0)
                        })
                        .collect()
                })
                .collect(),
            delta: None,
        },
        SolveMode::MaxVisibility => Targets {
            constant: vec![vec![noise.clone(); lifted.n_outcomes()]; lifted.n_settings()],
            delta: Some(
                (0..lifted.n_settings())
                    .map(|x| {
                        (0..lifted.n_outcomes())
                            .map(|a| lifted.effect(x, a) - &noise)
                            .collect()
                    })
                    .collect(),
            ),
        },
    }
}

/// Add the visibility variable with its box 0 ≤ t ≤ 1 and maximize it.
fn visibility_scalar(b: &mut ProgramBuilder) -> ScalarVar {
    let t = b.scalar();
    b.leq(&[(t, 1.0)], 1.0);
    b.leq(&[(t, -1.0)], 0.0);
    b.objective_term(t, -1.0);
    t
}

fn emb(dim: usize) -> usize {
    2 * dim
}

/// Estimated peak bytes of the solver's working set for a cone list, used to
/// refuse hopeless instances before spending minutes encoding them. The
/// per-entry factor is calibrated against the measured peak RSS of a
/// representative run: a 20-class extension-tier mock with 3.1e7
/// lower-triangle entries across its cone Hessians peaked at 4.4 GB,
/// ≈ 140 B per entry through the KKT matrix, its factorization, and the cone
/// scalings.
pub(crate) fn cone_memory_estimate_bytes(cone_dims_emb: &[usize]) -> usize {
    let hessian_lower: usize =
        cone_dims_emb.iter().map(|&e| svec_len(e) * (svec_len(e) + 1) / 2).sum();
    hessian_lower.saturating_mul(140)
}

fn check_budget(cone_dims_emb: &[usize], budget_mb: usize) -> Result<(), CertifyError> {
    let estimate_mb = cone_memory_estimate_bytes(cone_dims_emb) / (1024 * 1024);
    if estimate_mb > budget_mb {
        return Err(CertifyError::ResourceBudget { estimate_mb, budget_mb });
    }
    Ok(())
}

fn map_err(e: SdpError) -> CertifyError {
    CertifyError::Encoding(e.to_string())
}

fn dps_level(tier: ConstraintTier) -> Option<usize> {
    match tier {
        ConstraintTier::KcompatPptDps { level } => Some(level as usize),
        _ => None,
    }
}

/// Literal encoding: one full Hermitian per response tuple (plus extensions
/// on the extension tier), constraints exactly as displayed.
pub(crate) fn build_literal(
    lifted: &LiftedAssemblage,
    tier: ConstraintTier,
    mode: &SolveMode,
    budget_mb: usize,
) -> Result<BuildOutput, CertifyError> {
    let dim = lifted.dim();
    let k = lifted.k();
    let shape = lifted.shape().clone();
    let resp = Responses { n_outcomes: lifted.n_outcomes(), n_settings: lifted.n_settings() };
    let n_lam = resp.count();
    let with_ppt = k >= 2 && tier >= ConstraintTier::KcompatPpt;
    let layout = dps_level(tier).filter(|_| k >= 2).map(|n| ext_layout(lifted.base().d(), k, n));
    let ext_dim = layout.as_ref().map_or(0, |l| l.shape.total_dim());

    let mut cone_dims: Vec<usize> = Vec::new();
    for _ in 0..n_lam {
        cone_dims.push(emb(dim));
        if with_ppt {
            cone_dims.extend(std::iter::repeat(emb(dim)).take(k));
        }
        if let Some(l) = &layout {
            cone_dims.extend(std::iter::repeat(emb(ext_dim)).take(1 + l.shape.n_factors()));
        }
    }
    check_budget(&cone_dims, budget_mb)?;

    let mut b = ProgramBuilder::new();
    let parents: Vec<HermBlock> = (0..n_lam).map(|_| b.herm_block(dim)).collect();
    let extensions: Option<Vec<HermBlock>> =
        layout.as_ref().map(|_| (0..n_lam).map(|_| b.herm_block(ext_dim)).collect());
    let t_var = matches!(mode, SolveMode::MaxVisibility).then(|| visibility_scalar(&mut b));

    let tg = targets(lifted, mode);
    let herm_ident = herm_map_columns(dim, |x| x.clone());
    let psd_ident = psd_map_columns(dim, |x| x.clone());

    // Marginal equalities and normalization.
    let mut n_eq = 0;
    for x in 0..lifted.n_settings() {
        for a in 0..lifted.n_outcomes() {
            let terms: Vec<(HermBlock, f64, &ColSet)> =
                resp.responding(x, a).iter().map(|&l| (parents[l], 1.0, &herm_ident)).collect();
            let neg_delta = tg.delta.as_ref().map(|d| &d[x][a] * C64::new(-1.0, 0.0));
            let scalar_terms: Vec<(ScalarVar, &Operator)> = match (&t_var, &neg_delta) {
                (Some(t), Some(nd)) => vec![(*t, nd)],
                _ => vec![],
            };
            b.eq_operator(&tg.constant[x][a], &terms, &scalar_terms).map_err(map_err)?;
            n_eq += 1;
        }
    }
    let all_terms: Vec<(HermBlock, f64, &ColSet)> =
        parents.iter().map(|g| (*g, 1.0, &herm_ident)).collect();
    b.eq_operator(&identity(dim), &all_terms, &[]).map_err(map_err)?;
    n_eq += 1;

    // Positivity and partial-transpose cuts of the parents.
    let cut_cols: Vec<ColSet> = if with_ppt {
        (0..k)
            .map(|f| psd_map_columns(dim, |g| partial_transpose(g, &shape, &[f]).unwrap()))
            .collect()
    } else {
        vec![]
    };
    for g in &parents {
        b.psd_cone(dim, &[(*g, 1.0, &psd_ident)], &[], None).map_err(map_err)?;
        for cols in &cut_cols {
            b.psd_cone(dim, &[(*g, 1.0, cols)], &[], None).map_err(map_err)?;
        }
    }

    // Extension tier: marginal recovery through every duplicate choice,
    // explicit swap invariance (adjacent transpositions generate the rest),
    // and positivity plus all single-factor cuts of the extensions.
    if let (Some(exts), Some(l)) = (&extensions, &layout) {
        let zero = Operator::zeros(dim, dim);
        let ext_zero = Operator::zeros(ext_dim, ext_dim);
        let neg_ident = herm_map_columns(dim, |x| x * C64::new(-1.0, 0.0));
        let mut marg_choices: Vec<ColSet> = vec![herm_map_columns(ext_dim, |g| {
            partial_trace(g, &l.shape, &l.keep).unwrap()
        })];
        for (set_idx, set) in l.sets.iter().enumerate() {
            for &alt in &set[1..] {
                let mut alt_keep = l.keep.clone();
                alt_keep[1 + set_idx] = alt;
                marg_choices.push(herm_map_columns(ext_dim, |g| {
                    partial_trace(g, &l.shape, &alt_keep).unwrap()
                }));
            }
        }
        let swap_residuals: Vec<ColSet> = l
            .sets
            .iter()
            .flat_map(|set| set.windows(2).map(|w| (w[0], w[1])))
            .map(|(p, q)| {
                let mut perm: Vec<usize> = (0..l.shape.n_factors()).collect();
                perm.swap(p, q);
                let swap = factor_permutation(&l.shape, &perm).unwrap();
                herm_map_columns(ext_dim, |g| g - &swap * g * swap.adjoint())
            })
            .collect();
        let ext_psd_ident = psd_map_columns(ext_dim, |x| x.clone());
        let ext_cuts: Vec<ColSet> = (0..l.shape.n_factors())
            .map(|f| psd_map_columns(ext_dim, |g| partial_transpose(g, &l.shape, &[f]).unwrap()))
            .collect();
        for (lam, ext) in exts.iter().enumerate() {
            for marg in &marg_choices {
                b.eq_operator(&zero, &[(*ext, 1.0, marg), (parents[lam], 1.0, &neg_ident)], &[])
                    .map_err(map_err)?;
                n_eq += 1;
            }
            for res in &swap_residuals {
                b.eq_operator(&ext_zero, &[(*ext, 1.0, res)], &[]).map_err(map_err)?;
                n_eq += 1;
            }
            b.psd_cone(ext_dim, &[(*ext, 1.0, &ext_psd_ident)], &[], None).map_err(map_err)?;
            for cols in &ext_cuts {
                b.psd_cone(ext_dim, &[(*ext, 1.0, cols)], &[], None).map_err(map_err)?;
            }
        }
    }

    let program = b.finish();
    let stats = ProblemStats {
        encoding: if layout.is_some() {
            "literal+extensions"
        } else if with_ppt {
            "literal+cuts"
        } else {
            "literal"
        },
        parent_blocks: n_lam,
        parent_dim: dim,
        extension_blocks: if layout.is_some() { n_lam } else { 0 },
        extension_dim: ext_dim,
        lambda_classes: n_lam,
        quotient_order: 1,
        operator_equalities: n_eq,
        cone_dims: program.psd_block_dims(),
    };
    Ok(BuildOutput {
        program,
        t_var,
        decode: DecodePlan::Literal { parents, extensions },
        stats,
    })
}

fn quotient_decode(q: &LambdaQuotient, k: usize, ext_factors: Option<usize>) -> QuotientDecode {
    QuotientDecode {
        orbit_of: q.orbit_of().to_vec(),
        parent_unitaries: (0..q.group_order()).map(|g| q.action().power_unitary(g, k)).collect(),
        ext_unitaries: ext_factors
            .map(|n| (0..q.group_order()).map(|g| q.action().power_unitary(g, n)).collect()),
    }
}

/// Symmetry-reduced encoding for the plain and transpose-cut tiers (k ≥ 2):
/// each G_λ is restricted, without loss, to the copy-permutation commutant
/// (twirling a feasible family preserves every constraint because the targets
/// are permutation-invariant). With a quotient, one variable class per
/// response-tuple orbit.
pub(crate) fn build_reduced(
    lifted: &LiftedAssemblage,
    tier: ConstraintTier,
    mode: &SolveMode,
    quotient: Option<&LambdaQuotient>,
    budget_mb: usize,
) -> Result<BuildOutput, CertifyError> {
    let dim = lifted.dim();
    let k = lifted.k();
    assert!(k >= 2, "reduction applies to k >= 2");
    let shape = lifted.shape().clone();
    let resp = Responses { n_outcomes: lifted.n_outcomes(), n_settings: lifted.n_settings() };
    let n_lam = resp.count();
    let with_ppt = tier >= ConstraintTier::KcompatPpt;
    let n_classes = quotient.map_or(n_lam, |q| q.n_reps());

    let structure = CommutantStructure::new(&copy_permutation_group(&shape), COPY_STRUCTURE_SEED);
    let block_dims = structure.block_dims();
    let n_comp = block_dims.len();

    // Partial transpose on one factor of a commutant element keeps the
    // permutation symmetry of the remaining copies, so for k ≥ 3 its
    // positivity is checked block-by-block in that smaller structure. All
    // single-factor cuts are unitarily equivalent here, so one suffices.
    let cut_structure = (with_ppt && k >= 3).then(|| {
        let symmetric_factors: Vec<usize> = (0..k - 1).collect();
        CommutantStructure::new(
            &copy_permutation_subgroup(&shape, &symmetric_factors),
            COPY_STRUCTURE_SEED ^ 0xA5,
        )
    });

    let mut cone_dims: Vec<usize> = Vec::new();
    for _ in 0..n_classes {
        cone_dims.extend(block_dims.iter().map(|&m| emb(m)));
        if with_ppt {
            match &cut_structure {
                Some(cs) => cone_dims.extend(cs.block_dims().iter().map(|&m| emb(m))),
                None => cone_dims.push(emb(dim)),
            }
        }
    }
    check_budget(&cone_dims, budget_mb)?;

    let mut b = ProgramBuilder::new();
    let blocks: Vec<Vec<HermBlock>> = (0..n_classes)
        .map(|_| block_dims.iter().map(|&m| b.herm_block(m)).collect())
        .collect();
    let t_var = matches!(mode, SolveMode::MaxVisibility).then(|| visibility_scalar(&mut b));

    let tg = targets(lifted, mode);
    // Both sides of every marginal equality live in the commutant, so rows
    // can be expressed block-by-block; sanity-check the targets once.
    let check_symmetric = |op: &Operator| {
        let back = structure.assemble(&structure.extract(op));
        debug_assert!(
            hs_norm(&(&back - op)) <= 1e-9 * hs_norm(op).max(1.0),
            "marginal target is not permutation-invariant"
        );
        let _ = back;
    };

    let mut n_eq = 0;
    match quotient {
        None => {
            // Within each component the column map is the identity on block
            // coordinates, so the equality block of the constraint matrix is
            // just the response pattern.
            let ident_cols: Vec<ColSet> =
                block_dims.iter().map(|&m| herm_map_columns(m, |x| x.clone())).collect();
            for x in 0..lifted.n_settings() {
                for a in 0..lifted.n_outcomes() {
                    check_symmetric(&tg.constant[x][a]);
                    let responding = resp.responding(x, a);
                    let target_blocks = structure.extract(&tg.constant[x][a]);
                    let delta_blocks = tg.delta.as_ref().map(|d| {
                        check_symmetric(&d[x][a]);
                        structure
                            .extract(&d[x][a])
                            .into_iter()
                            .map(|m| m * C64::new(-1.0, 0.0))
                            .collect::<Vec<_>>()
                    });
                    for (c, target) in target_blocks.iter().enumerate() {
                        let terms: Vec<(HermBlock, f64, &ColSet)> = responding
                            .iter()
                            .map(|&l| (blocks[l][c], 1.0, &ident_cols[c]))
                            .collect();
                        let scalar_terms: Vec<(ScalarVar, &Operator)> =
                            match (&t_var, &delta_blocks) {
                                (Some(t), Some(db)) => vec![(*t, &db[c])],
                                _ => vec![],
                            };
                        b.eq_operator(target, &terms, &scalar_terms).map_err(map_err)?;
                    }
                    n_eq += 1;
                }
            }
            for (c, target) in structure.extract(&identity(dim)).iter().enumerate() {
                let terms: Vec<(HermBlock, f64, &ColSet)> =
                    (0..n_lam).map(|l| (blocks[l][c], 1.0, &ident_cols[c])).collect();
                b.eq_operator(target, &terms, &[]).map_err(map_err)?;
            }
            n_eq += 1;
        }
        Some(q) => {
            // Orbit sums Σ_g U_g G U_g† stay inside the commutant and act
            // within each component (the group unitaries are k-fold powers,
            // which commute with every copy permutation), so rows remain
            // block-local with conjugation-sum columns.
            let conj: Vec<Vec<_>> = (0..q.group_order())
                .map(|g| {
                    let u = q.action().power_unitary(g, k);
                    (0..n_comp).map(|c| structure.components()[c].conjugation(&u)).collect()
                })
                .collect();
            let sum_cols = |c: usize, sel: &[usize]| {
                herm_map_columns(block_dims[c], |h| {
                    let mut acc = Operator::zeros(block_dims[c], block_dims[c]);
                    for &g in sel {
                        acc += conj[g][c].apply(h);
                    }
                    acc
                })
            };
            let all_g: Vec<usize> = (0..q.group_order()).collect();
            for x in 0..lifted.n_settings() {
                for &a in &q.outcome_reps(x) {
                    check_symmetric(&tg.constant[x][a]);
                    let target_blocks = structure.extract(&tg.constant[x][a]);
                    let delta_blocks = tg.delta.as_ref().map(|d| {
                        structure
                            .extract(&d[x][a])
                            .into_iter()
                            .map(|m| m * C64::new(-1.0, 0.0))
                            .collect::<Vec<_>>()
                    });
                    for (c, target) in target_blocks.iter().enumerate() {
                        let cols: Vec<ColSet> = (0..n_classes)
                            .map(|r| sum_cols(c, &q.selectors(r, x, a)))
                            .collect();
                        let terms: Vec<(HermBlock, f64, &ColSet)> =
                            (0..n_classes).map(|r| (blocks[r][c], 1.0, &cols[r])).collect();
                        let scalar_terms: Vec<(ScalarVar, &Operator)> =
                            match (&t_var, &delta_blocks) {
                                (Some(t), Some(db)) => vec![(*t, &db[c])],
                                _ => vec![],
                            };
                        b.eq_operator(target, &terms, &scalar_terms).map_err(map_err)?;
                    }
                    n_eq += 1;
                }
            }
            for (c, target) in structure.extract(&identity(dim)).iter().enumerate() {
                let cols = sum_cols(c, &all_g);
                let terms: Vec<(HermBlock, f64, &ColSet)> =
                    (0..n_classes).map(|r| (blocks[r][c], 1.0, &cols)).collect();
                b.eq_operator(target, &terms, &[]).map_err(map_err)?;
            }
            n_eq += 1;
        }
    }

    // Cut columns: last-factor partial transpose of each component's
    // assembled block, expressed in the cut structure's blocks when present.
    let psd_ident: Vec<ColSet> =
        block_dims.iter().map(|&m| psd_map_columns(m, |x| x.clone())).collect();
    let cut_cols: Vec<Vec<ColSet>> = if with_ppt {
        structure
            .components()
            .iter()
            .map(|comp| match &cut_structure {
                Some(cs) => (0..cs.components().len())
                    .map(|cb| {
                        psd_map_columns(comp.block_dim(), |h| {
                            let cut =
                                partial_transpose(&comp.assemble(h), &shape, &[k - 1]).unwrap();
                            cs.components()[cb].extract(&cut)
                        })
                    })
                    .collect(),
                None => vec![psd_map_columns(comp.block_dim(), |h| {
                    partial_transpose(&comp.assemble(h), &shape, &[k - 1]).unwrap()
                })],
            })
            .collect()
    } else {
        vec![]
    };

    for class_blocks in &blocks {
        for (c, blk) in class_blocks.iter().enumerate() {
            b.psd_cone(block_dims[c], &[(*blk, 1.0, &psd_ident[c])], &[], None)
                .map_err(map_err)?;
        }
        if with_ppt {
            match &cut_structure {
                Some(cs) => {
                    for (cb, &m) in cs.block_dims().iter().enumerate() {
                        let terms: Vec<(HermBlock, f64, &ColSet)> = class_blocks
                            .iter()
                            .enumerate()
                            .map(|(c, blk)| (*blk, 1.0, &cut_cols[c][cb]))
                            .collect();
                        b.psd_cone(m, &terms, &[], None).map_err(map_err)?;
                    }
                }
                None => {
                    let terms: Vec<(HermBlock, f64, &ColSet)> = class_blocks
                        .iter()
                        .enumerate()
                        .map(|(c, blk)| (*blk, 1.0, &cut_cols[c][0]))
                        .collect();
                    b.psd_cone(dim, &terms, &[], None).map_err(map_err)?;
                }
            }
        }
    }

    let program = b.finish();
    let stats = ProblemStats {
        encoding: match (with_ppt, quotient.is_some()) {
            (false, false) => "reduced",
            (true, false) => "reduced+cuts",
            (false, true) => "reduced+orbit",
            (true, true) => "reduced+cuts+orbit",
        },
        parent_blocks: n_lam,
        parent_dim: dim,
        extension_blocks: 0,
        extension_dim: 0,
        lambda_classes: n_classes,
        quotient_order: quotient.map_or(1, |q| q.group_order()),
        operator_equalities: n_eq,
        cone_dims: program.psd_block_dims(),
    };
    Ok(BuildOutput {
        program,
        t_var,
        decode: DecodePlan::Reduced {
            structure,
            blocks,
            quotient: quotient.map(|q| quotient_decode(q, k, None)),
        },
        stats,
    })
}

/// Extension-tier encoding with duplicate-permutation compression. Extension
/// variables are parametrized directly on the invariant blocks (or only the
/// fully symmetric one), and the parent observables are eliminated: a partial
/// trace of a PSD extension is PSD, every parent transpose cut is the partial
/// trace of an enforced extension cut, and the marginal map substitutes
/// parents in the equalities. With a quotient, one class per tuple orbit.
pub(crate) fn build_dps_compressed(
    lifted: &LiftedAssemblage,
    level: usize,
    mode: &SolveMode,
    bose_only: bool,
    quotient: Option<&LambdaQuotient>,
    budget_mb: usize,
) -> Result<BuildOutput, CertifyError> {
    let dim = lifted.dim();
    let k = lifted.k();
    assert!(k >= 2, "extension tier applies to k >= 2");
    let resp = Responses { n_outcomes: lifted.n_outcomes(), n_settings: lifted.n_settings() };
    let n_lam = resp.count();
    let n_classes = quotient.map_or(n_lam, |q| q.n_reps());

    let layout = ext_layout(lifted.base().d(), k, level);
    let ext_dim = layout.shape.total_dim();
    let group = duplicate_permutation_group(&layout.shape, &layout.sets);
    let structure = CommutantStructure::new(&group, SWAP_STRUCTURE_SEED);

    let used: Vec<usize> = if bose_only {
        vec![structure
            .symmetric_component(&group)
            .expect("duplicate-permutation structure has a symmetric component")]
    } else {
        (0..structure.components().len()).collect()
    };
    let used_dims: Vec<usize> =
        used.iter().map(|&c| structure.components()[c].block_dim()).collect();
    let n_used = used.len();

    let mut cone_dims: Vec<usize> = Vec::new();
    for _ in 0..n_classes {
        cone_dims.extend(used_dims.iter().map(|&m| emb(m))); // positivity
        cone_dims.extend(used_dims.iter().map(|&m| emb(m))); // first-factor cut
        cone_dims.extend(std::iter::repeat(emb(ext_dim)).take(layout.sets.len()));
    }
    check_budget(&cone_dims, budget_mb)?;

    let mut b = ProgramBuilder::new();
    let blocks: Vec<Vec<HermBlock>> = (0..n_classes)
        .map(|_| used_dims.iter().map(|&m| b.herm_block(m)).collect())
        .collect();
    let t_var = matches!(mode, SolveMode::MaxVisibility).then(|| visibility_scalar(&mut b));

    let comp = |ci: usize| &structure.components()[used[ci]];

    // Equalities in parent coordinates, the parent of a class being the
    // partial trace of its assembled extension over all duplicates.
    let tg = targets(lifted, mode);
    let parent_of = |ci: usize, h: &Operator| {
        partial_trace(&comp(ci).assemble(h), &layout.shape, &layout.keep).unwrap()
    };
    let mut n_eq = 0;
    match quotient {
        None => {
            let marg_cols: Vec<ColSet> = (0..n_used)
                .map(|ci| herm_map_columns(used_dims[ci], |h| parent_of(ci, h)))
                .collect();
            for x in 0..lifted.n_settings() {
                for a in 0..lifted.n_outcomes() {
                    let mut terms: Vec<(HermBlock, f64, &ColSet)> = Vec::new();
                    for &l in &resp.responding(x, a) {
                        for ci in 0..n_used {
                            terms.push((blocks[l][ci], 1.0, &marg_cols[ci]));
                        }
                    }
                    let neg_delta = tg.delta.as_ref().map(|d| &d[x][a] * C64::new(-1.0, 0.0));
                    let scalar_terms: Vec<(ScalarVar, &Operator)> = match (&t_var, &neg_delta) {
                        (Some(t), Some(nd)) => vec![(*t, nd)],
                        _ => vec![],
                    };
                    b.eq_operator(&tg.constant[x][a], &terms, &scalar_terms).map_err(map_err)?;
                    n_eq += 1;
                }
            }
            let mut all_terms: Vec<(HermBlock, f64, &ColSet)> = Vec::new();
            for l in 0..n_lam {
                for ci in 0..n_used {
                    all_terms.push((blocks[l][ci], 1.0, &marg_cols[ci]));
                }
            }
            b.eq_operator(&identity(dim), &all_terms, &[]).map_err(map_err)?;
            n_eq += 1;
        }
        Some(q) => {
            let par_u: Vec<Operator> =
                (0..q.group_order()).map(|g| q.action().power_unitary(g, k)).collect();
            let sum_cols = |ci: usize, sel: &[usize]| {
                herm_map_columns(used_dims[ci], |h| {
                    let base = parent_of(ci, h);
                    let mut acc = Operator::zeros(dim, dim);
                    for &g in sel {
                        acc += &par_u[g] * &base * par_u[g].adjoint();
                    }
                    acc
                })
            };
            let all_g: Vec<usize> = (0..q.group_order()).collect();
            for x in 0..lifted.n_settings() {
                for &a in &q.outcome_reps(x) {
                    let cols: Vec<Vec<ColSet>> = (0..n_classes)
                        .map(|r| {
                            let sel = q.selectors(r, x, a);
                            (0..n_used).map(|ci| sum_cols(ci, &sel)).collect()
                        })
                        .collect();
                    let mut terms: Vec<(HermBlock, f64, &ColSet)> = Vec::new();
                    for r in 0..n_classes {
                        for ci in 0..n_used {
                            terms.push((blocks[r][ci], 1.0, &cols[r][ci]));
                        }
                    }
                    let neg_delta = tg.delta.as_ref().map(|d| &d[x][a] * C64::new(-1.0, 0.0));
                    let scalar_terms: Vec<(ScalarVar, &Operator)> = match (&t_var, &neg_delta) {
                        (Some(t), Some(nd)) => vec![(*t, nd)],
                        _ => vec![],
                    };
                    b.eq_operator(&tg.constant[x][a], &terms, &scalar_terms).map_err(map_err)?;
                    n_eq += 1;
                }
            }
            let cols: Vec<ColSet> = (0..n_used).map(|ci| sum_cols(ci, &all_g)).collect();
            let mut terms: Vec<(HermBlock, f64, &ColSet)> = Vec::new();
            for r in 0..n_classes {
                for ci in 0..n_used {
                    terms.push((blocks[r][ci], 1.0, &cols[ci]));
                }
            }
            b.eq_operator(&identity(dim), &terms, &[]).map_err(map_err)?;
            n_eq += 1;
        }
    }

    // Cones. The first-factor transpose commutes with every duplicate
    // permutation, so that cut stays component-local; a cut inside a
    // duplicate run breaks the invariance and gets a full-space cone (one
    // per run — the run's other cuts are swap-conjugates of it).
    let psd_ident: Vec<ColSet> =
        used_dims.iter().map(|&m| psd_map_columns(m, |x| x.clone())).collect();
    let first_cut_cols: Vec<ColSet> = (0..n_used)
        .map(|ci| {
            psd_map_columns(used_dims[ci], |h| {
                comp(ci)
                    .extract(&partial_transpose(&comp(ci).assemble(h), &layout.shape, &[0]).unwrap())
            })
        })
        .collect();
    #[cfg(debug_assertions)]
    for ci in 0..n_used {
        // The component-local expression of the first-factor cut must be
        // exact (no leakage into other components).
        let m = used_dims[ci];
        let probe = crate::qops::hermitize(&Operator::from_fn(m, m, |i, j| {
            C64::new((i * 7 + j + 1) as f64 / (m * m) as f64, (i as f64 - j as f64) / m as f64)
        }));
        let cut = partial_transpose(&comp(ci).assemble(&probe), &layout.shape, &[0]).unwrap();
        let back = comp(ci).assemble(&comp(ci).extract(&cut));
        debug_assert!(hs_norm(&(back - &cut)) <= 1e-9 * hs_norm(&cut).max(1.0));
    }
    let run_cut_cols: Vec<Vec<ColSet>> = layout
        .sets
        .iter()
        .map(|set| {
            (0..n_used)
                .map(|ci| {
                    psd_map_columns(used_dims[ci], |h| {
                        partial_transpose(&comp(ci).assemble(h), &layout.shape, &[set[0]]).unwrap()
                    })
                })
                .collect()
        })
        .collect();

    for class_blocks in &blocks {
        for (ci, blk) in class_blocks.iter().enumerate() {
            b.psd_cone(used_dims[ci], &[(*blk, 1.0, &psd_ident[ci])], &[], None)
                .map_err(map_err)?;
        }
        for (ci, blk) in class_blocks.iter().enumerate() {
            b.psd_cone(used_dims[ci], &[(*blk, 1.0, &first_cut_cols[ci])], &[], None)
                .map_err(map_err)?;
        }
        for cut in &run_cut_cols {
            let terms: Vec<(HermBlock, f64, &ColSet)> = class_blocks
                .iter()
                .enumerate()
                .map(|(ci, blk)| (*blk, 1.0, &cut[ci]))
                .collect();
            b.psd_cone(ext_dim, &terms, &[], None).map_err(map_err)?;
        }
    }

    let program = b.finish();
    let stats = ProblemStats {
        encoding: match (bose_only, quotient.is_some()) {
            (false, false) => "extension-blocks",
            (true, false) => "extension-symmetric",
            (false, true) => "extension-blocks+orbit",
            (true, true) => "extension-symmetric+orbit",
        },
        parent_blocks: n_lam,
        parent_dim: dim,
        extension_blocks: n_lam,
        extension_dim: ext_dim,
        lambda_classes: n_classes,
        quotient_order: quotient.map_or(1, |q| q.group_order()),
        operator_equalities: n_eq,
        cone_dims: program.psd_block_dims(),
    };
    let ext_factors = layout.shape.n_factors();
    Ok(BuildOutput {
        program,
        t_var,
        decode: DecodePlan::Compressed {
            structure,
            used,
            blocks,
            ext_shape: layout.shape,
            keep: layout.keep,
            quotient: quotient.map(|q| quotient_decode(q, k, Some(ext_factors))),
        },
        stats,
    })
}

impl DecodePlan {
    /// Joint-observable family {G_λ}, one parent per response tuple.
    pub(crate) fn parents(&self, x: &[f64], program: &ConicProgram) -> Vec<Operator> {
        match self {
            DecodePlan::Literal { parents, .. } => {
                parents.iter().map(|b| program.decode_block(x, *b)).collect()
            }
            DecodePlan::Reduced { structure, blocks, quotient } => {
                let per_class: Vec<Operator> = blocks
                    .iter()
                    .map(|class| {
                        let hs: Vec<Operator> =
                            class.iter().map(|b| program.decode_block(x, *b)).collect();
                        structure.assemble(&hs)
                    })
                    .collect();
                expand(&per_class, quotient.as_ref(), |qd| &qd.parent_unitaries)
            }
            DecodePlan::Compressed { structure, used, blocks, ext_shape, keep, quotient } => {
                let per_class: Vec<Operator> = blocks
                    .iter()
                    .map(|class| {
                        let mut ext =
                            Operator::zeros(ext_shape.total_dim(), ext_shape.total_dim());
                        for (ci, b) in class.iter().enumerate() {
                            ext += structure.components()[used[ci]]
                                .assemble(&program.decode_block(x, *b));
                        }
                        partial_trace(&ext, ext_shape, keep).unwrap()
                    })
                    .collect();
                expand(&per_class, quotient.as_ref(), |qd| &qd.parent_unitaries)
            }
        }
    }

    /// Extension family {G̃_λ} when the plan carries one.
    pub(crate) fn extensions(&self, x: &[f64], program: &ConicProgram) -> Option<Vec<Operator>> {
        match self {
            DecodePlan::Literal { extensions, .. } => extensions
                .as_ref()
                .map(|exts| exts.iter().map(|b| program.decode_block(x, *b)).collect()),
            DecodePlan::Reduced { .. } => None,
            DecodePlan::Compressed { structure, used, blocks, ext_shape, quotient, .. } => {
                let per_class: Vec<Operator> = blocks
                    .iter()
                    .map(|class| {
                        let mut ext =
                            Operator::zeros(ext_shape.total_dim(), ext_shape.total_dim());
                        for (ci, b) in class.iter().enumerate() {
                            ext += structure.components()[used[ci]]
                                .assemble(&program.decode_block(x, *b));
                        }
                        ext
                    })
                    .collect();
                Some(expand(&per_class, quotient.as_ref(), |qd| {
                    qd.ext_unitaries.as_ref().expect("extension unitaries present")
                }))
            }
        }
    }
}

/// Expand per-class operators to the full tuple-indexed family, conjugating
/// each representative through its orbit.
fn expand(
    per_class: &[Operator],
    quotient: Option<&QuotientDecode>,
    unitaries: impl Fn(&QuotientDecode) -> &Vec<Operator>,
) -> Vec<Operator> {
    match quotient {
        None => per_class.to_vec(),
        Some(qd) => {
            let us = unitaries(qd);
            qd.orbit_of
                .iter()
                .map(|&(r, g)| &us[g] * &per_class[r] * us[g].adjoint())
                .collect()
        }
    }
}

/// Entry point used by the public API: dispatch on tier, copy count, and
/// requested encoding.
pub(crate) fn build(
    lifted: &LiftedAssemblage,
    tier: ConstraintTier,
    mode: &SolveMode,
    encoding: DpsEncoding,
    use_reduction: bool,
    quotient: Option<&LambdaQuotient>,
    budget_mb: usize,
) -> Result<BuildOutput, CertifyError> {
    let k = lifted.k();
    match tier {
        // One copy: the transpose cuts and extensions degenerate (a lone
        // partial transpose preserves spectra and there is nothing to
        // duplicate), so every tier is the plain joint-measurability program.
        _ if k == 1 => build_literal(lifted, ConstraintTier::Kcompat, mode, budget_mb),
        ConstraintTier::Kcompat | ConstraintTier::KcompatPpt if use_reduction => {
            build_reduced(lifted, tier, mode, quotient, budget_mb)
        }
        ConstraintTier::Kcompat | ConstraintTier::KcompatPpt => {
            build_literal(lifted, tier, mode, budget_mb)
        }
        ConstraintTier::KcompatPptDps { level } => match encoding {
            DpsEncoding::SwapBlocks => {
                build_dps_compressed(lifted, level as usize, mode, false, quotient, budget_mb)
            }
            DpsEncoding::BoseSymmetric => {
                build_dps_compressed(lifted, level as usize, mode, true, quotient, budget_mb)
            }
            DpsEncoding::Uncompressed => build_literal(lifted, tier, mode, budget_mb),
        },
    }
}
