//! The solver boundary: assemble conic feasibility/optimization programs over
//! complex Hermitian variable blocks, run them through an interior-point
//! solver, and map results back with conservative status semantics.
//!
//! Variable blocks are parametrized by real Hermitian coordinates (see
//! [`encode`]); positive semidefiniteness of any affine Hermitian expression
//! is imposed through the real symmetric embedding at cone level only. The
//! status contract is deliberately asymmetric: `Optimal` requires the solver's
//! solved status, `PrimalInfeasible` additionally requires an independently
//! re-validated improving-ray certificate, and everything ambiguous collapses
//! to `Unknown` — the scientific claim downstream rides on infeasibility, so
//! errors must point toward inconclusiveness.

pub mod encode;
mod solver_backend;
pub mod text_dump;

use thiserror::Error;

use crate::qops::Operator;
use crate::tol::{CERTIFICATE_TOL, DEFAULT_MAX_ITER, DEFAULT_TIME_LIMIT_S, SOLVER_TOL};
use encode::{herm_coord_len, herm_to_coords, herm_to_emb_svec, svec_len, ColSet};

/// Errors from program assembly or solver execution.
#[derive(Debug, Error)]
pub enum SdpError {
    /// A column set's output dimension disagrees with the cone or target it
    /// was used for.
    #[error("column set outputs dimension {got}, expected {expected}")]
    MapDimensionMismatch { got: usize, expected: usize },
    /// The estimated solver working set exceeds the configured memory budget.
    #[error(
        "estimated solver memory {estimate_mb} MB exceeds budget {budget_mb} MB; \
         raise STEERCERT_MEM_BUDGET_MB or choose a smaller encoding"
    )]
    MemoryBudget { estimate_mb: usize, budget_mb: usize },
    /// The backend rejected the assembled program.
    #[error("solver setup failed: {0}")]
    Setup(String),
}

/// Handle to a complex Hermitian variable block.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HermBlock {
    pub(crate) offset: usize,
    pub(crate) dim: usize,
}

impl HermBlock {
    pub fn dim(&self) -> usize {
        self.dim
    }
}

/// Handle to a scalar real variable.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScalarVar(pub(crate) usize);

#[derive(Debug, Clone, Default)]
struct RowBlock {
    triplets: Vec<(usize, usize, f64)>,
    rhs: Vec<f64>,
}

#[derive(Debug, Clone)]
struct PsdBlock {
    emb_dim: usize,
    rows: RowBlock,
}

/// A fully assembled real conic program:
/// minimize qᵀx subject to equality rows, scalar inequality rows, and PSD
/// cone blocks, each affine in x.
#[derive(Debug, Clone)]
pub struct ConicProgram {
    n_vars: usize,
    objective: Vec<f64>,
    eq: RowBlock,
    ineq: RowBlock,
    psd: Vec<PsdBlock>,
}

impl ConicProgram {
    pub fn n_vars(&self) -> usize {
        self.n_vars
    }

    pub fn n_equalities(&self) -> usize {
        self.eq.rhs.len()
    }

    pub fn n_psd_blocks(&self) -> usize {
        self.psd.len()
    }

    /// Embedded (real) dimensions of the PSD blocks, in row order.
    pub fn psd_block_dims(&self) -> Vec<usize> {
        self.psd.iter().map(|b| b.emb_dim).collect()
    }

    /// Reconstruct a Hermitian variable block from a solution vector. The
    /// result is Hermitian by construction.
    pub fn decode_block(&self, x: &[f64], blk: HermBlock) -> Operator {
        encode::coords_to_herm(blk.dim, &x[blk.offset..blk.offset + herm_coord_len(blk.dim)])
    }

    pub fn decode_scalar(&self, x: &[f64], var: ScalarVar) -> f64 {
        x[var.0]
    }

    /// Rough peak-memory estimate for the direct KKT factorization, in bytes:
    /// the dense per-cone Hessian blocks dominate, with an empirical factor
    /// for factor fill-in and solver workspaces.
    pub fn estimated_solver_bytes(&self) -> usize {
        let hessian_lower: usize =
            self.psd.iter().map(|b| svec_len(b.emb_dim) * (svec_len(b.emb_dim) + 1) / 2).sum();
        let a_nnz = self.eq.triplets.len()
            + self.ineq.triplets.len()
            + self.psd.iter().map(|b| b.rows.triplets.len()).sum::<usize>();
        // 16 B per stored KKT entry; ~2.5× for the factor plus workspaces.
        (hessian_lower + 2 * a_nnz) * 16 * 5 / 2
    }
}

/// Incremental builder for [`ConicProgram`].
///
/// Cone and equality rows reference precomputed sparse column sets
/// ([`encode::herm_map_columns`] / [`encode::psd_map_columns`]), so a map that
/// recurs across many variable blocks — the common case for block-indexed
/// joint observables — is evaluated once and reused.
#[derive(Debug, Default)]
pub struct ProgramBuilder {
    n_vars: usize,
    objective: Vec<(usize, f64)>,
    eq: RowBlock,
    ineq: RowBlock,
    psd: Vec<PsdBlock>,
}

impl ProgramBuilder {
    pub fn new() -> Self {
        Self::default()
    }

    /// Allocate a Hermitian variable block of complex dimension `dim`.
    pub fn herm_block(&mut self, dim: usize) -> HermBlock {
        let blk = HermBlock { offset: self.n_vars, dim };
        self.n_vars += herm_coord_len(dim);
        blk
    }

    /// Allocate a scalar variable.
    pub fn scalar(&mut self) -> ScalarVar {
        let v = ScalarVar(self.n_vars);
        self.n_vars += 1;
        v
    }

    /// Add the objective term `coeff · var` (the program minimizes).
    pub fn objective_term(&mut self, var: ScalarVar, coeff: f64) {
        self.objective.push((var.0, coeff));
    }

    fn scatter(
        rows: &mut RowBlock,
        row0: usize,
        terms: &[(HermBlock, f64, &ColSet)],
        scalar_cols: &[(ScalarVar, Vec<f64>)],
        negate: bool,
    ) {
        let sign = if negate { -1.0 } else { 1.0 };
        for (blk, scale, cols) in terms {
            debug_assert_eq!(cols.cols.len(), herm_coord_len(blk.dim));
            for (c, col) in cols.cols.iter().enumerate() {
                for &(r, v) in col {
                    rows.triplets.push((row0 + r, blk.offset + c, sign * scale * v));
                }
            }
        }
        for (var, dense) in scalar_cols {
            for (r, &v) in dense.iter().enumerate() {
                if v.abs() > 1e-14 {
                    rows.triplets.push((row0 + r, var.0, sign * v));
                }
            }
        }
    }

    /// Operator equality: Σ scale·map(block) + Σ coeff_op·scalar = target,
    /// expressed in Hermitian coordinates of the target's dimension.
    pub fn eq_operator(
        &mut self,
        target: &Operator,
        terms: &[(HermBlock, f64, &ColSet)],
        scalar_terms: &[(ScalarVar, &Operator)],
    ) -> Result<(), SdpError> {
        let dim = target.nrows();
        for (_, _, cols) in terms {
            if cols.out_dim != dim {
                return Err(SdpError::MapDimensionMismatch { got: cols.out_dim, expected: dim });
            }
        }
        let row0 = self.eq.rhs.len();
        self.eq.rhs.extend(herm_to_coords(target));
        let scalar_cols: Vec<(ScalarVar, Vec<f64>)> =
            scalar_terms.iter().map(|(v, op)| (*v, herm_to_coords(op))).collect();
        Self::scatter(&mut self.eq, row0, terms, &scalar_cols, false);
        Ok(())
    }

    /// PSD constraint: Σ scale·map(block) + Σ coeff_op·scalar + constant ⪰ 0,
    /// on a complex space of dimension `n`; rows are the svec of the real
    /// embedding.
    pub fn psd_cone(
        &mut self,
        n: usize,
        terms: &[(HermBlock, f64, &ColSet)],
        scalar_terms: &[(ScalarVar, &Operator)],
        constant: Option<&Operator>,
    ) -> Result<(), SdpError> {
        for (_, _, cols) in terms {
            if cols.out_dim != n {
                return Err(SdpError::MapDimensionMismatch { got: cols.out_dim, expected: n });
            }
        }
        let emb_dim = 2 * n;
        let mut rows = RowBlock {
            triplets: Vec::new(),
            rhs: match constant {
                Some(c) => herm_to_emb_svec(c),
                None => vec![0.0; svec_len(emb_dim)],
            },
        };
        let scalar_cols: Vec<(ScalarVar, Vec<f64>)> =
            scalar_terms.iter().map(|(v, op)| (*v, herm_to_emb_svec(op))).collect();
        // Cone slack s = b − Ax must equal the assembled matrix, so variable
        // terms enter with a negated sign.
        Self::scatter(&mut rows, 0, terms, &scalar_cols, true);
        self.psd.push(PsdBlock { emb_dim, rows });
        Ok(())
    }

    /// Scalar inequality Σ coeff·var ≤ rhs.
    pub fn leq(&mut self, terms: &[(ScalarVar, f64)], rhs: f64) {
        let row = self.ineq.rhs.len();
        self.ineq.rhs.push(rhs);
        for (v, c) in terms {
            self.ineq.triplets.push((row, v.0, *c));
        }
    }

    pub fn finish(self) -> ConicProgram {
        let mut objective = vec![0.0; self.n_vars];
        for (v, c) in self.objective {
            objective[v] += c;
        }
        ConicProgram {
            n_vars: self.n_vars,
            objective,
            eq: prune_zero_rows(self.eq),
            ineq: self.ineq,
            psd: self.psd,
        }
    }
}

/// Coefficients below this are numerical dust: projection-like column maps
/// (group averages, commutant extractions) annihilate whole directions up to
/// rounding.
const ZERO_ROW_TOL: f64 = 1e-12;

/// Drop equality rows whose coefficients are all dust and whose right-hand
/// side is zero to the same scale. Such rows make the equality block
/// rank-deficient, which leaves the dual under-determined and lets the
/// solver's static regularization put a floor under the dual residual. Rows
/// with dust coefficients but a structurally nonzero right-hand side are
/// kept: they encode a genuine inconsistency the solver should report.
fn prune_zero_rows(block: RowBlock) -> RowBlock {
    let n = block.rhs.len();
    let mut max_coeff = vec![0.0f64; n];
    for &(r, _, v) in &block.triplets {
        max_coeff[r] = max_coeff[r].max(v.abs());
    }
    let keep: Vec<bool> = (0..n)
        .map(|r| max_coeff[r] > ZERO_ROW_TOL || block.rhs[r].abs() > ZERO_ROW_TOL)
        .collect();
    eprintln!(
        "prune_zero_rows: {} of {} rows kept",
        keep.iter().filter(|&&k| k).count(),
        n
    );
    if keep.iter().all(|&k| k) {
        return block;
    }
    let mut new_row = vec![usize::MAX; n];
    let mut rhs = Vec::with_capacity(n);
    for r in 0..n {
        if keep[r] {
            new_row[r] = rhs.len();
            rhs.push(block.rhs[r]);
        }
    }
    let triplets = block
        .triplets
        .into_iter()
        .filter(|&(r, _, _)| keep[r])
        .map(|(r, c, v)| (new_row[r], c, v))
        .collect();
    RowBlock { triplets, rhs }
}

/// Solver status with conservative semantics.
#[derive(Debug, Clone, PartialEq)]
pub enum SolveStatus {
    /// Solved to target accuracy; for feasibility programs this means a
    /// feasible point was found.
    Optimal,
    /// The solver produced a primal-infeasibility ray that independently
    /// passed the certificate quality check.
    PrimalInfeasible,
    /// Anything else: iteration/time limits, reduced accuracy, numerical
    /// trouble, or a certificate that failed validation.
    Unknown { reason: String },
}

/// Quality of a validated infeasibility certificate (all quantities relative
/// to ‖z‖∞).
#[derive(Debug, Clone, Copy)]
pub struct CertificateQuality {
    /// ‖Aᵀz‖∞ / ‖z‖∞ — must vanish for a true improving ray.
    pub ray_residual: f64,
    /// −bᵀz / ‖z‖∞ — must be strictly positive.
    pub ray_gap: f64,
    /// Most negative dual-cone violation of z, relative; ≤ 0 means clean.
    pub cone_violation: f64,
}

/// Result of one solver run.
#[derive(Debug, Clone)]
pub struct SolveOutcome {
    pub status: SolveStatus,
    /// Primal solution vector (meaningful for `Optimal`).
    pub x: Vec<f64>,
    /// Objective value as posed (minimization), when solved.
    pub objective: Option<f64>,
    pub iterations: u32,
    pub solve_time_s: f64,
    /// Primal/dual residuals as reported by the solver.
    pub r_prim: f64,
    pub r_dual: f64,
    pub certificate: Option<CertificateQuality>,
    /// Raw backend status string, for diagnostics.
    pub raw_status: String,
}

/// Solver configuration.
#[derive(Debug, Clone)]
pub struct SolverSettings {
    pub max_iter: u32,
    pub time_limit_s: f64,
    pub tol: f64,
    pub verbose: bool,
    /// Direct KKT factorization backend: "faer" (default) or "qdldl".
    pub direct_solve_method: String,
    /// Refuse to launch solves whose estimated working set exceeds this.
    pub mem_budget_mb: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            max_iter: DEFAULT_MAX_ITER,
            time_limit_s: DEFAULT_TIME_LIMIT_S,
            tol: SOLVER_TOL,
            verbose: false,
            direct_solve_method: "faer".to_string(),
            mem_budget_mb: default_mem_budget_mb(),
        }
    }
}

fn default_mem_budget_mb() -> usize {
    // Three quarters of currently available memory, with a floor.
    let available_kb = std::fs::read_to_string("/proc/meminfo")
        .ok()
        .and_then(|s| {
            s.lines().find(|l| l.starts_with("MemAvailable")).and_then(|l| {
                l.split_whitespace().nth(1).and_then(|v| v.parse::<usize>().ok())
            })
        })
        .unwrap_or(4 * 1024 * 1024);
    (available_kb * 3 / 4 / 1024).max(512)
}

impl SolverSettings {
    /// Defaults with environment overrides applied: `STEERCERT_MAX_ITER`,
    /// `STEERCERT_TIME_LIMIT_S`, `STEERCERT_SOLVER_TOL`,
    /// `STEERCERT_DIRECT_SOLVE_METHOD`, `STEERCERT_MEM_BUDGET_MB`,
    /// `STEERCERT_VERBOSE`.
    pub fn from_env() -> Self {
        let mut s = Self::default();
        s.apply_overrides(|k| std::env::var(k).ok());
        s
    }

    pub(crate) fn apply_overrides(&mut self, get: impl Fn(&str) -> Option<String>) {
        if let Some(v) = get("STEERCERT_MAX_ITER").and_then(|v| v.parse().ok()) {
            self.max_iter = v;
        }
        if let Some(v) = get("STEERCERT_TIME_LIMIT_S").and_then(|v| v.parse().ok()) {
            self.time_limit_s = v;
        }
        if let Some(v) = get("STEERCERT_SOLVER_TOL").and_then(|v| v.parse().ok()) {
            self.tol = v;
        }
        if let Some(v) = get("STEERCERT_DIRECT_SOLVE_METHOD") {
            self.direct_solve_method = v;
        }
        if let Some(v) = get("STEERCERT_MEM_BUDGET_MB").and_then(|v| v.parse().ok()) {
            self.mem_budget_mb = v;
        }
        if let Some(v) = get("STEERCERT_VERBOSE") {
            self.verbose = v == "1" || v.eq_ignore_ascii_case("true");
        }
    }
}

/// Solve an assembled program. Memory-guards before launching; validates any
/// infeasibility certificate before reporting `PrimalInfeasible`.
pub fn run(program: &ConicProgram, settings: &SolverSettings) -> Result<SolveOutcome, SdpError> {
    let estimate_mb = program.estimated_solver_bytes() / (1024 * 1024);
    if estimate_mb > settings.mem_budget_mb {
        return Err(SdpError::MemoryBudget { estimate_mb, budget_mb: settings.mem_budget_mb });
    }
    solver_backend::solve(program, settings)
}

/// Certificate validation shared by the backend and the text-dump round-trip:
/// checks that z is an improving ray for primal infeasibility.
pub(crate) fn validate_infeasibility_certificate(
    program: &ConicProgram,
    z: &[f64],
) -> Result<CertificateQuality, String> {
    let znorm = z.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    if !(znorm > 0.0) {
        return Err("certificate ray is zero".to_string());
    }
    // Aᵀz over all row groups, in the backend's row order.
    let mut aty = vec![0.0; program.n_vars];
    let mut b_dot_z = 0.0;
    let mut offset = 0;
    let apply = |rows: &RowBlock, z: &[f64], offset: usize, aty: &mut [f64], bz: &mut f64| {
        for (r, c, v) in &rows.triplets {
            aty[*c] += v * z[offset + r];
        }
        for (r, rhs) in rows.rhs.iter().enumerate() {
            *bz += rhs * z[offset + r];
        }
    };
    apply(&program.eq, z, offset, &mut aty, &mut b_dot_z);
    offset += program.eq.rhs.len();
    apply(&program.ineq, z, offset, &mut aty, &mut b_dot_z);
    // Dual-cone membership: nonnegative rows need z ≥ 0.
    let mut cone_violation = program.ineq.rhs.iter().enumerate().fold(0.0f64, |m, (r, _)| {
        m.max(-z[offset + r] / znorm)
    });
    offset += program.ineq.rhs.len();
    for blk in &program.psd {
        apply(&blk.rows, z, offset, &mut aty, &mut b_dot_z);
        let zmat = encode::svec_to_sym(blk.emb_dim, &z[offset..offset + svec_len(blk.emb_dim)]);
        let min_eig = nalgebra::SymmetricEigen::new(zmat)
            .eigenvalues
            .iter()
            .fold(f64::INFINITY, |m, &v| m.min(v));
        cone_violation = cone_violation.max(-min_eig / znorm);
        offset += svec_len(blk.emb_dim);
    }
    let ray_residual = aty.iter().fold(0.0f64, |m, v| m.max(v.abs())) / znorm;
    let ray_gap = -b_dot_z / znorm;
    let quality = CertificateQuality { ray_residual, ray_gap, cone_violation };
    if ray_residual <= CERTIFICATE_TOL && ray_gap >= CERTIFICATE_TOL && cone_violation <= CERTIFICATE_TOL
    {
        Ok(quality)
    } else {
        Err(format!(
            "certificate below quality bar: residual {ray_residual:.2e}, gap {ray_gap:.2e}, \
             cone violation {cone_violation:.2e}"
        ))
    }
}
