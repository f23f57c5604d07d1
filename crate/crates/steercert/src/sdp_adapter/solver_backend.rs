//! Clarabel backend: CSC assembly, cone list, settings mapping, and the
//! conservative status translation.

use clarabel::algebra::CscMatrix;
use clarabel::solver::{
    DefaultSettingsBuilder, DefaultSolver, IPSolver, SolverStatus, SupportedConeT::*,
};

use super::encode::svec_len;
use super::{
    validate_infeasibility_certificate, ConicProgram, SdpError, SolveOutcome, SolveStatus,
    SolverSettings,
};

/// Merge triplets into a valid CSC matrix: per column, row indices strictly
/// increasing and duplicates summed (the solver's factorization assumes this).
pub(crate) fn triplets_to_csc(
    nrows: usize,
    ncols: usize,
    triplets: &[(usize, usize, f64)],
) -> CscMatrix<f64> {
    let mut order: Vec<usize> = (0..triplets.len()).collect();
    order.sort_unstable_by_key(|&i| (triplets[i].1, triplets[i].0));
    let mut colptr = vec![0usize; ncols + 1];
    let mut rowval: Vec<usize> = Vec::with_capacity(triplets.len());
    let mut nzval: Vec<f64> = Vec::with_capacity(triplets.len());
    let mut last: Option<(usize, usize)> = None;
    for &i in &order {
        let (r, c, v) = triplets[i];
        if last == Some((c, r)) {
            *nzval.last_mut().unwrap() += v;
        } else {
            colptr[c + 1] += 1;
            rowval.push(r);
            nzval.push(v);
            last = Some((c, r));
        }
    }
    for c in 0..ncols {
        colptr[c + 1] += colptr[c];
    }
    CscMatrix::new(nrows, ncols, colptr, rowval, nzval)
}

pub(crate) fn solve(
    program: &ConicProgram,
    settings: &SolverSettings,
) -> Result<SolveOutcome, SdpError> {
    let n_eq = program.eq.rhs.len();
    let n_ineq = program.ineq.rhs.len();
    let nrows = n_eq
        + n_ineq
        + program.psd.iter().map(|blk| svec_len(blk.emb_dim)).sum::<usize>();

    // Row order: equalities, scalar inequalities, then PSD blocks.
    let mut triplets: Vec<(usize, usize, f64)> = Vec::new();
    let mut b = vec![0.0; nrows];
    let mut offset = 0;
    for group in [&program.eq, &program.ineq] {
        triplets.extend(group.triplets.iter().map(|&(r, c, v)| (offset + r, c, v)));
        b[offset..offset + group.rhs.len()].copy_from_slice(&group.rhs);
        offset += group.rhs.len();
    }
    let mut cones = Vec::with_capacity(2 + program.psd.len());
    if n_eq > 0 {
        cones.push(ZeroConeT(n_eq));
    }
    if n_ineq > 0 {
        cones.push(NonnegativeConeT(n_ineq));
    }
    for blk in &program.psd {
        triplets.extend(blk.rows.triplets.iter().map(|&(r, c, v)| (offset + r, c, v)));
        b[offset..offset + blk.rows.rhs.len()].copy_from_slice(&blk.rows.rhs);
        offset += blk.rows.rhs.len();
        cones.push(PSDTriangleConeT(blk.emb_dim));
    }

    let a = triplets_to_csc(nrows, program.n_vars, &triplets);
    let p = CscMatrix::<f64>::zeros((program.n_vars, program.n_vars));

    let clarabel_settings = DefaultSettingsBuilder::default()
        .verbose(settings.verbose)
        .max_iter(settings.max_iter)
        .time_limit(settings.time_limit_s)
        .tol_gap_abs(settings.tol)
        .tol_gap_rel(settings.tol)
        .tol_feas(settings.tol)
        .direct_solve_method(settings.direct_solve_method.clone())
        .build()
        .map_err(|e| SdpError::Setup(format!("{e:?}")))?;

    let mut solver = DefaultSolver::new(&p, &program.objective, &a, &b, &cones, clarabel_settings)
        .map_err(|e| SdpError::Setup(format!("{e:?}")))?;
    solver.solve();
    let sol = &solver.solution;

    let raw_status = format!("{:?}", sol.status);
    let mut certificate = None;
    let status = match sol.status {
        SolverStatus::Solved => SolveStatus::Optimal,
        SolverStatus::PrimalInfeasible => match validate_infeasibility_certificate(program, &sol.z)
        {
            Ok(q) => {
                certificate = Some(q);
                SolveStatus::PrimalInfeasible
            }
            Err(reason) => SolveStatus::Unknown { reason },
        },
        other => SolveStatus::Unknown { reason: format!("solver terminated with {other:?}") },
    };
    let objective =
        if status == SolveStatus::Optimal { Some(sol.obj_val) } else { None };
    Ok(SolveOutcome {
        status,
        x: sol.x.clone(),
        objective,
        iterations: sol.iterations,
        solve_time_s: sol.solve_time,
        r_prim: sol.r_prim,
        r_dual: sol.r_dual,
        certificate,
        raw_status,
    })
}
