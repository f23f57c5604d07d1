//! Numerical tolerances, pinned in one place.
//!
//! The SDP solver's target precision (~1e−6) dominates every end-to-end error
//! budget; the core-algebra tolerances below are kept tighter so that
//! operator-algebra error never competes with solver error.

/// Hermiticity check: max entrywise |X − X†| must not exceed this.
pub const TOL_HERM: f64 = 1e-10;

/// Positive semidefiniteness check: the minimum eigenvalue of a Hermitian
/// operator may undershoot zero by at most this.
pub const TOL_PSD: f64 = 1e-8;

/// Relative rank cutoff: eigenvalues above `RANK_TOL_REL · λ_max` count toward
/// the numerical rank (support projections, pseudo-inverse square roots).
pub const RANK_TOL_REL: f64 = 1e-8;

/// Membership tolerance for the one-body-marginal subspace test on
/// solver-produced joint observables (inputs carry up to ~[`SOLVER_TOL`]
/// error; one order of headroom on top).
pub const SPAN_TOL: f64 = 1e-5;

/// Solver target accuracy (feasibility and duality-gap tolerances).
/// Degenerate optima stall interior-point progress near the tolerance: the
/// extension tier's non-symmetric blocks vanish at the optimum, and even
/// trivially feasible instances (t = 0) have been observed to stop a hair
/// above 1e−7. 1e−6 is reached reliably and sits two orders under the
/// coarsest reported quantity (visibilities at four decimals).
pub const SOLVER_TOL: f64 = 1e-6;

/// Minimum relative quality of a primal-infeasibility certificate before a
/// verdict may claim incompatibility: the dual ray z must satisfy
/// ‖Aᵀz‖∞ ≤ tol·‖z‖∞ and −bᵀz ≥ tol·‖z‖∞, with z in the dual cone to the
/// same tolerance.
pub const CERTIFICATE_TOL: f64 = 1e-6;

/// Default per-solve iteration cap.
pub const DEFAULT_MAX_ITER: u32 = 50_000;

/// Default per-solve wall-clock limit in seconds.
pub const DEFAULT_TIME_LIMIT_S: f64 = 600.0;
