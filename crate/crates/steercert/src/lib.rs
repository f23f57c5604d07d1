//! Certify, from the untrusted side of a steering experiment, a lower bound on
//! the number of incompatible measurements the remote party performed.
//!
//! The pipeline: a bipartite state and a measurement assemblage produce a state
//! assemblage ([`seo::steer`]), which is converted to steering-equivalent
//! observables ([`seo::seo`]). Joint measurability of those observables with a
//! *separable* joint observable on `k` state copies is then tested by a
//! hierarchy of semidefinite feasibility programs ([`certify`]): plain
//! k-compatibility, k-compatibility with positive partial transposes, and
//! k-compatibility with a first-level symmetric-extension (DPS) constraint.
//! Infeasibility of any tier certifies that at least `k + 1` of the remote
//! measurements are incompatible.
//!
//! Supporting modules: [`qops`] (complex operator algebra), [`scenarios`]
//! (mutually unbiased bases, depolarizing noise, control instances),
//! [`simulability`] (product-form joint observables for explicitly simulable
//! assemblages, and a sufficient-condition decomposition for 2-simulability),
//! [`sdp_adapter`] (conic encoding and the solver boundary), and [`report`]
//! (serialization schemas).

pub mod certify;
pub mod qops;
pub mod report;
pub mod scenarios;
pub mod sdp_adapter;
pub mod seo;
pub mod simulability;
pub mod tol;

// Linked for its BLAS/LAPACK symbols, which the solver's PSD cone operations
// require at runtime.
extern crate openblas_src;
