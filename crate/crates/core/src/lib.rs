//! Entangled oscillator vacuum states and the thermal statistics their
//! measurement produces.
//!
//! * [`linalg`]: dense symmetric eigen-solvers, Cholesky, Schur complements.
//! * [`hermite`]: Hermite polynomials, oscillator eigenfunctions, Mehler kernel.
//! * [`epr_state`]: Schmidt weights, the Gaussian vacuum form `A`, covariance.
//! * [`measurement`]: geometric, multinomial, joint and marginal laws; sampling.
//! * [`oscillator_model`]: the partition-coupled oscillator system and its
//!   entanglement temperature.
//! * [`verify`]: the named invariant suite behind `thermo-entangle verify`.
//!
//! The guide under `book/` walks through the same material; its code
//! snippets are compiled and run as doctests of this crate.

// `!(x > 0.0)` style comparisons are used on purpose so NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod epr_state;
pub mod hermite;
pub mod linalg;
pub mod measurement;
pub mod multi_index;
pub mod oscillator_model;
pub mod verify;

#[cfg(doctest)]
mod book {
    #[doc = include_str!("../../../book/src/introduction.md")]
    mod introduction {}
    #[doc = include_str!("../../../book/src/linalg.md")]
    mod linalg {}
    #[doc = include_str!("../../../book/src/hermite.md")]
    mod hermite {}
    #[doc = include_str!("../../../book/src/epr-state.md")]
    mod epr_state {}
    #[doc = include_str!("../../../book/src/measurement.md")]
    mod measurement {}
    #[doc = include_str!("../../../book/src/oscillator-model.md")]
    mod oscillator_model {}
    #[doc = include_str!("../../../book/src/verification.md")]
    mod verification {}
    #[doc = include_str!("../../../book/src/cli.md")]
    mod cli {}
}
