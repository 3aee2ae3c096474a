//! Discretized fractional Marcinkiewicz integrals, their commutators, the
//! sparse domination pipeline and Muckenhoupt weight probes on uniform grids.
//!
//! Module map:
//! - [`geometry`]: boxes, staggered grids, rooted dyadic lattices.
//! - [`functions`]: grid functions, angular kernels, BMO symbols, norms.
//! - [`operators`]: quadrature for `I_beta`, `M_beta`, the square functions
//!   and their dyadic smoothings, plus Fourier envelope checks.
//! - [`sparse`]: Calderón–Zygmund decomposition, sparse-family construction,
//!   sparse operators and certificates.
//! - [`weights`]: `A_p` / `A_{p,q}` characteristics and weight probes.
//! - [`harness`]: experiment configs, CSV reports and the CLI driver.

// Negated float comparisons are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod functions;
pub mod geometry;
pub mod harness;
pub mod operators;
pub mod sparse;
pub mod weights;

pub use error::{Error, Result};
