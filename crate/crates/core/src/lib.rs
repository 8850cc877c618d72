//! Large-deviation rate functions for renewal-reward processes.
//!
//! The crate computes Cramér transforms and the rate function `J` of
//! `Z_t / t` for a cumulative process `Z_t = sum_{i <= M_t} W_i` driven by
//! i.i.d. pairs `(tau_i, W_i)`, and checks them against Monte Carlo
//! estimates and a relative-entropy minimization over finite supports.
//! Hawkes processes enter through their regeneration cycles.

// `!(a < b)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod entropy;
pub mod error;
pub mod hawkes;
pub mod legendre;
pub mod mc;
pub mod model;
pub mod optimize;
pub mod quadrature;
pub mod renewal;
pub mod seeding;
pub mod xreal;

pub use error::{Error, Result};
pub use model::{Atom, ExpMomentBounds, JointModel, ModelKind, Moments, Pair, Provenance, RewardMap, TauFamily, WFamily};
pub use xreal::{XReal, PosInfinity};
