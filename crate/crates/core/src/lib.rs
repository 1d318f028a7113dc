//! Low-voltage grid power-quality laboratory: supply synthesis, a radial
//! four-wire network model, switched loads, a transient solver, and
//! power-quality metrics.

// Range checks are written as `!(x > 0.0)` so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod loads;
pub mod netmodel;
pub mod pqmetrics;
pub mod signalgen;
pub mod simulator;
pub mod workbench;

pub use error::{Error, Result};
