//! Coherent coordinate descent (CoCD): a deterministic zeroth-order
//! optimizer that keeps one circular buffer of coordinate-wise
//! finite-difference gradients, refreshes `B` entries per step in cyclic
//! order, and descends on the whole, partly stale, buffer.
//!
//! The crate also carries the randomized baselines it is compared against,
//! closed-form error and stability analysis, and an experiment harness.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod analysis;
pub mod baselines;
pub mod error;
pub mod harness;
pub mod objectives;
pub mod optimizer;
pub mod param_store;

pub use error::{Error, Result};
pub use objectives::{BatchSpec, Objective};
pub use optimizer::{Cocd, FdScheme, GradientBuffer, OptimizerConfig, StepTrace, WindowMode};
pub use param_store::{Cursor, FlatLocation, ParameterStore, ShapedParam};
