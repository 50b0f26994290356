//! Simulation and benchmarking engine for stochastic matching bandits under
//! the multinomial-logit choice model.
//!
//! The crate is organised bottom-up:
//!
//! - [`mnl`]: choice probabilities, revenue, feature projection.
//! - [`estimation`]: regularized MLE, Gram matrices, online mirror descent.
//! - [`design`]: G/D-optimal experimental design by Frank-Wolfe.
//! - [`assortment`]: confidence indices, exhaustive and greedy matching
//!   optimizers, elimination.
//! - [`environment`]: synthetic instances, stochastic feedback, the oracle.
//! - [`algorithms`]: batched elimination policies and the per-round baseline.
//! - [`harness`]: experiment orchestration, CSV/SVG output and the CLI.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod algorithms;
pub mod assortment;
pub mod design;
pub mod environment;
pub mod error;
pub mod estimation;
pub mod harness;
pub mod mnl;

pub use error::{Error, Result};
