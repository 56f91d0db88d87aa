//! Block-coordinate optimal stepsize (BCOS) optimizers and a numerical
//! harness for their convergence theory.
//!
//! * [`vector`]: block-partitioned parameter vectors.
//! * [`schedules`]: stepsize schedules.
//! * [`optim`]: SGD, sign methods, RMSprop/Adam and the BCOS family.
//! * [`problems`]: stochastic test problems with exact moment oracles.
//! * [`analysis`]: trajectories, rate fits, estimator statistics, lemma checks.
//! * [`cli`]: the experiment runner behind the `bcos` binary.

// Comparisons like `!(a < b)` are deliberate so that NaN fails them; index
// loops mirror the coordinatewise formulas.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod analysis;
pub mod cli;
pub mod error;
pub mod optim;
pub mod problems;
pub mod rng;
pub mod schedules;
pub mod vector;

pub use error::{Error, Result};
