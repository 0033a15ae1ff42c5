//! Task-aware robustness for wireless split learning.
//!
//! A feedforward classifier is split into a device-side encoder and a
//! base-station decoder; the encoder output crosses a simulated fading
//! channel. The crate measures how much the channel degrades the task loss,
//! bounds that degradation through an estimate of the mutual information
//! between weights and channel state, derives task-outage probability and
//! the task-aware epsilon-capacity, and trains robust models with
//! stochastic gradient Langevin dynamics.

// `!(x >= 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod nn;
pub mod phy;

pub use error::{Error, Result};
pub mod data;
pub mod mi;
pub mod outage;
pub mod risk;
pub mod trainer;
pub mod harness;
