//! Behavior inference from event logs by inverse reinforcement learning.
//!
//! Users are modelled as near-optimal agents in a finite MDP. Per-user reward
//! weights are sampled by Bayesian IRL ([`birl`]) and classified by label
//! propagation ([`label_prop`]); a switched MDP ([`smdp`]) segments each
//! trajectory into a small number of shared behavior modes. [`mooc`] turns
//! raw event logs into an MDP, [`synth`] generates planted ground truth and
//! [`cli`] wires everything into the `behavior-irl` command.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod assignment;
pub mod birl;
pub mod cli;
pub mod error;
pub mod eval;
pub mod label_prop;
pub mod mdp;
pub mod mooc;
pub mod rng;
pub mod smdp;
pub mod synth;

pub use error::{Error, Result};
