//! Neutral-agent adversarial policy learning against cooperative
//! multi-agent victims.
//!
//! The crate trains a victim party with a value-decomposition learner,
//! freezes it, and then trains a party of neutral agents, units that can
//! never harm the victims directly, to make the victims fail through the
//! shared environment alone.

#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod envs;
pub mod error;
pub mod evaluation;
pub mod manifest;
pub mod mdp;
pub mod neural;
pub mod oracle;
pub mod qmix;
pub mod reward;
pub mod training;

pub use error::{Error, Result};
