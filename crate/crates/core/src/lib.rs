//! Zipper-merge traffic simulation, a two-stream driving policy, PPO and
//! staged self-play. See the examples directory for entry points.

// `!(x > 0.0)` is used on purpose throughout so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dynamics;
pub mod eval;
pub mod error;
pub mod geometry;
pub mod idm;
pub mod observation;
pub mod policy;
pub mod ppo;
pub mod road;
pub mod selfplay;
pub mod selftest;
pub mod sim;

pub use error::{Error, Result};
