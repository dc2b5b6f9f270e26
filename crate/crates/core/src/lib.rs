//! Multi-AUV underwater target tracking: simulator, diffusion-supervised
//! multi-agent actor-critic trainer, MADDPG baseline and experiment harness.

// Negated comparisons are used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod env;
pub mod error;
pub mod experience;
pub mod harness;
pub mod nn;
pub mod trainer;

pub use error::{Error, Result};
