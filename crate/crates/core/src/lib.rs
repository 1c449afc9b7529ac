//! Spatially coupled sparse regression codes: encoding, GAMP decoding,
//! state evolution, channel calculus and a Monte Carlo harness.

// `!(x > 0.0)` is used on purpose throughout so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channels;
pub mod code_design;
pub mod codec;
pub mod error;
pub mod glm;
pub mod harness;
pub mod numerics;
pub mod state_evolution;

pub use error::{Error, Result};
