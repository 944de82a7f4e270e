//! Nonasymptotic bounds, rate-dispersion quantities and Gaussian
//! approximations for lossy compression of a source observed through a
//! noisy channel.
//!
//! Information quantities are in nats throughout; the command-line front
//! end converts to bits at its boundary.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bes;
pub mod cli;
pub mod dispersion;
pub mod error;
pub mod model;
pub mod numerics;
pub mod oneshot;
pub mod rd_solver;

pub use error::{Error, Result};
