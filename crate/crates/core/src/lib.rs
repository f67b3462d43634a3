//! Kinetic wealth-exchange laboratory: directed random market dynamics as
//! agent Monte Carlo and as a deterministic density operator.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod convolution;
pub mod distributions;
pub mod error;
pub mod exec;
pub mod generators;
pub mod histogram;
pub mod metrics;
pub mod montecarlo;
pub mod operator;
pub mod quadrature;
pub mod rng;
pub mod special;

pub use error::{Error, Result};
pub use exec::Exec;
