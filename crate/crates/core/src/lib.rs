//! Canonical quantization of the electromagnetic field in 1-D lossless
//! Lorentz media through numerically computed eigenmodes.
// `!(x > 0.0)` is used on purpose so NaN inputs are rejected
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod assembly;
#[cfg(feature = "cli")]
pub mod config;
pub mod eigensolver;
pub mod error;
#[cfg(feature = "cli")]
pub mod experiments;
pub mod lattice;
pub mod medium;
pub mod oracle;
pub mod quantize;
pub mod states;

pub use error::{Error, Result};
