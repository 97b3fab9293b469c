//! Learning signal temporal logic formulas with a differentiable network.
//!
//! Exact STL semantics live in [`stl`], the reverse-mode tape in
//! [`autodiff`], the network layers in [`network`] and the training loop in
//! [`trainer`].

// `!(x > 0.0)` is used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodiff;
pub mod datasets;
pub mod error;
pub mod eval;
pub mod network;
pub mod optim;
pub mod stl;
pub mod trainer;

pub use error::{Error, Result};
