//! Kernel-regularised weak moment feature maps for parametric statistical
//! models, together with rank-based transversality and degeneracy
//! diagnostics.

// `!(x > 0.0)` style guards are meant to reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod behrens_fisher;
pub mod degeneracy;
pub mod error;
pub mod featuremap;
pub mod kernel;
pub mod model;
pub mod quadrature;
pub mod stein;
pub mod transversality;

mod par;

pub use error::{Error, Result};
