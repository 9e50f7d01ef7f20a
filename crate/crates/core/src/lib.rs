//! Controllability analysis for finite-dimensional Markovian open quantum
//! systems.

// `!(x > 0.0)` style guards are kept because they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod dilation;
pub mod error;
pub mod linalg;
pub mod hormander;
pub mod lindblad;
pub mod reach;
pub mod tangent;
pub mod transport;

pub use error::{Error, Result};
