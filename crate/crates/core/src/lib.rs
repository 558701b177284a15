//! Effective capacity of cognitive-radio links under QoS and interference constraints.

// `!(x > 0.0)` rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fading;
pub mod optimizer;
pub mod quadrature;
pub mod sensing;
pub mod simulator;
pub mod specfun;
pub mod statemodel;

pub use error::{Error, Result};
