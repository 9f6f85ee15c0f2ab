//! Tabular maximum Rényi-entropy exploration: occupancy measures, exact
//! entropy gradients, entropy maximisation, a sample-based trainer and a
//! reward-free collect-then-plan pipeline.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod contour;
pub mod coupon;
pub mod entropy;
pub mod envs;
pub mod error;
pub mod gradient;
pub mod io;
pub mod linalg;
pub mod mdp;
pub mod pipeline;
pub mod solver;
pub mod trainer;

pub use error::{Error, Result, ValidationError};
