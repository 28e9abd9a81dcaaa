//! Distribution-aware weighted l1 analysis minimization.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bounds;
pub mod error;
pub mod experiments;
pub mod io;
pub mod math;
pub mod operators;
pub mod priors;
pub mod solver;
pub mod weights;

pub use error::{Error, Result};
