#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod cli;
pub mod convexity;
pub mod error;
pub mod geometry;
pub mod linalg;
pub mod lp;
pub mod measures;
pub mod risk;
pub mod rng;
pub mod solver;
pub mod stability;

pub use error::{Error, Result};
