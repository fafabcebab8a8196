//! Samplet bases on scattered data, S-compressed kernel matrices and the
//! fixed-pattern sparse algebra built on them.

pub mod algebra;
pub mod compression;
pub mod dense;
pub mod error;
pub mod geometry;
pub mod gp;
pub mod kernels;
pub mod matfun;
pub mod rng;
pub mod samplets;
pub mod selinv;

pub use error::{Error, Result};
