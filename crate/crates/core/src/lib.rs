#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod error;
pub mod exec;
pub mod experiment;
pub mod meanfield;
pub mod model;
pub mod partition;
pub mod plant;
pub mod rng;
pub mod scenario;
pub mod simplex;
pub mod supervisor;

pub use error::{Error, Result};
