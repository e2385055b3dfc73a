#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod channel;
pub mod autodiff;
pub mod baselines;
pub mod bench;
pub mod cmat;
pub mod error;
pub mod geometry;
pub mod metrics;
pub mod models;
pub mod pipeline;

pub use error::{Error, Result};
