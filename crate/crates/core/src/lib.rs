#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod bag;
pub mod cli;
pub mod config;
pub mod error;
pub mod hierarchy;
pub mod losses;
pub mod metrics;
pub mod remix;
pub mod synth;
pub mod trainer;

pub use error::{Error, Result};
