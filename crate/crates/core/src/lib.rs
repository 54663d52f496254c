// negated comparisons are used on purpose to reject NaN parameters
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod checkpoint;
pub mod config;
pub mod dynamics;
pub mod ensemble;
pub mod error;
pub mod experiments;
pub mod fft;
pub mod field;
pub mod forcing;
pub mod grid;
pub mod report;
pub mod rng;
pub mod spectral;
pub mod stats;

pub use error::{Error, Result};
