//! Raman mixture identification: spectrum simulation, time-frequency scale
//! images, class balancing, a multi-label CNN and multi-label metrics.

pub mod augment;
pub mod error;
pub mod harness;
pub mod mdnn;
pub mod metrics;
pub mod seed;
pub mod spectrum;
pub mod tensor_file;
pub mod tf;

pub use error::{Error, ErrorCategory, Result};
