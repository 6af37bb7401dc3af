pub mod cost;
pub mod error;
pub mod geometry;
pub mod harness;
pub mod metrics;
pub mod ops;
pub mod pipeline;
pub mod tensor;

pub use error::{Error, Result};
