//! Synthesis, file formats and benchmarks around [`fracseg_core`].

pub mod error;
pub mod eval;
pub mod gridio;
pub mod synthesis;

pub use error::{Error, Result};
pub use fracseg_core as core;
