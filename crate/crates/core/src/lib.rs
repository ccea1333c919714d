//! Privacy-aware channel splitting and layered coding of feature tensors,
//! with the tools to measure what each layer reveals.

pub mod blur;
pub mod codec;
pub mod error;
pub mod harness;
pub mod metrics;
pub mod pipeline;
pub mod quant;
pub mod scoring;
pub mod tensor;
pub mod transport;

pub use error::{Error, ErrorKind, Result};
