//! Wavelet coherence synchronization indices and zero-inflated beta panel models.

pub mod cli;
pub mod cwt;
pub mod error;
pub mod ingest;
pub mod panel;
pub mod rng;
pub mod special;
pub mod surrogate;
pub mod synth;
pub mod syncindex;
pub mod xwt;
pub mod zib;

pub use error::{Error, Result};
