//! Two-stage hierarchical contrastive predictive coding of speech.
//!
//! A lower stage encodes 10 ms frames and an upper stage 80 ms frames; each
//! stage predicts its own future latents with an InfoNCE objective, and the
//! lower stage additionally sees the upper stage's context (the top-down
//! pathway). The crate also carries the evaluation side: linear and
//! one-hidden-layer probes, and a 1-bit delta-modulation feature codec.

pub mod cli;
pub mod config;
pub mod dataset;
pub mod error;
pub mod model;
pub mod numerics;
pub mod objective;
pub mod pipeline;
pub mod probes;
pub mod quantizer;
pub mod trainer;

pub use error::{Error, Result};
