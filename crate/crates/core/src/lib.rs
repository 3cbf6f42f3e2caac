//! Predictive-coding video prediction with a depth-decoding stack.
//!
//! - [`tensor`]: dense tensors, reverse-mode autodiff, optimizer
//! - [`pcnet`]: predictive-coding blocks and the encoder/decoder network
//! - [`losses`]: training objective
//! - [`metrics`]: next-frame and depth evaluation metrics
//! - [`scenegen`]: procedural worlds, ray-cast renderer, lighting sweeps
//! - [`dataio`]: PPM/PFM images, sequence directories, checkpoints
//! - [`harness`]: training, evaluation and invariance sweeps
//! - [`gradcheck`], [`selftest`]: built-in verification suites

pub mod dataio;
pub mod error;
pub mod gradcheck;
pub mod harness;
pub mod losses;
pub mod metrics;
pub mod pcnet;
pub mod scenegen;
pub mod selftest;
pub mod tensor;

pub use error::{Error, Result};
