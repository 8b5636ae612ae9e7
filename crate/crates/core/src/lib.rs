//! Dual-network continual learning: a working model trained on RGB input,
//! a shape-biased learner trained on edge-magnitude images, and a
//! stochastically updated EMA memory used for inference, together with the
//! replay buffer, task-stream builders, baselines and evaluation tools
//! needed to run incremental-learning benchmarks end to end.

pub mod buffer;
pub mod codec;
pub mod data;
pub mod dn4il;
pub mod error;
pub mod eval;
pub mod imgproc;
pub mod nn;
pub mod runner;
pub mod shape;
pub mod trainer;

pub use error::{Error, Result};
