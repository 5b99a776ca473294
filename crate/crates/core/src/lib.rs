//! Hands-on detection for capacitive steering-wheel sensors.
//!
//! The crate covers the whole chain: a physical simulator for the LC sensor,
//! edge-based labelling and windowing, two small neural networks and a
//! random forest trained from scratch, an evaluation grid and a streaming
//! detector with reaction-time measurement.

// `!(x > 0.0)` is used on purpose: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod detector;
pub mod error;
pub mod eval;
pub mod forest;
pub mod model;
pub mod nn;
pub mod preprocess;
pub mod rng;
pub mod sim;
pub mod synth;

pub use error::{HodError, Result};
pub use sim::Label;
