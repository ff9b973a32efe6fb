//! Mode-switched linear driving models with Markov-modulated noisy
//! measurements: mean-square stability certificates, LMI synthesis of
//! output-feedback gains, and Monte-Carlo validation.

// `!(x > 0.0)` is used on purpose so NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod acc;
pub mod analysis;
pub mod error;
pub mod linalg;
pub mod model;
pub mod sdp;
pub mod simulate;
pub mod synthesis;

pub use error::{Error, Result};
