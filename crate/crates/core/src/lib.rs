//! Prompt-conditioned autoregressive generation of 8-channel surface EMG,
//! and the intent-inferral pipeline that consumes the synthetic windows.
//!
//! The numeric core (transformers, classifiers, t-SNE) is generic over
//! [`Scalar`]; the aliases below fix the precision used in practice.

pub mod classifiers;
pub mod config;
pub mod container;
pub mod dataset;
pub mod datasim;
pub mod eval;
pub mod error;
pub mod generator;
pub mod io;
pub mod model;
pub mod nn;
pub mod optim;
pub mod scalar;
pub mod signal;
pub mod trainer;

pub use error::{Error, Result};
pub use scalar::Scalar;
pub use signal::{EmgFrame, EmgWindow, Intent, Prompt, Recording, RecordingMeta, TokenMatrix};

/// Generative model in training/generation precision.
pub type ChatEmgF32 = model::ChatEmg<f32>;
/// Generative model in double precision (gradient checks).
pub type ChatEmgF64 = model::ChatEmg<f64>;
