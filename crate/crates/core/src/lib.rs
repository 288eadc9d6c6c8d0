//! Video rain-streak removal with a spatio-temporal network.
//!
//! The pipeline runs in three modules. [`sicm`] extracts multi-scale
//! spatial features from every frame. [`stim`] runs a bidirectional
//! convolutional LSTM whose gates also read the previous frame's features,
//! producing coarse derained frames. [`estm`] refines the window's center
//! frame with 3D convolutions over coarse and rainy frames followed by
//! residual dense blocks.
//!
//! Everything runs on the small autodiff engine in [`engine`]: training in
//! `f32`, gradient checks in `f64`, single-threaded and deterministic.
//! [`data`] synthesizes rainy clips, [`trainer`] handles the two-stage
//! schedule, checkpoints and inference, and [`cli`] exposes it all as one
//! executable.

pub mod cli;
pub mod config;
pub mod data;
pub mod engine;
pub mod error;
pub mod estm;
pub mod losses;
pub mod metrics;
pub mod model;
pub mod nn;
pub mod sicm;
pub mod stim;
pub mod trainer;
pub mod verify;

pub use error::{Error, Result};
pub use model::{Estinet, ModelConfig, Variant};
