//! Self-supervised dense correspondence between image pairs.
//!
//! The crate predicts a per-pixel flow field from a source image to a
//! target image with a small trainable encoder, a cost volume over frozen
//! semantic candidates, and differentiable softargmax matching. Training is
//! fully self-supervised: warping losses on raw pixels and frozen features,
//! gated by bootstrapped visibility masks, plus a distance-consistency term
//! inside segments. Downstream helpers evaluate point tracking, fit
//! revolute joints from correspondence, and pick goal-directed actions.

pub mod autodiff;
pub mod cli;
pub mod config;
pub mod core;
pub mod datapipe;
pub mod encoders;
pub mod error;
pub mod evaluation;
pub mod losses;
pub mod matching;
pub mod model;
pub mod training;
pub mod visibility;
pub mod viz;

pub use error::{Error, Result};
