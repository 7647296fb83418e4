//! Feature-based object recognition with per-typology pipeline selection.
//!
//! The crate evaluates a registry of detector/descriptor/matcher pipelines
//! per object instance, clusters instances into *typologies* by their
//! pipeline-performance profiles, and recognizes views in two stages:
//! typology first (with the best average pipeline), then instance (with
//! that typology's best pipeline). On datasets where different instance
//! families favor different pipelines, the two-stage recognizer beats any
//! single pipeline on average.
//!
//! Modules follow the processing chain:
//!
//! - [`imgproc`]: grayscale images, Gaussian scale space, gradients
//! - [`features`]: keypoint detectors and descriptor extractors
//! - [`matching`]: nearest-neighbor search, ratio filtering, voting
//! - [`pipeline`]: pipeline specs, the registry, model indexes, recognition
//! - [`eval`]: leave-one-out evaluation, confusion matrices, F1 selection
//! - [`expert`]: k-means typologies and the hierarchical recognizer
//! - [`data`]: dataset layout, synthetic generation, subset sampling
//! - [`cli`]: command-line surface and report emitters

pub mod cli;
pub mod data;
pub mod error;
pub mod eval;
pub mod expert;
pub mod features;
pub mod imgproc;
pub mod matching;
pub mod pipeline;
pub(crate) mod rng;

pub use error::{Error, Result};
