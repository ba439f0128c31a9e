//! ECG arrhythmia classification with saliency visualization.
//!
//! The crate is organized around the pipeline:
//!
//! - [`signal`] parses PhysioNet-style records and cuts labeled windows;
//! - [`synth`] generates parametric rhythms with ground-truth anomaly spans;
//! - [`autodiff`] is a small reverse-mode engine over dense tensors;
//! - [`model`] assembles and trains the classifier and the visualization
//!   networks on top of it;
//! - [`saliency`] computes class activation maps and learns input-deletion
//!   masks;
//! - [`dataset`] and [`cli`] wire everything into files and commands.

pub mod autodiff;
pub mod cli;
pub mod dataset;
pub mod error;
pub(crate) mod kvtext;
pub mod model;
pub mod saliency;
pub mod signal;
pub mod synth;

pub use error::{Error, Result};
