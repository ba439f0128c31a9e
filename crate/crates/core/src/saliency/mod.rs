//! Saliency mechanisms: class activation maps read off the CAM network's
//! feature map, and per-sample deletion masks learned against a frozen
//! scorer by projected gradient descent.

mod cam;
mod mask;

pub use cam::{cam_for_window, compute_cam, upsample_normalize};
pub use mask::{mask_loss, mask_total_loss, optimize_mask, perturb, saliency_from_mask};

use crate::error::{Error, Result};
use crate::signal::RhythmClass;

/// Which reading of the mask objective to use.
///
/// `Deletion` treats `m_t = 1` as "replace this sample with the baseline"
/// and penalizes mask mass, which is the only reading where the zero
/// initialization and the sparsity term cooperate. `Literal` implements the
/// printed objective verbatim (penalize `1 - m`, perturb toward
/// `(1-m) x + k (1-m)`); it is kept so the discrepancy stays auditable.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Convention {
    #[default]
    Deletion,
    Literal,
}

impl Convention {
    pub fn parse(token: &str) -> Result<Convention> {
        match token {
            "deletion" => Ok(Convention::Deletion),
            "literal" => Ok(Convention::Literal),
            other => Err(Error::Config(format!(
                "unknown mask convention {other:?} (expected deletion or literal)"
            ))),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Convention::Deletion => "deletion",
            Convention::Literal => "literal",
        }
    }
}

/// Hyperparameters of the mask optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskConfig {
    /// Weight of the mask-sparsity term.
    pub sparsity_weight: f64,
    /// Weight of the total-variation smoothness term.
    pub smoothness_weight: f64,
    /// Plain gradient step size.
    pub step_size: f64,
    pub iterations: usize,
    /// Baseline value masked samples are pulled toward.
    pub replacement: f64,
    pub convention: Convention,
}

impl Default for MaskConfig {
    fn default() -> Self {
        MaskConfig {
            sparsity_weight: 1.0,
            smoothness_weight: 0.001,
            step_size: 0.001,
            iterations: 500,
            replacement: 0.0,
            convention: Convention::Deletion,
        }
    }
}

impl MaskConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.sparsity_weight > 0.0)
            || !(self.smoothness_weight > 0.0)
            || !(self.step_size > 0.0)
        {
            return Err(Error::Config(
                "mask weights and step size must be positive".to_string(),
            ));
        }
        if self.iterations == 0 {
            return Err(Error::Config("mask optimization needs at least one iteration".into()));
        }
        Ok(())
    }
}

/// One iteration's loss decomposition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossTerms {
    pub total: f64,
    pub sparsity: f64,
    pub smoothness: f64,
    pub confidence: f64,
}

/// Result of one mask optimization.
#[derive(Debug, Clone, PartialEq)]
pub struct MaskState {
    /// Per-sample mask, all values in `[0, 1]`.
    pub mask: Vec<f64>,
    /// Loss at the start of every iteration (entry 0 is the zero-mask loss).
    pub loss_history: Vec<LossTerms>,
    /// Loss of the final mask, after the last projection.
    pub final_loss: LossTerms,
    /// Worst distance any coordinate sat outside `[0, 1]` when measured
    /// after each iteration's projection; 0 exactly when the projection
    /// held every time.
    pub bound_violation: f64,
    pub target: RhythmClass,
    /// Set when the frozen model's prediction differed from the requested
    /// target; the optimization still ran against the target.
    pub prediction_mismatch: bool,
}

/// Per-class activation map at the three stages of processing.
#[derive(Debug, Clone, PartialEq)]
pub struct Cam {
    pub class: RhythmClass,
    /// Straight off the feature map (one value per spatial cell).
    pub raw: Vec<f64>,
    /// Linearly interpolated to input resolution.
    pub upsampled: Vec<f64>,
    /// Min-max normalized to `[0, 1]` (all 0.5 when constant).
    pub overlay: Vec<f64>,
}

/// Min-max normalization to `[0, 1]`; constant input maps to all 0.5.
pub(crate) fn minmax_normalize(values: &[f64]) -> Vec<f64> {
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if max - min < 1e-12 {
        return vec![0.5; values.len()];
    }
    values.iter().map(|v| (v - min) / (max - min)).collect()
}
