//! Parametric ECG rhythm generator.
//!
//! Beats are sums of Gaussian bumps (one per canonical wave), rhythms are
//! R-peak time sequences with class-specific timing rules, and every
//! generated record carries ground-truth anomaly intervals so saliency
//! output can be scored quantitatively.

mod generate;
mod templates;

pub use generate::{generate_record, synth_beat};
pub use templates::{default_spec, TEMPLATE_VERSION};

use crate::error::{Error, Result};
use crate::signal::RhythmClass;

/// Canonical ECG wave tags. Informational: generation only uses the bump
/// parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Wave {
    P,
    Q,
    R,
    S,
    T,
}

/// One Gaussian bump: `amplitude * exp(-(t - center)^2 / (2 width^2))`,
/// with `center` in seconds relative to the R peak.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bump {
    pub wave: Wave,
    pub amplitude_mv: f64,
    pub center_s: f64,
    pub width_s: f64,
}

/// Beat morphology: a list of Gaussian bumps.
#[derive(Debug, Clone, PartialEq)]
pub struct BeatTemplate {
    pub components: Vec<Bump>,
}

/// Bump tails are truncated past this many widths from the center.
pub const BUMP_EXTENT_SIGMA: f64 = 3.5;

impl BeatTemplate {
    pub fn validate(&self) -> Result<()> {
        let r = self
            .components
            .iter()
            .find(|b| b.wave == Wave::R)
            .ok_or_else(|| Error::Config("beat template has no R bump".to_string()))?;
        if !(r.amplitude_mv > 0.0) {
            return Err(Error::Config(format!(
                "R amplitude must be positive, got {}",
                r.amplitude_mv
            )));
        }
        for b in &self.components {
            if !(b.width_s > 0.0) {
                return Err(Error::Config(format!(
                    "bump widths must be positive, got {}",
                    b.width_s
                )));
            }
        }
        Ok(())
    }

    /// Seconds the morphology extends left of the R peak.
    pub fn left_extent(&self) -> f64 {
        self.components
            .iter()
            .map(|b| BUMP_EXTENT_SIGMA * b.width_s - b.center_s)
            .fold(0.0, f64::max)
    }

    /// Seconds the morphology extends right of the R peak.
    pub fn right_extent(&self) -> f64 {
        self.components
            .iter()
            .map(|b| b.center_s + BUMP_EXTENT_SIGMA * b.width_s)
            .fold(0.0, f64::max)
    }

    /// Total span one beat needs, in seconds.
    pub fn support(&self) -> f64 {
        self.left_extent() + self.right_extent()
    }
}

/// Premature-beat behavior for PVC/PAC rhythms.
#[derive(Debug, Clone, PartialEq)]
pub struct EctopicSpec {
    /// Morphology of the premature beat.
    pub template: BeatTemplate,
    /// Label attached to the premature beat's annotation.
    pub label: RhythmClass,
    /// Chance that any given sinus beat is followed by an ectopic.
    pub probability: f64,
    /// Force an ectopic after this sinus beat index (for tests).
    pub force_after_beat: Option<usize>,
    /// Coupling interval as a fraction of the mean RR.
    pub coupling: f64,
    /// Position of the next sinus beat after the pre-ectopic beat, as a
    /// fraction of the mean RR (2.0 = fully compensatory pause).
    pub pause_total: f64,
}

/// Everything needed to generate one rhythm class.
#[derive(Debug, Clone, PartialEq)]
pub struct RhythmSpec {
    pub label: RhythmClass,
    pub rate_mean_bpm: f64,
    pub rate_jitter_bpm: f64,
    pub beat: BeatTemplate,
    pub ectopic: Option<EctopicSpec>,
    /// AFIB-style irregular RR intervals (uniform 0.7-1.35 of the mean).
    pub irregular_rr: bool,
    /// Fibrillatory-wave amplitude, 0 to disable.
    pub fibrillation_mv: f64,
    /// Additive white noise standard deviation.
    pub noise_mv: f64,
    /// Slow sinusoidal baseline wander amplitude.
    pub baseline_wander_mv: f64,
}

impl RhythmSpec {
    pub fn validate(&self) -> Result<()> {
        if !(20.0..=250.0).contains(&self.rate_mean_bpm) {
            return Err(Error::Config(format!(
                "mean rate {} bpm outside [20, 250]",
                self.rate_mean_bpm
            )));
        }
        if self.rate_jitter_bpm < 0.0 {
            return Err(Error::Config("rate jitter must be >= 0".to_string()));
        }
        self.beat.validate()?;
        if let Some(e) = &self.ectopic {
            e.template.validate()?;
            if !(0.0..=1.0).contains(&e.probability) {
                return Err(Error::Config("ectopic probability outside [0, 1]".to_string()));
            }
        }
        Ok(())
    }
}

/// Class-defining spans of a generated record, in record sample indices
/// (`[start, end)`).
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    pub intervals: Vec<(usize, usize)>,
}

impl GroundTruth {
    /// Intersects the intervals with a window `[center - half, center + half)`
    /// and rebases them to window coordinates.
    pub fn clip_to_window(&self, center: usize, half: usize) -> Vec<(usize, usize)> {
        let lo = center.saturating_sub(half);
        let hi = center + half;
        self.intervals
            .iter()
            .filter_map(|(s, e)| {
                let s = (*s).max(lo);
                let e = (*e).min(hi);
                if s < e {
                    Some((s - lo, e - lo))
                } else {
                    None
                }
            })
            .collect()
    }
}
