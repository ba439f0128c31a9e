//! Default per-class generation parameters.
//!
//! These constants are versioned: tests and acceptance thresholds are
//! calibrated against them, so changing any value is a breaking change.

use crate::signal::RhythmClass;
use crate::synth::{BeatTemplate, Bump, EctopicSpec, RhythmSpec, Wave};

/// Bump table version; bump when any constant below changes.
pub const TEMPLATE_VERSION: u32 = 1;

fn bump(wave: Wave, amplitude_mv: f64, center_s: f64, width_s: f64) -> Bump {
    Bump {
        wave,
        amplitude_mv,
        center_s,
        width_s,
    }
}

/// Sinus beat: upright P, narrow QRS, upright T.
fn sinus_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::P, 0.15, -0.16, 0.022),
            bump(Wave::Q, -0.10, -0.028, 0.009),
            bump(Wave::R, 1.10, 0.0, 0.012),
            bump(Wave::S, -0.22, 0.028, 0.009),
            bump(Wave::T, 0.32, 0.20, 0.040),
        ],
    }
}

/// Ventricular ectopic: wide tall QRS, no P, deep discordant T.
fn pvc_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::R, 1.55, 0.0, 0.040),
            bump(Wave::S, -0.85, 0.075, 0.035),
            bump(Wave::T, -0.48, 0.26, 0.050),
        ],
    }
}

/// Atrial ectopic: near-sinus QRS, flattened early P, slightly lower R.
fn pac_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::P, 0.06, -0.13, 0.018),
            bump(Wave::Q, -0.08, -0.026, 0.009),
            bump(Wave::R, 0.95, 0.0, 0.012),
            bump(Wave::S, -0.20, 0.026, 0.009),
            bump(Wave::T, 0.30, 0.19, 0.038),
        ],
    }
}

/// No P wave; QRS and T as sinus. Fibrillatory waves are added separately.
fn afib_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::Q, -0.10, -0.028, 0.009),
            bump(Wave::R, 1.05, 0.0, 0.012),
            bump(Wave::S, -0.22, 0.028, 0.009),
            bump(Wave::T, 0.30, 0.19, 0.038),
        ],
    }
}

/// Fast narrow-complex beat with the P buried; waves compressed to fit the
/// short cycle.
fn svta_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::Q, -0.08, -0.022, 0.008),
            bump(Wave::R, 1.00, 0.0, 0.011),
            bump(Wave::S, -0.20, 0.022, 0.008),
            bump(Wave::T, 0.26, 0.12, 0.025),
        ],
    }
}

/// Wide slurred R, absent Q, depressed ST and inverted T.
fn lbbb_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::P, 0.14, -0.18, 0.022),
            bump(Wave::R, 1.15, 0.0, 0.030),
            bump(Wave::S, -0.30, 0.085, 0.030),
            bump(Wave::T, -0.35, 0.24, 0.045),
        ],
    }
}

/// Secondary R peak and a prolonged deep S.
fn rbbb_beat() -> BeatTemplate {
    BeatTemplate {
        components: vec![
            bump(Wave::P, 0.14, -0.17, 0.022),
            bump(Wave::R, 1.00, 0.0, 0.012),
            bump(Wave::S, -0.55, 0.035, 0.018),
            bump(Wave::R, 0.70, 0.075, 0.016),
            bump(Wave::T, 0.28, 0.24, 0.042),
        ],
    }
}

/// The fixed parameter table behind `cmd synth` and the test suites.
pub fn default_spec(label: RhythmClass) -> RhythmSpec {
    let base = RhythmSpec {
        label,
        rate_mean_bpm: 72.0,
        rate_jitter_bpm: 3.0,
        beat: sinus_beat(),
        ectopic: None,
        irregular_rr: false,
        fibrillation_mv: 0.0,
        noise_mv: 0.025,
        baseline_wander_mv: 0.04,
    };
    match label {
        RhythmClass::Normal => base,
        RhythmClass::Pvc => RhythmSpec {
            ectopic: Some(EctopicSpec {
                template: pvc_beat(),
                label: RhythmClass::Pvc,
                probability: 0.22,
                force_after_beat: None,
                coupling: 0.62,
                pause_total: 2.0,
            }),
            ..base
        },
        RhythmClass::Pac => RhythmSpec {
            ectopic: Some(EctopicSpec {
                template: pac_beat(),
                label: RhythmClass::Pac,
                probability: 0.22,
                force_after_beat: None,
                coupling: 0.68,
                pause_total: 1.85,
            }),
            ..base
        },
        RhythmClass::Afib => RhythmSpec {
            rate_mean_bpm: 96.0,
            beat: afib_beat(),
            irregular_rr: true,
            fibrillation_mv: 0.09,
            ..base
        },
        RhythmClass::Svta => RhythmSpec {
            rate_mean_bpm: 170.0,
            rate_jitter_bpm: 5.0,
            beat: svta_beat(),
            ..base
        },
        RhythmClass::Sbr => RhythmSpec {
            rate_mean_bpm: 42.0,
            rate_jitter_bpm: 1.5,
            ..base
        },
        RhythmClass::Lbbb => RhythmSpec {
            beat: lbbb_beat(),
            ..base
        },
        RhythmClass::Rbbb => RhythmSpec {
            beat: rbbb_beat(),
            ..base
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_defaults_validate() {
        for class in RhythmClass::ALL {
            default_spec(class).validate().unwrap();
        }
    }

    #[test]
    fn supports_fit_their_rates() {
        // every class's beat must fit the shortest cycle its rate produces
        for class in RhythmClass::ALL {
            let spec = default_spec(class);
            let min_rr = 60.0 / (spec.rate_mean_bpm + 4.0 * spec.rate_jitter_bpm.max(1.0));
            assert!(
                spec.beat.support() < 2.0 * min_rr,
                "{class}: support {} vs rr {}",
                spec.beat.support(),
                min_rr
            );
        }
    }
}
