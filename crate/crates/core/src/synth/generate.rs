//! Beat and record generation.

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::signal::{
    BeatAnnotation, EcgRecord, FormatCode, RecordHeader, RhythmClass, SignalSpec,
};
use crate::synth::{BeatTemplate, GroundTruth, RhythmSpec, BUMP_EXTENT_SIGMA};

/// Seconds before the first R peak.
const LEAD_IN_S: f64 = 0.35;
/// A beat is emitted only if this much signal remains after its R peak.
const TAIL_MARGIN_S: f64 = 0.45;

/// Samples one beat over a single RR interval at `fs`, the R peak landing
/// exactly on sample `floor(n/2)`. Pure sum of the template's Gaussian
/// bumps; deterministic.
pub fn synth_beat(template: &BeatTemplate, fs: f64, rr_s: f64) -> Result<Vec<f64>> {
    for b in &template.components {
        if !(b.width_s > 0.0) {
            return Err(Error::Config(format!(
                "bump widths must be positive, got {}",
                b.width_s
            )));
        }
    }
    if rr_s <= template.support() {
        return Err(Error::Contract(format!(
            "rr interval {:.3}s does not cover template support {:.3}s",
            rr_s,
            template.support()
        )));
    }
    let n = (rr_s * fs).round() as usize;
    let mut out = vec![0.0; n];
    let r_time = (n / 2) as f64 / fs;
    add_beat(&mut out, fs, r_time, template);
    Ok(out)
}

/// Adds one beat's bumps onto the canvas at the given R time. Tails are
/// truncated at [`BUMP_EXTENT_SIGMA`] widths.
fn add_beat(canvas: &mut [f64], fs: f64, r_time: f64, template: &BeatTemplate) {
    let n = canvas.len();
    for b in &template.components {
        let center = r_time + b.center_s;
        let reach = BUMP_EXTENT_SIGMA * b.width_s;
        let lo = (((center - reach) * fs).ceil().max(0.0)) as usize;
        let hi = ((((center + reach) * fs).floor()) as usize).min(n.saturating_sub(1));
        for (i, slot) in canvas.iter_mut().enumerate().take(hi + 1).skip(lo) {
            let dt = i as f64 / fs - center;
            *slot += b.amplitude_mv * (-dt * dt / (2.0 * b.width_s * b.width_s)).exp();
        }
    }
}

#[derive(Debug, Clone)]
struct BeatEvent {
    r_time: f64,
    label: RhythmClass,
    ectopic: bool,
}

/// Generates a record of `duration_s` seconds at `fs` together with its
/// ground-truth anomaly intervals. Deterministic per seed.
pub fn generate_record(
    spec: &RhythmSpec,
    duration_s: f64,
    fs: f64,
    seed: u64,
) -> Result<(EcgRecord, GroundTruth)> {
    spec.validate()?;
    if duration_s < 4.0 {
        return Err(Error::Contract(format!(
            "duration must be at least 4 s, got {duration_s}"
        )));
    }
    let events = {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let events = build_events(spec, duration_s, &mut rng, None)?;
        let needs_ectopic = spec.ectopic.is_some();
        if needs_ectopic && !events.iter().any(|e| e.ectopic) {
            // short draws can miss every ectopic chance; force one so the
            // ground truth is never empty for an ectopic class
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            build_events(spec, duration_s, &mut rng, Some(1))?
        } else {
            events
        }
    };

    // noise and phases come from an independent stream so beat timing is
    // not perturbed by how many noise samples were drawn
    let mut noise_rng = ChaCha8Rng::seed_from_u64(seed ^ 0x9E37_79B9_7F4A_7C15);
    let n = (duration_s * fs).round() as usize;
    let mut samples = vec![0.0; n];
    for ev in &events {
        let template = if ev.ectopic {
            &spec.ectopic.as_ref().expect("ectopic event implies spec").template
        } else {
            &spec.beat
        };
        add_beat(&mut samples, fs, ev.r_time, template);
    }

    if spec.fibrillation_mv > 0.0 {
        let phases: [f64; 3] = [
            noise_rng.gen_range(0.0..std::f64::consts::TAU),
            noise_rng.gen_range(0.0..std::f64::consts::TAU),
            noise_rng.gen_range(0.0..std::f64::consts::TAU),
        ];
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let envelope = 0.75 + 0.25 * (std::f64::consts::TAU * 0.9 * t + phases[2]).sin();
            *s += spec.fibrillation_mv
                * envelope
                * ((std::f64::consts::TAU * 5.8 * t + phases[0]).sin()
                    + 0.6 * (std::f64::consts::TAU * 7.4 * t + phases[1]).sin());
        }
    }
    if spec.baseline_wander_mv > 0.0 {
        let phase = noise_rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, s) in samples.iter_mut().enumerate() {
            let t = i as f64 / fs;
            *s += spec.baseline_wander_mv * (std::f64::consts::TAU * 0.25 * t + phase).sin();
        }
    }
    if spec.noise_mv > 0.0 {
        let normal = Normal::new(0.0, spec.noise_mv).expect("positive sigma");
        for s in samples.iter_mut() {
            *s += normal.sample(&mut noise_rng);
        }
    }

    let annotations: Vec<BeatAnnotation> = events
        .iter()
        .map(|ev| BeatAnnotation {
            sample_index: ((ev.r_time * fs).round() as usize).min(n - 1),
            label: ev.label,
        })
        .collect();

    let ground_truth = build_ground_truth(spec, &events, fs, n);

    let record_name = format!("synth_{}_{}", spec.label.name().to_lowercase(), seed);
    let header = RecordHeader {
        record_name: record_name.clone(),
        n_signals: 1,
        fs,
        n_samples: n,
        signals: vec![SignalSpec {
            file_name: format!("{record_name}.sig.csv"),
            format: FormatCode::Csv,
            gain: 1.0,
            baseline: 0,
        }],
    };
    let record = EcgRecord {
        header,
        channels: vec![samples],
        annotations,
    };
    record.validate()?;
    Ok((record, ground_truth))
}

fn build_events(
    spec: &RhythmSpec,
    duration_s: f64,
    rng: &mut ChaCha8Rng,
    force_after: Option<usize>,
) -> Result<Vec<BeatEvent>> {
    let mean_rr = 60.0 / spec.rate_mean_bpm;
    let sinus_label = if spec.ectopic.is_some() {
        RhythmClass::Normal
    } else {
        spec.label
    };
    let rate_dist = Normal::new(spec.rate_mean_bpm, spec.rate_jitter_bpm.max(1e-12))
        .map_err(|e| Error::Config(format!("rate distribution: {e}")))?;
    let mut events = Vec::new();
    let mut t = LEAD_IN_S;
    let mut sinus_index = 0usize;
    while t + TAIL_MARGIN_S <= duration_s {
        events.push(BeatEvent {
            r_time: t,
            label: sinus_label,
            ectopic: false,
        });
        if let Some(e) = &spec.ectopic {
            let fire = force_after == Some(sinus_index)
                || (e.force_after_beat == Some(sinus_index))
                || rng.gen::<f64>() < e.probability;
            if fire {
                let ect_t = t + e.coupling * mean_rr;
                if ect_t + TAIL_MARGIN_S <= duration_s {
                    events.push(BeatEvent {
                        r_time: ect_t,
                        label: e.label,
                        ectopic: true,
                    });
                }
                t += e.pause_total * mean_rr;
                sinus_index += 1;
                continue;
            }
        }
        let rr = if spec.irregular_rr {
            mean_rr * rng.gen_range(0.70..1.35)
        } else {
            let bpm = rate_dist.sample(rng).clamp(20.0, 250.0);
            60.0 / bpm
        };
        t += rr;
        sinus_index += 1;
    }
    Ok(events)
}

fn build_ground_truth(
    spec: &RhythmSpec,
    events: &[BeatEvent],
    fs: f64,
    n: usize,
) -> GroundTruth {
    let clamp = |t: f64| -> usize { ((t * fs).round().max(0.0) as usize).min(n) };
    let mut intervals = Vec::new();
    match spec.label {
        RhythmClass::Normal => {}
        RhythmClass::Pvc | RhythmClass::Pac => {
            let e = spec.ectopic.as_ref().expect("ectopic class has a spec");
            let (left, right) = (e.template.left_extent(), e.template.right_extent());
            for ev in events.iter().filter(|ev| ev.ectopic) {
                intervals.push((clamp(ev.r_time - left), clamp(ev.r_time + right)));
            }
        }
        RhythmClass::Afib => {
            // fibrillatory activity shows between QRS complexes
            for pair in events.windows(2) {
                let lo = pair[0].r_time + 0.10;
                let hi = pair[1].r_time - 0.10;
                if hi - lo >= 0.08 {
                    intervals.push((clamp(lo), clamp(hi)));
                }
            }
        }
        RhythmClass::Svta | RhythmClass::Sbr => {
            intervals.push((0, n));
        }
        RhythmClass::Lbbb | RhythmClass::Rbbb => {
            let (left, right) = (spec.beat.left_extent(), spec.beat.right_extent());
            for ev in events {
                intervals.push((clamp(ev.r_time - left), clamp(ev.r_time + right)));
            }
        }
    }
    intervals.retain(|(s, e)| s < e);
    GroundTruth { intervals }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::synth::{default_spec, Bump, Wave};

    fn single_r(amplitude: f64) -> BeatTemplate {
        BeatTemplate {
            components: vec![Bump {
                wave: Wave::R,
                amplitude_mv: amplitude,
                center_s: 0.0,
                width_s: 0.012,
            }],
        }
    }

    #[test]
    fn single_bump_peaks_at_r_center() {
        let beat = synth_beat(&single_r(1.0), 360.0, 1.0).unwrap();
        assert_eq!(beat.len(), 360);
        let (argmax, max) = beat
            .iter()
            .enumerate()
            .fold((0, f64::MIN), |acc, (i, v)| if *v > acc.1 { (i, *v) } else { acc });
        assert_eq!(argmax, 180);
        assert!((max - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_amplitudes_give_zero_beat() {
        let beat = synth_beat(&single_r(0.0), 360.0, 1.0).unwrap();
        assert!(beat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn disjoint_bumps_superpose() {
        let a = Bump {
            wave: Wave::P,
            amplitude_mv: 0.4,
            center_s: -0.15,
            width_s: 0.02,
        };
        let b = Bump {
            wave: Wave::T,
            amplitude_mv: 0.3,
            center_s: 0.18,
            width_s: 0.03,
        };
        let r = Bump {
            wave: Wave::R,
            amplitude_mv: 0.0,
            center_s: 0.0,
            width_s: 0.01,
        };
        let both = BeatTemplate {
            components: vec![a, b, r],
        };
        let only_a = BeatTemplate {
            components: vec![a, r],
        };
        let only_b = BeatTemplate {
            components: vec![b, r],
        };
        let fs = 360.0;
        let sum: Vec<f64> = synth_beat(&only_a, fs, 1.0)
            .unwrap()
            .iter()
            .zip(synth_beat(&only_b, fs, 1.0).unwrap())
            .map(|(x, y)| x + y)
            .collect();
        let combined = synth_beat(&both, fs, 1.0).unwrap();
        for (c, s) in combined.iter().zip(&sum) {
            assert!((c - s).abs() < 1e-15);
        }
    }

    #[test]
    fn short_interval_is_rejected() {
        let t = default_spec(RhythmClass::Normal).beat;
        assert!(synth_beat(&t, 360.0, t.support() * 0.9).is_err());
    }

    #[test]
    fn normal_sixty_bpm_ten_seconds_gives_ten_beats() {
        let mut spec = default_spec(RhythmClass::Normal);
        spec.rate_mean_bpm = 60.0;
        spec.rate_jitter_bpm = 0.0;
        spec.noise_mv = 0.0;
        let (record, _) = generate_record(&spec, 10.0, 360.0, 5).unwrap();
        assert_eq!(record.annotations.len(), 10);
        for pair in record.annotations.windows(2) {
            assert_eq!(pair[1].sample_index - pair[0].sample_index, 360);
        }
    }

    #[test]
    fn slow_forty_bpm_twelve_seconds_gives_eight_beats() {
        let mut spec = default_spec(RhythmClass::Sbr);
        spec.rate_mean_bpm = 40.0;
        spec.rate_jitter_bpm = 0.0;
        let (record, gt) = generate_record(&spec, 12.0, 360.0, 5).unwrap();
        assert_eq!(record.annotations.len(), 8);
        assert_eq!(gt.intervals, vec![(0, record.header.n_samples)]);
    }

    #[test]
    fn forced_ectopic_is_labeled_and_covered() {
        let mut spec = default_spec(RhythmClass::Pvc);
        spec.ectopic.as_mut().unwrap().probability = 0.0;
        spec.ectopic.as_mut().unwrap().force_after_beat = Some(2);
        let (record, gt) = generate_record(&spec, 10.0, 360.0, 9).unwrap();
        let ectopics: Vec<_> = record
            .annotations
            .iter()
            .filter(|a| a.label == RhythmClass::Pvc)
            .collect();
        assert_eq!(ectopics.len(), 1);
        assert_eq!(gt.intervals.len(), 1);
        let (lo, hi) = gt.intervals[0];
        let r = ectopics[0].sample_index;
        assert!(lo < r && r < hi, "ectopic R {r} inside ground truth [{lo}, {hi})");
        // the interval covers the widened QRS: at least 0.3 s wide
        assert!(hi - lo > (0.3 * 360.0) as usize);
        // remaining beats are sinus
        assert!(record
            .annotations
            .iter()
            .filter(|a| a.sample_index != r)
            .all(|a| a.label == RhythmClass::Normal));
    }

    #[test]
    fn pvc_records_always_contain_an_ectopic() {
        let spec = default_spec(RhythmClass::Pvc);
        for seed in 0..20 {
            let (record, gt) = generate_record(&spec, 8.0, 360.0, seed).unwrap();
            assert!(
                record.annotations.iter().any(|a| a.label == RhythmClass::Pvc),
                "seed {seed}"
            );
            assert!(!gt.intervals.is_empty());
        }
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let spec = default_spec(RhythmClass::Afib);
        let (r1, g1) = generate_record(&spec, 12.0, 360.0, 1234).unwrap();
        let (r2, g2) = generate_record(&spec, 12.0, 360.0, 1234).unwrap();
        assert_eq!(g1, g2);
        assert_eq!(r1.annotations, r2.annotations);
        let bits1: Vec<u64> = r1.channels[0].iter().map(|v| v.to_bits()).collect();
        let bits2: Vec<u64> = r2.channels[0].iter().map(|v| v.to_bits()).collect();
        assert_eq!(bits1, bits2);
        let (r3, _) = generate_record(&spec, 12.0, 360.0, 1235).unwrap();
        assert_ne!(r1.channels[0], r3.channels[0]);
    }

    #[test]
    fn mean_rr_tracks_the_spec_rate() {
        let spec = default_spec(RhythmClass::Normal);
        let (record, _) = generate_record(&spec, 90.0, 360.0, 77).unwrap();
        let rrs: Vec<f64> = record
            .annotations
            .windows(2)
            .map(|p| (p[1].sample_index - p[0].sample_index) as f64 / 360.0)
            .collect();
        let mean_rr = rrs.iter().sum::<f64>() / rrs.len() as f64;
        let expected = 60.0 / spec.rate_mean_bpm;
        assert!(
            (mean_rr - expected).abs() / expected < 0.05,
            "mean rr {mean_rr} vs {expected}"
        );
    }

    #[test]
    fn afib_ground_truth_marks_inter_beat_segments() {
        let spec = default_spec(RhythmClass::Afib);
        let (record, gt) = generate_record(&spec, 12.0, 360.0, 3).unwrap();
        assert!(!gt.intervals.is_empty());
        // no interval contains an R peak
        for a in &record.annotations {
            for (lo, hi) in &gt.intervals {
                assert!(
                    a.sample_index < *lo || a.sample_index >= *hi,
                    "R peak {} inside fibrillatory span [{lo}, {hi})",
                    a.sample_index
                );
            }
        }
    }

    #[test]
    fn too_short_duration_is_rejected() {
        let spec = default_spec(RhythmClass::Normal);
        assert!(generate_record(&spec, 3.0, 360.0, 0).is_err());
    }

    #[test]
    fn slow_and_fast_rhythms_separate_by_window_beat_count() {
        // nearest-centroid on (beat count, mean RR) separates SBR from SVTA
        let mut features: Vec<(f64, f64, bool)> = Vec::new(); // (count, rr, is_svta)
        for (class, is_svta) in [(RhythmClass::Sbr, false), (RhythmClass::Svta, true)] {
            let spec = default_spec(class);
            let mut collected = 0;
            let mut seed = 0;
            while collected < 50 {
                let (record, _) = generate_record(&spec, 30.0, 360.0, seed).unwrap();
                let ext = crate::signal::extract_windows(&record).unwrap();
                for w in ext.windows {
                    if collected >= 50 {
                        break;
                    }
                    let lo = w.source.center - 360;
                    let hi = w.source.center + 360;
                    let beats: Vec<usize> = record
                        .annotations
                        .iter()
                        .map(|a| a.sample_index)
                        .filter(|s| (lo..hi).contains(s))
                        .collect();
                    let mean_rr = if beats.len() >= 2 {
                        (beats[beats.len() - 1] - beats[0]) as f64 / (beats.len() - 1) as f64
                    } else {
                        720.0
                    };
                    features.push((beats.len() as f64, mean_rr, is_svta));
                    collected += 1;
                }
                seed += 1;
            }
        }
        let centroid = |svta: bool| -> (f64, f64) {
            let group: Vec<_> = features.iter().filter(|f| f.2 == svta).collect();
            let n = group.len() as f64;
            (
                group.iter().map(|f| f.0).sum::<f64>() / n,
                group.iter().map(|f| f.1).sum::<f64>() / n,
            )
        };
        let (c_sbr, c_svta) = (centroid(false), centroid(true));
        let dist = |f: &(f64, f64, bool), c: (f64, f64)| {
            // scale RR (samples) down so both features contribute
            (f.0 - c.0).powi(2) + ((f.1 - c.1) / 100.0).powi(2)
        };
        let correct = features
            .iter()
            .filter(|f| {
                let to_svta = dist(f, c_svta) < dist(f, c_sbr);
                to_svta == f.2
            })
            .count();
        assert_eq!(correct, features.len(), "separability below 100%");
    }
}
