//! CSV signal and annotation formats: the plain-text ingestion path shared
//! by the synthetic generator and third-party data.
//!
//! Signal files carry one floating-point millivolt value per line.
//! Annotation files carry `sample_index,label` lines.

use crate::error::{Error, Result};
use crate::signal::{BeatAnnotation, RhythmClass};

pub fn parse_csv_signal(text: &str) -> Result<Vec<f64>> {
    let mut samples = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let v: f64 = line.parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("invalid sample value {line:?}"),
        })?;
        samples.push(v);
    }
    Ok(samples)
}

pub fn format_csv_signal(samples: &[f64]) -> String {
    let mut out = String::with_capacity(samples.len() * 12);
    for s in samples {
        out.push_str(&format!("{s}\n"));
    }
    out
}

pub fn parse_csv_annotations(text: &str) -> Result<Vec<BeatAnnotation>> {
    let mut annotations = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (idx_token, label_token) = line.split_once(',').ok_or(Error::Parse {
            line: i + 1,
            message: format!("expected index,label, got {line:?}"),
        })?;
        let sample_index: usize = idx_token.trim().parse().map_err(|_| Error::Parse {
            line: i + 1,
            message: format!("invalid sample index {idx_token:?}"),
        })?;
        let label = RhythmClass::from_name(label_token.trim()).ok_or(Error::Parse {
            line: i + 1,
            message: format!("unknown class {label_token:?}"),
        })?;
        annotations.push(BeatAnnotation {
            sample_index,
            label,
        });
    }
    Ok(annotations)
}

pub fn format_csv_annotations(annotations: &[BeatAnnotation]) -> String {
    let mut out = String::new();
    for a in annotations {
        out.push_str(&format!("{},{}\n", a.sample_index, a.label.name()));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_round_trip() {
        let samples = vec![0.5, -1.25, 3e-4, 0.0];
        let text = format_csv_signal(&samples);
        assert_eq!(parse_csv_signal(&text).unwrap(), samples);
    }

    #[test]
    fn annotation_round_trip() {
        let a = vec![
            BeatAnnotation {
                sample_index: 10,
                label: RhythmClass::Afib,
            },
            BeatAnnotation {
                sample_index: 400,
                label: RhythmClass::Normal,
            },
        ];
        let text = format_csv_annotations(&a);
        assert_eq!(parse_csv_annotations(&text).unwrap(), a);
    }

    #[test]
    fn bad_lines_report_position() {
        match parse_csv_signal("1.0\nnot_a_number\n") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(parse_csv_annotations("5,NOPE\n").is_err());
        assert!(parse_csv_annotations("5\n").is_err());
    }
}
