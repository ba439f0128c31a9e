//! On-disk dataset layout shared by the synthesizer, the ingester, and the
//! training commands.
//!
//! A dataset directory holds:
//!
//! ```text
//! records.csv        one `name,fs,n_samples` line per record
//! <name>.sig.csv     one millivolt value per line
//! <name>.ann.csv     `sample_index,label` lines
//! <name>.gt.csv      `window_id,start,end` lines (optional, window coords)
//! ```
//!
//! The synthesizer writes one record per analysis window (annotation at the
//! center sample), so requested class counts are exact on disk.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::signal::{
    extract_windows, format_csv_annotations, format_csv_signal, parse_csv_annotations,
    parse_csv_signal, resample_linear, BeatAnnotation, EcgRecord, FormatCode, RecordHeader,
    RhythmClass, SignalSpec, Window, TARGET_FS, WINDOW_LEN,
};
use crate::synth::{default_spec, generate_record};

/// Ground-truth anomaly intervals per window id, in window coordinates.
pub type WindowGroundTruth = HashMap<String, Vec<(usize, usize)>>;

#[derive(Debug, Clone, Default)]
pub struct Dataset {
    pub records: Vec<EcgRecord>,
    pub ground_truth: WindowGroundTruth,
}

/// Windows extracted from every record of a dataset.
#[derive(Debug, Clone)]
pub struct WindowSet {
    pub windows: Vec<Window>,
    pub skipped_boundary: usize,
}

impl Dataset {
    /// Cuts analysis windows from every record (records must be at the
    /// target rate already; [`Dataset::load_csv_dir`] guarantees that).
    pub fn windows(&self) -> Result<WindowSet> {
        let mut windows = Vec::new();
        let mut skipped = 0;
        for record in &self.records {
            let extraction = extract_windows(record)?;
            windows.extend(extraction.windows);
            skipped += extraction.skipped_boundary;
        }
        Ok(WindowSet {
            windows,
            skipped_boundary: skipped,
        })
    }

    /// Loads a CSV dataset directory, resampling any record that is not at
    /// the target rate.
    pub fn load_csv_dir(dir: &Path) -> Result<Dataset> {
        let index_path = dir.join("records.csv");
        let index = read_text(&index_path)?;
        let mut records = Vec::new();
        let mut ground_truth = WindowGroundTruth::new();
        for (line_no, line) in index.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let fields: Vec<&str> = line.split(',').collect();
            if fields.len() < 2 {
                return Err(Error::Parse {
                    line: line_no + 1,
                    message: format!("records.csv expects name,fs[,n_samples], got {line:?}"),
                });
            }
            let name = fields[0].trim().to_string();
            let fs: f64 = fields[1].trim().parse().map_err(|_| Error::Parse {
                line: line_no + 1,
                message: format!("invalid sampling rate {:?}", fields[1]),
            })?;
            let samples = parse_csv_signal(&read_text(&dir.join(format!("{name}.sig.csv")))?)?;
            let ann_path = dir.join(format!("{name}.ann.csv"));
            let annotations = if ann_path.exists() {
                parse_csv_annotations(&read_text(&ann_path)?)?
            } else {
                Vec::new()
            };
            let record = EcgRecord {
                header: RecordHeader {
                    record_name: name.clone(),
                    n_signals: 1,
                    fs,
                    n_samples: samples.len(),
                    signals: vec![SignalSpec {
                        file_name: format!("{name}.sig.csv"),
                        format: FormatCode::Csv,
                        gain: 1.0,
                        baseline: 0,
                    }],
                },
                channels: vec![samples],
                annotations,
            };
            record.validate()?;
            let record = resample_linear(&record, TARGET_FS)?;
            records.push(record);

            let gt_path = dir.join(format!("{name}.gt.csv"));
            if gt_path.exists() {
                parse_gt_file(&read_text(&gt_path)?, &mut ground_truth)?;
            }
        }
        Ok(Dataset {
            records,
            ground_truth,
        })
    }

    /// Loads a PhysioNet-style directory: every `*.hea` header with its
    /// binary signal and (optionally) `.atr` annotation stream.
    pub fn load_physionet_dir(dir: &Path) -> Result<Dataset> {
        let mut header_paths: Vec<PathBuf> = std::fs::read_dir(dir)
            .map_err(|e| Error::io(dir, e))?
            .filter_map(|entry| entry.ok().map(|e| e.path()))
            .filter(|p| p.extension().map(|e| e == "hea").unwrap_or(false))
            .collect();
        header_paths.sort();
        if header_paths.is_empty() {
            return Err(Error::Parse {
                line: 0,
                message: format!("no .hea files under {}", dir.display()),
            });
        }
        let mut records = Vec::new();
        for header_path in header_paths {
            let header = crate::signal::parse_header(&read_text(&header_path)?)?;
            let signal_path = dir.join(&header.signals[0].file_name);
            let bytes = std::fs::read(&signal_path).map_err(|e| Error::io(&signal_path, e))?;
            let gains: Vec<f64> = header.signals.iter().map(|s| s.gain).collect();
            let baselines: Vec<i32> = header.signals.iter().map(|s| s.baseline).collect();
            let channels = match header.signals[0].format {
                FormatCode::F212 => crate::signal::decode_format212_mv(
                    &bytes,
                    header.n_signals,
                    header.n_samples,
                    &gains,
                    &baselines,
                )?,
                FormatCode::F16 => crate::signal::decode_format16(
                    &bytes,
                    header.n_signals,
                    header.n_samples,
                    &gains,
                    &baselines,
                )?,
                FormatCode::Csv => vec![parse_csv_signal(&String::from_utf8_lossy(&bytes))?],
            };
            let ann_path = header_path.with_extension("atr");
            let annotations = if ann_path.exists() {
                let ann_bytes = std::fs::read(&ann_path).map_err(|e| Error::io(&ann_path, e))?;
                let parsed = crate::signal::parse_annotations(&ann_bytes)?;
                if parsed.dropped > 0 {
                    log::info!(
                        "{}: dropped {} annotations without a class mapping",
                        header.record_name,
                        parsed.dropped
                    );
                }
                parsed.annotations
            } else {
                Vec::new()
            };
            let record = EcgRecord {
                header,
                channels,
                annotations,
            };
            record.validate()?;
            records.push(resample_linear(&record, TARGET_FS)?);
        }
        Ok(Dataset {
            records,
            ground_truth: WindowGroundTruth::new(),
        })
    }

    /// Writes the dataset as a CSV directory, returning every file written.
    pub fn save_csv_dir(&self, dir: &Path) -> Result<Vec<PathBuf>> {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        let mut written = Vec::new();
        let mut index = String::new();
        for record in &self.records {
            let name = &record.header.record_name;
            index.push_str(&format!(
                "{},{},{}\n",
                name, record.header.fs, record.header.n_samples
            ));
            let sig_path = dir.join(format!("{name}.sig.csv"));
            write_text(&sig_path, &format_csv_signal(record.primary_channel()))?;
            written.push(sig_path);
            let ann_path = dir.join(format!("{name}.ann.csv"));
            write_text(&ann_path, &format_csv_annotations(&record.annotations))?;
            written.push(ann_path);
        }
        let index_path = dir.join("records.csv");
        write_text(&index_path, &index)?;
        written.push(index_path);

        let mut by_record: HashMap<&str, Vec<(&String, &Vec<(usize, usize)>)>> = HashMap::new();
        for (window_id, intervals) in &self.ground_truth {
            let record_name = window_id.rsplit_once(':').map(|(r, _)| r).unwrap_or(window_id);
            by_record
                .entry(record_name)
                .or_default()
                .push((window_id, intervals));
        }
        for (record_name, mut entries) in by_record {
            entries.sort_by(|a, b| a.0.cmp(b.0));
            let mut text = String::new();
            for (window_id, intervals) in entries {
                for (start, end) in intervals {
                    text.push_str(&format!("{window_id},{start},{end}\n"));
                }
            }
            let gt_path = dir.join(format!("{record_name}.gt.csv"));
            write_text(&gt_path, &text)?;
            written.push(gt_path);
        }
        Ok(written)
    }
}

fn parse_gt_file(text: &str, ground_truth: &mut WindowGroundTruth) -> Result<()> {
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 3 {
            return Err(Error::Parse {
                line: i + 1,
                message: format!("ground truth expects window_id,start,end, got {line:?}"),
            });
        }
        let parse_idx = |tok: &str| -> Result<usize> {
            tok.trim().parse().map_err(|_| Error::Parse {
                line: i + 1,
                message: format!("invalid ground-truth index {tok:?}"),
            })
        };
        ground_truth
            .entry(fields[0].trim().to_string())
            .or_default()
            .push((parse_idx(fields[1])?, parse_idx(fields[2])?));
    }
    Ok(())
}

/// Generates a balanced synthetic window inventory: exactly `per_class`
/// windows of every class, each stored as its own 720-sample record with
/// the annotation at the center and ground truth in window coordinates.
pub fn generate_synthetic_dataset(per_class: usize, seed: u64, duration_s: f64) -> Result<Dataset> {
    let half = WINDOW_LEN / 2;
    let mut records = Vec::new();
    let mut ground_truth = WindowGroundTruth::new();
    for class in RhythmClass::ALL {
        let spec = default_spec(class);
        let mut seed_stream = ChaCha8Rng::seed_from_u64(seed ^ ((class.index() as u64) << 32));
        let mut kept = 0usize;
        while kept < per_class {
            let record_seed: u64 = seed_stream.gen();
            let (record, gt) = generate_record(&spec, duration_s, TARGET_FS, record_seed)?;
            for annotation in &record.annotations {
                if kept >= per_class {
                    break;
                }
                if annotation.label != class {
                    continue;
                }
                let c = annotation.sample_index;
                if c < half || c + half > record.header.n_samples {
                    continue;
                }
                let name = format!("{}_{:05}", class.name().to_lowercase(), kept);
                let slice = record.primary_channel()[c - half..c + half].to_vec();
                let window_id = format!("{name}:{half}");
                let intervals = gt.clip_to_window(c, half);
                if !intervals.is_empty() {
                    ground_truth.insert(window_id, intervals);
                }
                records.push(EcgRecord {
                    header: RecordHeader {
                        record_name: name.clone(),
                        n_signals: 1,
                        fs: TARGET_FS,
                        n_samples: WINDOW_LEN,
                        signals: vec![SignalSpec {
                            file_name: format!("{name}.sig.csv"),
                            format: FormatCode::Csv,
                            gain: 1.0,
                            baseline: 0,
                        }],
                    },
                    channels: vec![slice],
                    annotations: vec![BeatAnnotation {
                        sample_index: half,
                        label: class,
                    }],
                });
                kept += 1;
            }
        }
    }
    Ok(Dataset {
        records,
        ground_truth,
    })
}

fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn synthetic_inventory_is_exact_and_deterministic() {
        let ds = generate_synthetic_dataset(3, 9, 20.0).unwrap();
        assert_eq!(ds.records.len(), 24);
        for class in RhythmClass::ALL {
            let count = ds
                .records
                .iter()
                .filter(|r| r.annotations[0].label == class)
                .count();
            assert_eq!(count, 3, "{class}");
        }
        let ds2 = generate_synthetic_dataset(3, 9, 20.0).unwrap();
        assert_eq!(ds.records.len(), ds2.records.len());
        for (a, b) in ds.records.iter().zip(&ds2.records) {
            assert_eq!(a, b);
        }
        assert_eq!(ds.ground_truth, ds2.ground_truth);
    }

    #[test]
    fn csv_round_trip_preserves_windows_and_ground_truth() {
        let dir = tempfile::tempdir().unwrap();
        let ds = generate_synthetic_dataset(2, 4, 20.0).unwrap();
        let written = ds.save_csv_dir(dir.path()).unwrap();
        assert!(written.iter().all(|p| p.exists()));
        let loaded = Dataset::load_csv_dir(dir.path()).unwrap();
        assert_eq!(loaded.records.len(), ds.records.len());
        let mut a = loaded.records.clone();
        let mut b = ds.records.clone();
        a.sort_by(|x, y| x.header.record_name.cmp(&y.header.record_name));
        b.sort_by(|x, y| x.header.record_name.cmp(&y.header.record_name));
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.header.record_name, y.header.record_name);
            assert_eq!(x.annotations, y.annotations);
            assert_eq!(x.channels[0].len(), y.channels[0].len());
            for (u, v) in x.channels[0].iter().zip(&y.channels[0]) {
                assert!((u - v).abs() < 1e-12);
            }
        }
        assert_eq!(loaded.ground_truth, ds.ground_truth);
        let ws = loaded.windows().unwrap();
        assert_eq!(ws.windows.len(), 16);
        assert!(ws.windows.iter().all(|w| w.samples.len() == WINDOW_LEN));
    }

    #[test]
    fn pvc_windows_carry_ground_truth_around_center() {
        let ds = generate_synthetic_dataset(4, 11, 20.0).unwrap();
        for record in &ds.records {
            if record.annotations[0].label != RhythmClass::Pvc {
                continue;
            }
            let id = format!("{}:360", record.header.record_name);
            let gt = ds.ground_truth.get(&id).expect("PVC window has ground truth");
            assert!(gt.iter().any(|(s, e)| *s < 360 && 360 < *e));
        }
    }

    #[test]
    fn physionet_round_trip_through_binary_formats() {
        let dir = tempfile::tempdir().unwrap();
        // build a small format-212 record with annotations
        let raw: Vec<i32> = (0..2000).map(|i| ((i as f64 * 0.05).sin() * 400.0) as i32).collect();
        let bytes = crate::signal::encode_format212(&raw).unwrap();
        std::fs::write(dir.path().join("r1.dat"), &bytes).unwrap();
        std::fs::write(
            dir.path().join("r1.hea"),
            "r1 1 360 2000\nr1.dat 212 200 12 0\n",
        )
        .unwrap();
        let annotations = vec![
            BeatAnnotation {
                sample_index: 900,
                label: RhythmClass::Normal,
            },
            BeatAnnotation {
                sample_index: 1500,
                label: RhythmClass::Lbbb,
            },
        ];
        let ann_bytes = crate::signal::encode_annotations(&annotations).unwrap();
        std::fs::write(dir.path().join("r1.atr"), &ann_bytes).unwrap();

        let ds = Dataset::load_physionet_dir(dir.path()).unwrap();
        assert_eq!(ds.records.len(), 1);
        let record = &ds.records[0];
        assert_eq!(record.header.fs, TARGET_FS);
        assert_eq!(record.annotations, annotations);
        // gain 200: raw 400 -> 2 mV
        let max = record.primary_channel().iter().cloned().fold(f64::MIN, f64::max);
        assert!((max - 400.0 / 200.0).abs() < 0.05);
        let ws = ds.windows().unwrap();
        assert_eq!(ws.windows.len(), 2);
    }
}
