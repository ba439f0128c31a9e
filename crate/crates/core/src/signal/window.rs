//! Window extraction around annotated beats.

use crate::error::{Error, Result};
use crate::signal::{EcgRecord, Window, WindowSource, TARGET_FS, WINDOW_LEN};

/// Windows plus bookkeeping about annotations that could not be windowed.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowExtraction {
    pub windows: Vec<Window>,
    /// Annotations skipped for lack of context on either side.
    pub skipped_boundary: usize,
}

/// Cuts one window per annotation: the `WINDOW_LEN` samples centered on the
/// annotated beat (one second of context each side), z-normalized.
/// Annotations too close to either record edge are counted and skipped.
/// The record must already be at [`TARGET_FS`].
pub fn extract_windows(record: &EcgRecord) -> Result<WindowExtraction> {
    if (record.header.fs - TARGET_FS).abs() > 1e-9 {
        return Err(Error::Contract(format!(
            "windowing requires {} Hz records, got {} Hz",
            TARGET_FS, record.header.fs
        )));
    }
    let half = WINDOW_LEN / 2;
    let n = record.header.n_samples;
    let channel = record.primary_channel();
    let mut windows = Vec::new();
    let mut skipped_boundary = 0usize;
    for a in &record.annotations {
        let c = a.sample_index;
        if c < half || c + half > n {
            skipped_boundary += 1;
            continue;
        }
        let mut samples = channel[c - half..c + half].to_vec();
        normalize_window(&mut samples);
        windows.push(Window {
            samples,
            label: a.label,
            source: WindowSource {
                record: record.header.record_name.clone(),
                center: c,
            },
        });
    }
    Ok(WindowExtraction {
        windows,
        skipped_boundary,
    })
}

/// In-place z-normalization: mean 0, population standard deviation 1.
/// A constant window (zero deviation) becomes all zeros.
pub fn normalize_window(samples: &mut [f64]) {
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    let sigma = var.sqrt();
    if sigma < 1e-12 {
        samples.iter_mut().for_each(|v| *v = 0.0);
    } else {
        samples.iter_mut().for_each(|v| *v = (*v - mean) / sigma);
    }
}
