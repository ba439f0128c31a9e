//! Linear resampling to the pipeline's target rate.

use crate::error::{Error, Result};
use crate::signal::EcgRecord;

/// Resamples every channel to `target_fs` by endpoint-aligned linear
/// interpolation. The output has `round(n_samples * target_fs / fs)` samples
/// per channel; the first and last sample values are preserved. Annotation
/// indices are rescaled by the same ratio and rounded.
pub fn resample_linear(record: &EcgRecord, target_fs: f64) -> Result<EcgRecord> {
    if !(target_fs > 0.0) {
        return Err(Error::Contract(format!(
            "target sampling frequency must be positive, got {target_fs}"
        )));
    }
    let fs = record.header.fs;
    if (fs - target_fs).abs() < 1e-12 {
        return Ok(record.clone());
    }
    let n_in = record.header.n_samples;
    let ratio = target_fs / fs;
    let n_out = ((n_in as f64) * ratio).round() as usize;
    let channels: Vec<Vec<f64>> = record
        .channels
        .iter()
        .map(|ch| resample_channel(ch, n_out))
        .collect();
    let mut annotations = record.annotations.clone();
    for a in &mut annotations {
        let scaled = (a.sample_index as f64 * ratio).round() as usize;
        a.sample_index = scaled.min(n_out.saturating_sub(1));
    }
    let mut header = record.header.clone();
    header.fs = target_fs;
    header.n_samples = n_out;
    Ok(EcgRecord {
        header,
        channels,
        annotations,
    })
}

fn resample_channel(input: &[f64], n_out: usize) -> Vec<f64> {
    let n_in = input.len();
    if n_out == 0 || n_in == 0 {
        return Vec::new();
    }
    if n_in == 1 || n_out == 1 {
        return vec![input[0]; n_out];
    }
    let step = (n_in - 1) as f64 / (n_out - 1) as f64;
    (0..n_out)
        .map(|j| {
            let pos = j as f64 * step;
            let i = (pos.floor() as usize).min(n_in - 2);
            let frac = pos - i as f64;
            input[i] * (1.0 - frac) + input[i + 1] * frac
        })
        .collect()
}
