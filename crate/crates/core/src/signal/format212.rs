//! Packed binary signal codecs.
//!
//! Format 212 packs two 12-bit two's-complement samples into 3 bytes:
//! `s1 = ((b1 & 0x0F) << 8) | b0` and `s2 = ((b1 >> 4) << 8) | b2`, each
//! sign-extended from 12 bits. Format 16 is plain little-endian i16.
//! Channels are interleaved sample-by-sample in both formats.

use crate::error::{Error, Result};

const MIN12: i32 = -2048;
const MAX12: i32 = 2047;

#[inline]
fn sign_extend_12(raw: u16) -> i32 {
    if raw & 0x800 != 0 {
        raw as i32 - 4096
    } else {
        raw as i32
    }
}

/// Decodes `n_values` raw ADC samples from a format-212 byte stream.
///
/// When `n_values` is odd the final triplet carries one payload sample and a
/// zero-padded second slot, which is accepted and discarded.
pub fn decode_format212(bytes: &[u8], n_values: usize) -> Result<Vec<i32>> {
    if bytes.len() % 3 != 0 {
        return Err(Error::TruncatedInput(format!(
            "format 212 stream of {} bytes is not triplet-aligned",
            bytes.len()
        )));
    }
    let capacity = bytes.len() / 3 * 2;
    if capacity < n_values {
        return Err(Error::TruncatedInput(format!(
            "format 212 stream holds {} samples, {} requested",
            capacity, n_values
        )));
    }
    let mut out = Vec::with_capacity(n_values);
    for triple in bytes.chunks_exact(3) {
        let first = ((triple[1] as u16 & 0x0F) << 8) | triple[0] as u16;
        let second = ((triple[1] as u16 >> 4) << 8) | triple[2] as u16;
        out.push(sign_extend_12(first));
        if out.len() == n_values {
            break;
        }
        out.push(sign_extend_12(second));
        if out.len() == n_values {
            break;
        }
    }
    Ok(out)
}

/// Packs raw ADC samples into format-212 bytes, zero-padding an odd tail.
pub fn encode_format212(values: &[i32]) -> Result<Vec<u8>> {
    let mut out = Vec::with_capacity(values.len().div_ceil(2) * 3);
    for pair in values.chunks(2) {
        let a = pair[0];
        let b = pair.get(1).copied().unwrap_or(0);
        for v in [a, b] {
            if !(MIN12..=MAX12).contains(&v) {
                return Err(Error::Contract(format!(
                    "sample {} does not fit in 12 bits",
                    v
                )));
            }
        }
        let au = (a & 0xFFF) as u16;
        let bu = (b & 0xFFF) as u16;
        out.push((au & 0xFF) as u8);
        out.push(((au >> 8) as u8 & 0x0F) | (((bu >> 8) as u8 & 0x0F) << 4));
        out.push((bu & 0xFF) as u8);
    }
    Ok(out)
}

/// Decodes an interleaved format-212 stream straight to per-channel
/// millivolts: `mv = (raw - baseline) / gain`.
pub fn decode_format212_mv(
    bytes: &[u8],
    n_signals: usize,
    n_samples: usize,
    gains: &[f64],
    baselines: &[i32],
) -> Result<Vec<Vec<f64>>> {
    if gains.len() != n_signals || baselines.len() != n_signals {
        return Err(Error::shape(
            "decode_format212_mv",
            format!(
                "{} gains / {} baselines for {} signals",
                gains.len(),
                baselines.len(),
                n_signals
            ),
        ));
    }
    let raw = decode_format212(bytes, n_signals * n_samples)?;
    Ok(deinterleave_mv(&raw, n_signals, n_samples, gains, baselines))
}

/// Decodes little-endian 16-bit samples to per-channel millivolts.
pub fn decode_format16(
    bytes: &[u8],
    n_signals: usize,
    n_samples: usize,
    gains: &[f64],
    baselines: &[i32],
) -> Result<Vec<Vec<f64>>> {
    let wanted = n_signals * n_samples;
    if bytes.len() < wanted * 2 {
        return Err(Error::TruncatedInput(format!(
            "format 16 stream holds {} samples, {} requested",
            bytes.len() / 2,
            wanted
        )));
    }
    let raw: Vec<i32> = bytes
        .chunks_exact(2)
        .take(wanted)
        .map(|p| i16::from_le_bytes([p[0], p[1]]) as i32)
        .collect();
    Ok(deinterleave_mv(&raw, n_signals, n_samples, gains, baselines))
}

fn deinterleave_mv(
    raw: &[i32],
    n_signals: usize,
    n_samples: usize,
    gains: &[f64],
    baselines: &[i32],
) -> Vec<Vec<f64>> {
    let mut channels = vec![Vec::with_capacity(n_samples); n_signals];
    for (i, v) in raw.iter().enumerate() {
        let ch = i % n_signals;
        channels[ch].push((v - baselines[ch]) as f64 / gains[ch]);
    }
    channels
}
