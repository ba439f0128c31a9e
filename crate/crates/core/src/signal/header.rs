//! Header text parsing.
//!
//! The accepted layout follows the PhysioNet convention:
//!
//! ```text
//! <record_name> <n_signals> <fs> <n_samples>
//! <file_name> <format> [gain[(baseline)][/units]] [adc_res] [adc_zero] ...
//! ```
//!
//! one signal-spec line per channel. Unknown trailing fields are ignored.
//! Comment lines start with `#`.

use crate::error::{Error, Result};
use crate::signal::{FormatCode, RecordHeader, SignalSpec};

const DEFAULT_GAIN: f64 = 200.0;

pub fn parse_header(text: &str) -> Result<RecordHeader> {
    let mut lines = text
        .lines()
        .enumerate()
        .map(|(i, l)| (i + 1, l.trim()))
        .filter(|(_, l)| !l.is_empty() && !l.starts_with('#'));

    let (line_no, record_line) = lines.next().ok_or(Error::Parse {
        line: 1,
        message: "empty header".to_string(),
    })?;
    let fields: Vec<&str> = record_line.split_whitespace().collect();
    if fields.len() < 4 {
        return Err(Error::Parse {
            line: line_no,
            message: format!("record line needs 4 fields, got {}", fields.len()),
        });
    }
    let record_name = fields[0];
    if record_name.contains('/') {
        // multi-segment records are out of scope
        return Err(Error::UnsupportedFormat(format!(
            "multi-segment record {}",
            record_name
        )));
    }
    let n_signals: usize = parse_field(fields[1], line_no, "signal count")?;
    // fs may carry a counter-frequency suffix: "360/360(0)"
    let fs_token = fields[2].split('/').next().unwrap_or(fields[2]);
    let fs: f64 = parse_field(fs_token, line_no, "sampling frequency")?;
    let n_samples: usize = parse_field(fields[3], line_no, "sample count")?;

    let mut signals = Vec::with_capacity(n_signals);
    for _ in 0..n_signals {
        let (line_no, line) = lines.next().ok_or(Error::Parse {
            line: line_no + 1,
            message: "missing signal specification line".to_string(),
        })?;
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.len() < 2 {
            return Err(Error::Parse {
                line: line_no,
                message: "signal line needs at least file name and format".to_string(),
            });
        }
        let file_name = fields[0].to_string();
        // a "212x2" style sample-multiplexing suffix is not supported
        let format_token = fields[1];
        if format_token.contains('x') || format_token.contains(':') {
            return Err(Error::UnsupportedFormat(format_token.to_string()));
        }
        let format = FormatCode::parse(format_token)?;
        let (gain, explicit_baseline) = match fields.get(2) {
            Some(token) => parse_gain(token, line_no)?,
            None => (DEFAULT_GAIN, None),
        };
        let adc_zero: i32 = match fields.get(4) {
            Some(token) => parse_field(token, line_no, "adc zero")?,
            None => 0,
        };
        let baseline = explicit_baseline.unwrap_or(adc_zero);
        signals.push(SignalSpec {
            file_name,
            format,
            gain,
            baseline,
        });
    }

    let header = RecordHeader {
        record_name: record_name.to_string(),
        n_signals,
        fs,
        n_samples,
        signals,
    };
    header.validate()?;
    Ok(header)
}

/// Gain tokens look like `200`, `200(12)`, or `200(12)/mV`.
fn parse_gain(token: &str, line: usize) -> Result<(f64, Option<i32>)> {
    let token = token.split('/').next().unwrap_or(token);
    match token.find('(') {
        Some(open) => {
            let close = token.find(')').ok_or(Error::Parse {
                line,
                message: format!("unclosed baseline in gain token {token:?}"),
            })?;
            let gain = parse_field(&token[..open], line, "gain")?;
            let baseline = parse_field(&token[open + 1..close], line, "baseline")?;
            Ok((gain, Some(baseline)))
        }
        None => Ok((parse_field(token, line, "gain")?, None)),
    }
}

fn parse_field<T: std::str::FromStr>(token: &str, line: usize, what: &str) -> Result<T> {
    token.parse().map_err(|_| Error::Parse {
        line,
        message: format!("invalid {what}: {token:?}"),
    })
}
