//! PhysioNet-style record ingestion: header text, packed binary signals,
//! annotation streams, CSV variants, resampling, windowing, and class
//! balancing. Everything here is a pure function of its inputs.

mod annotations;
mod balance;
mod csvio;
mod format212;
mod header;
mod resample;
mod window;

pub use annotations::{encode_annotations, parse_annotations, AnnotationParse};
pub use balance::balance_classes;
pub use csvio::{
    format_csv_annotations, format_csv_signal, parse_csv_annotations, parse_csv_signal,
};
pub use format212::{decode_format16, decode_format212, decode_format212_mv, encode_format212};
pub use header::parse_header;
pub use resample::resample_linear;
pub use window::{extract_windows, normalize_window, WindowExtraction};

use crate::error::{Error, Result};

/// Samples per analysis window: one second of context on each side of the
/// annotated beat at the target rate.
pub const WINDOW_LEN: usize = 720;

/// Sampling rate every record is brought to before windowing, in Hz.
pub const TARGET_FS: f64 = 360.0;

/// The eight rhythm classes. `Normal` is class index 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
#[repr(u8)]
pub enum RhythmClass {
    Normal = 0,
    Pvc = 1,
    Pac = 2,
    Afib = 3,
    Svta = 4,
    Sbr = 5,
    Lbbb = 6,
    Rbbb = 7,
}

impl RhythmClass {
    pub const COUNT: usize = 8;

    pub const ALL: [RhythmClass; Self::COUNT] = [
        RhythmClass::Normal,
        RhythmClass::Pvc,
        RhythmClass::Pac,
        RhythmClass::Afib,
        RhythmClass::Svta,
        RhythmClass::Sbr,
        RhythmClass::Lbbb,
        RhythmClass::Rbbb,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn from_index(idx: usize) -> Option<RhythmClass> {
        Self::ALL.get(idx).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RhythmClass::Normal => "N",
            RhythmClass::Pvc => "PVC",
            RhythmClass::Pac => "PAC",
            RhythmClass::Afib => "AFIB",
            RhythmClass::Svta => "SVTA",
            RhythmClass::Sbr => "SBR",
            RhythmClass::Lbbb => "LBBB",
            RhythmClass::Rbbb => "RBBB",
        }
    }

    pub fn from_name(name: &str) -> Option<RhythmClass> {
        Self::ALL.iter().copied().find(|c| c.name() == name)
    }
}

impl std::fmt::Display for RhythmClass {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Signal storage formats this crate reads.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FormatCode {
    /// Two 12-bit two's-complement samples packed into 3 bytes.
    F212,
    /// 16-bit little-endian two's complement.
    F16,
    /// One floating-point millivolt value per text line.
    Csv,
}

impl FormatCode {
    pub fn parse(token: &str) -> Result<FormatCode> {
        match token {
            "212" => Ok(FormatCode::F212),
            "16" => Ok(FormatCode::F16),
            "csv" => Ok(FormatCode::Csv),
            other => Err(Error::UnsupportedFormat(other.to_string())),
        }
    }
}

/// Per-channel acquisition parameters from the header.
#[derive(Debug, Clone, PartialEq)]
pub struct SignalSpec {
    pub file_name: String,
    pub format: FormatCode,
    /// Analog-to-digital units per millivolt.
    pub gain: f64,
    /// ADC value corresponding to 0 mV.
    pub baseline: i32,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RecordHeader {
    pub record_name: String,
    pub n_signals: usize,
    /// Sampling frequency in Hz.
    pub fs: f64,
    /// Samples per channel.
    pub n_samples: usize,
    pub signals: Vec<SignalSpec>,
}

impl RecordHeader {
    /// Enforces the structural invariants the rest of the pipeline assumes.
    pub fn validate(&self) -> Result<()> {
        if self.n_signals < 1 {
            return Err(Error::Parse {
                line: 1,
                message: "record declares no signals".to_string(),
            });
        }
        if !(self.fs > 0.0) {
            return Err(Error::Parse {
                line: 1,
                message: format!("sampling frequency must be positive, got {}", self.fs),
            });
        }
        if self.signals.len() != self.n_signals {
            return Err(Error::Parse {
                line: 1,
                message: format!(
                    "header declares {} signals but specifies {}",
                    self.n_signals,
                    self.signals.len()
                ),
            });
        }
        for (i, s) in self.signals.iter().enumerate() {
            if !(s.gain > 0.0) {
                return Err(Error::Parse {
                    line: i + 2,
                    message: format!("gain must be positive, got {}", s.gain),
                });
            }
        }
        Ok(())
    }
}

/// A beat annotation: the R-peak position and its rhythm label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BeatAnnotation {
    pub sample_index: usize,
    pub label: RhythmClass,
}

/// A fully decoded record: header, per-channel millivolt samples, and
/// R-peak annotations sorted by sample index.
#[derive(Debug, Clone, PartialEq)]
pub struct EcgRecord {
    pub header: RecordHeader,
    pub channels: Vec<Vec<f64>>,
    pub annotations: Vec<BeatAnnotation>,
}

impl EcgRecord {
    pub fn validate(&self) -> Result<()> {
        self.header.validate()?;
        if self.channels.len() != self.header.n_signals {
            return Err(Error::Contract(format!(
                "record has {} channels, header declares {}",
                self.channels.len(),
                self.header.n_signals
            )));
        }
        for (i, ch) in self.channels.iter().enumerate() {
            if ch.len() != self.header.n_samples {
                return Err(Error::Contract(format!(
                    "channel {} has {} samples, header declares {}",
                    i,
                    ch.len(),
                    self.header.n_samples
                )));
            }
        }
        let mut prev = 0usize;
        for (i, a) in self.annotations.iter().enumerate() {
            if a.sample_index >= self.header.n_samples {
                return Err(Error::Contract(format!(
                    "annotation {} at sample {} is outside the record ({} samples)",
                    i, a.sample_index, self.header.n_samples
                )));
            }
            if i > 0 && a.sample_index < prev {
                return Err(Error::Contract(format!(
                    "annotations are not sorted at position {}",
                    i
                )));
            }
            prev = a.sample_index;
        }
        Ok(())
    }

    /// The lead used for analysis (channel 0).
    pub fn primary_channel(&self) -> &[f64] {
        &self.channels[0]
    }
}

/// Provenance of a window: the record it came from and the center sample.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct WindowSource {
    pub record: String,
    pub center: usize,
}

impl WindowSource {
    /// Stable identifier used in ground-truth and overlay files.
    pub fn id(&self) -> String {
        format!("{}:{}", self.record, self.center)
    }
}

/// One z-normalized 720-sample labeled segment: the classifier input.
#[derive(Debug, Clone, PartialEq)]
pub struct Window {
    pub samples: Vec<f64>,
    pub label: RhythmClass,
    pub source: WindowSource,
}
