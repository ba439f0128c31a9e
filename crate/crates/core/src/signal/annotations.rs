//! Binary annotation stream codec.
//!
//! Entries are 16-bit little-endian words: the high 6 bits are the type code
//! `A`, the low 10 bits the interval `I` since the previous annotation.
//! Sample positions are cumulative sums of intervals. A zero word terminates
//! the stream. Pseudo-codes: SKIP (59) adds a 32-bit interval carried in the
//! following two words (high word first); AUX (63) is followed by `I` bytes
//! of auxiliary text padded to even length; NUM/SUB/CHN (60-62) modify
//! bookkeeping fields and are ignored here. Beat codes outside the mapped
//! rhythm classes are counted and dropped.

use crate::error::{Error, Result};
use crate::signal::{BeatAnnotation, RhythmClass};

const CODE_SKIP: u16 = 59;
const CODE_NUM: u16 = 60;
const CODE_SUB: u16 = 61;
const CODE_CHN: u16 = 62;
const CODE_AUX: u16 = 63;

/// Annotation type codes for the eight rhythm classes. Beat classes use the
/// standard MIT codes; the rhythm-level classes use codes from the unassigned
/// range so the streams this crate writes stay self-consistent.
const CLASS_CODES: [(u16, RhythmClass); 8] = [
    (1, RhythmClass::Normal),
    (2, RhythmClass::Lbbb),
    (3, RhythmClass::Rbbb),
    (5, RhythmClass::Pvc),
    (8, RhythmClass::Pac),
    (34, RhythmClass::Afib),
    (35, RhythmClass::Svta),
    (36, RhythmClass::Sbr),
];

fn class_for_code(code: u16) -> Option<RhythmClass> {
    CLASS_CODES
        .iter()
        .find(|(c, _)| *c == code)
        .map(|(_, class)| *class)
}

fn code_for_class(class: RhythmClass) -> u16 {
    CLASS_CODES
        .iter()
        .find(|(_, c)| *c == class)
        .map(|(code, _)| *code)
        .expect("every class has a code")
}

/// Result of parsing an annotation stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AnnotationParse {
    pub annotations: Vec<BeatAnnotation>,
    /// Annotations whose type code has no rhythm-class mapping.
    pub dropped: usize,
}

pub fn parse_annotations(bytes: &[u8]) -> Result<AnnotationParse> {
    let mut words = bytes.chunks_exact(2).map(|p| u16::from_le_bytes([p[0], p[1]]));
    let mut annotations = Vec::new();
    let mut dropped = 0usize;
    let mut time = 0i64;
    loop {
        let word = words.next().ok_or(Error::UnexpectedEof)?;
        if word == 0 {
            break;
        }
        let code = word >> 10;
        let interval = (word & 0x3FF) as i64;
        match code {
            CODE_SKIP => {
                let high = words.next().ok_or(Error::UnexpectedEof)?;
                let low = words.next().ok_or(Error::UnexpectedEof)?;
                time += ((high as i64) << 16) | low as i64;
            }
            CODE_AUX => {
                let skip_words = (interval as usize).div_ceil(2);
                for _ in 0..skip_words {
                    words.next().ok_or(Error::UnexpectedEof)?;
                }
            }
            CODE_NUM | CODE_SUB | CODE_CHN => {}
            beat => {
                time += interval;
                match class_for_code(beat) {
                    Some(label) => annotations.push(BeatAnnotation {
                        sample_index: time as usize,
                        label,
                    }),
                    None => dropped += 1,
                }
            }
        }
    }
    Ok(AnnotationParse {
        annotations,
        dropped,
    })
}

/// Serializes annotations back into the binary stream format, emitting SKIP
/// entries for gaps that do not fit in a 10-bit interval.
pub fn encode_annotations(annotations: &[BeatAnnotation]) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    let mut time = 0usize;
    for a in annotations {
        if a.sample_index < time {
            return Err(Error::Contract(format!(
                "annotations out of order at sample {}",
                a.sample_index
            )));
        }
        let mut gap = a.sample_index - time;
        if gap > 0x3FF {
            let word = CODE_SKIP << 10;
            out.extend_from_slice(&word.to_le_bytes());
            out.extend_from_slice(&((gap >> 16) as u16).to_le_bytes());
            out.extend_from_slice(&((gap & 0xFFFF) as u16).to_le_bytes());
            gap = 0;
        }
        let word = (code_for_class(a.label) << 10) | gap as u16;
        out.extend_from_slice(&word.to_le_bytes());
        time = a.sample_index;
    }
    out.extend_from_slice(&0u16.to_le_bytes());
    Ok(out)
}
