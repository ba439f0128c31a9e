//! Command-line surface: experiment configs, run manifests, SVG rendering,
//! and the command implementations the `ecgviz` binary dispatches to.

pub mod commands;
pub mod config;
pub mod manifest;
pub mod svg;

pub use commands::AnyModel;
pub use config::{DataSource, ExperimentConfig, ModelKind, ModelScale, Overrides, ENV_PREFIX};
pub use manifest::{read_manifest_outputs, RunManifest, MANIFEST_FILE};

use crate::error::Error;

/// Process exit codes: 0 success, 1 usage error, 2 data error,
/// 3 numeric failure. Partial evaluation results exit with the data code.
pub fn exit_code_for(error: &Error) -> i32 {
    match error {
        Error::Config(_) | Error::Contract(_) | Error::Shape { .. } => 1,
        Error::Parse { .. }
        | Error::UnsupportedFormat(_)
        | Error::TruncatedInput(_)
        | Error::UnexpectedEof
        | Error::InsufficientData { .. }
        | Error::Checkpoint(_)
        | Error::UninitializedStatistics
        | Error::Io { .. } => 2,
        Error::Numeric(_) => 3,
    }
}

/// Exit code flagging an otherwise successful run whose metrics are partial.
pub const EXIT_PARTIAL_RESULT: i32 = 2;
