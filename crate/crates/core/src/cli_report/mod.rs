//! Batch driver: configuration, the stage pipeline, and CSV/manifest output.
//!
//! Values are Hartree internally and converted to microhartree once, when records
//! are built.

pub mod config;
pub mod output;
pub mod pipeline;

pub use config::{parse_config, Contribution, RunConfig, StateSpec};
pub use output::{csv_text, emit_csv, format_sig6, parse_csv, CSV_HEADER};
pub use pipeline::{build_run_spectrum, run_pipeline, ContributionRecord, Manifest, RunOutput};

use crate::error::Error;

/// Process exit status for an error: 2 configuration, 4 I/O, 3 anything raised by
/// the numerics.
pub fn exit_code(err: &Error) -> i32 {
    match err.root() {
        Error::Config { .. } => 2,
        Error::Io(_) => 4,
        _ => 3,
    }
}
