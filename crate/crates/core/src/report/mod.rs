//! Subcommand pipelines, deterministic reports, SVG plots and run manifests.

mod manifest;
mod pipeline;
pub mod svg;

pub use manifest::{sha256_hex, OutputEntry, RunManifest};
pub use pipeline::{
    execute, run, tolerances, ClassRecord, CloseReport, Command, DecompositionReport, DomainValidationReport,
    ErrorRecord, Format, GraphSummary, HomoclinicReport, KsetReport, OrbitRecord, OrbitsReport, Product, RelatedOrbit,
    ReportMeta, RunOptions, RunOutcome, SurgeryReport, SystemSummary, EXIT_CERTIFICATE, EXIT_COMPUTATION, EXIT_OK,
    EXIT_USAGE,
};

use crate::config::ConfigError;

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("{context}: {message}")]
    Computation { context: String, message: String },
    #[error("cannot write {path}: {source}")]
    Output {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl RunError {
    /// Process exit status: 1 for bad invocations and inputs, 2 for failed computations and IO.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Usage(_) | RunError::Config(_) => EXIT_USAGE,
            RunError::Computation { .. } | RunError::Output { .. } => EXIT_COMPUTATION,
        }
    }
}
