use std::path::PathBuf;

use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors produced by the raster toolkit and the pipeline.
///
/// Each variant maps onto one of the CLI exit codes via [`Error::exit_code`].
#[derive(Debug, Error)]
pub enum Error {
    /// An input file could not be read or decoded.
    #[error("{}: {reason}", path.display())]
    Input { path: PathBuf, reason: String },

    /// An output file could not be written.
    #[error("{}: {reason}", path.display())]
    Output { path: PathBuf, reason: String },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("grid mismatch: {0}")]
    GridMismatch(String),

    #[error("CRS kind mismatch: source is {source_kind}, reference is {reference_kind}")]
    CrsMismatch {
        source_kind: &'static str,
        reference_kind: &'static str,
    },

    #[error("row {row} out of range for grid with {rows} rows")]
    RowOutOfRange { row: usize, rows: usize },

    #[error("percentile has no eligible cells (all cells nodata{})", if *.exclude_zeros { " or zero" } else { "" })]
    EmptyEligibleSet { exclude_zeros: bool },

    #[error("no seed falls on a passable friction cell")]
    NoPassableSeed,

    #[error("no facility falls within the reference grid extent")]
    NoFacilityInExtent,

    #[error("invalid geometry: {0}")]
    Geometry(String),
}

impl Error {
    pub(crate) fn input(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Input {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    pub(crate) fn output(path: impl Into<PathBuf>, reason: impl ToString) -> Self {
        Error::Output {
            path: path.into(),
            reason: reason.to_string(),
        }
    }

    /// Process exit code for this error: 2 validation, 3 input I/O,
    /// 4 empty percentile set, 1 anything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidParameter(_)
            | Error::Config(_)
            | Error::GridMismatch(_)
            | Error::CrsMismatch { .. }
            | Error::NoPassableSeed
            | Error::NoFacilityInExtent => 2,
            Error::Input { .. } | Error::Geometry(_) => 3,
            Error::EmptyEligibleSet { .. } => 4,
            Error::Output { .. } | Error::RowOutOfRange { .. } => 1,
        }
    }
}
