use std::io;
use std::path::PathBuf;

use thiserror::Error;

use crate::catalog::CatalogVariant;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: io::Error,
    },

    #[error("{}: {source}", path.display())]
    Csv {
        path: PathBuf,
        #[source]
        source: csv::Error,
    },

    #[error("{context}, line {line}: {message}")]
    Parse {
        context: String,
        line: usize,
        message: String,
    },

    #[error("expected a {expected}-aligned vector, got {found}")]
    VariantMismatch {
        expected: CatalogVariant,
        found: CatalogVariant,
    },

    #[error("vector length {found} does not match catalog length {expected}")]
    Alignment { expected: usize, found: usize },

    #[error("{}: no records", path.display())]
    NoRecords { path: PathBuf },

    #[error("no energy row for bitstream id `{id}`")]
    MissingEnergy { id: String },

    #[error("energy row for id `{id}` has no matching feature row")]
    OrphanEnergy { id: String },

    #[error("unknown feature column `{column}` at position {position}")]
    UnknownFeatureColumn { column: String, position: usize },

    #[error("feature column {position} is `{found}`, expected `{expected}` (canonical order)")]
    ColumnOrder {
        position: usize,
        expected: String,
        found: String,
    },

    #[error("negative count {value} for id `{id}`, column `{column}`")]
    NegativeCount {
        id: String,
        column: String,
        value: String,
    },

    #[error("invalid count `{value}` for id `{id}`, column `{column}`")]
    InvalidCount {
        id: String,
        column: String,
        value: String,
    },

    #[error("duplicate id `{id}` in {}", path.display())]
    DuplicateId { id: String, path: PathBuf },

    #[error("measured energy for `{id}` must be positive, got {value}")]
    NonPositiveEnergy { id: String, value: f64 },

    #[error("invalid metadata for `{id}`: {message}")]
    InvalidMetadata { id: String, message: String },

    #[error("manifest declares {declared} records, found {actual}")]
    RecordCountMismatch { declared: usize, actual: usize },

    #[error("split leaves the {half} half empty")]
    EmptySplit { half: &'static str },

    #[error("training and validation sets overlap: {}", items.join(", "))]
    Overlap { items: Vec<String> },

    #[error("dataset `{name}` is empty")]
    EmptyDataset { name: String },

    #[error("scaling factor zeta must be >= 0, got {0}")]
    NegativeZeta(f64),

    #[error("model has no bit-depth extension (zeta, phi)")]
    MissingExtension,

    #[error("record {key} has no partner in the other bit depth")]
    Unpairable { key: String },

    #[error("invalid zeta grid: {0}")]
    InvalidGrid(String),

    #[error("invalid feature groups: {0}")]
    InvalidGroups(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error(
        "training did not converge after {iterations} iterations (KKT residual {kkt_residual:e})"
    )]
    NotConverged {
        iterations: usize,
        kkt_residual: f64,
    },

    #[error("stage `{stage}` failed: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub fn parse(context: impl Into<String>, line: usize, message: impl Into<String>) -> Self {
        Error::Parse {
            context: context.into(),
            line,
            message: message.into(),
        }
    }

    /// Process exit code used by the command line tool: 1 for usage and
    /// configuration problems, 2 for data errors, 3 for non-convergence.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidGrid(_) | Error::InvalidConfig(_) | Error::InvalidGroups(_) => 1,
            Error::NotConverged { .. } => 3,
            // A malformed pipeline configuration is a usage error.
            Error::Stage {
                stage: "config",
                source,
            } if matches!(**source, Error::Parse { .. }) => 1,
            Error::Stage { source, .. } => source.exit_code(),
            _ => 2,
        }
    }
}
