use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid hierarchy: {0}")]
    InvalidHierarchy(String),

    #[error("level {level} out of range (hierarchy has {levels} levels)")]
    LevelOutOfRange { level: usize, levels: usize },

    #[error("class index {index} out of range at level {level} ({classes} classes)")]
    ClassOutOfRange {
        level: usize,
        index: usize,
        classes: usize,
    },

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("probability vector is not normalized (sum = {sum})")]
    NotNormalized { sum: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("no misclassified samples")]
    NoMisclassifications,

    #[error("empty input: {0}")]
    Empty(String),

    #[error("{path}: bad magic bytes")]
    BadMagic { path: PathBuf },

    #[error("{path}: truncated file (expected {expected} bytes, found {found})")]
    Truncated {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: trailing bytes (expected {expected} bytes, found {found})")]
    TrailingBytes {
        path: PathBuf,
        expected: u64,
        found: u64,
    },

    #[error("{path}: unsupported format version {version}")]
    UnsupportedVersion { path: PathBuf, version: u32 },

    #[error("manifest does not match hierarchy: {0}")]
    ManifestMismatch(String),

    #[error("invalid config: {0}")]
    Config(String),

    #[error("malformed csv: {0}")]
    Csv(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Stable machine-readable code used in CLI error reports.
    pub fn code(&self) -> &'static str {
        match self {
            Error::InvalidHierarchy(_) | Error::Config(_) => "config_invalid",
            Error::LevelOutOfRange { .. } | Error::ClassOutOfRange { .. } => "index_out_of_range",
            Error::Shape(_) => "shape_mismatch",
            Error::NotNormalized { .. } => "not_normalized",
            Error::InvalidParameter(_) => "invalid_parameter",
            Error::Precondition(_) => "precondition_violated",
            Error::NoMisclassifications => "no_misclassifications",
            Error::Empty(_) => "empty_input",
            Error::BadMagic { .. } => "bag_bad_magic",
            Error::Truncated { .. } => "bag_truncated",
            Error::TrailingBytes { .. } => "bag_trailing_bytes",
            Error::UnsupportedVersion { .. } => "unsupported_version",
            Error::ManifestMismatch(_) => "manifest_mismatch",
            Error::Csv(_) => "csv_malformed",
            Error::Io(_) => "io",
            Error::Json(_) => "json",
        }
    }

    /// Process exit code grouping for the CLI.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InvalidHierarchy(_) | Error::Config(_) => 2,
            Error::BadMagic { .. }
            | Error::Truncated { .. }
            | Error::TrailingBytes { .. }
            | Error::UnsupportedVersion { .. }
            | Error::ManifestMismatch(_)
            | Error::Csv(_)
            | Error::Json(_) => 3,
            Error::Precondition(_)
            | Error::NoMisclassifications
            | Error::Empty(_)
            | Error::NotNormalized { .. }
            | Error::InvalidParameter(_)
            | Error::Shape(_)
            | Error::LevelOutOfRange { .. }
            | Error::ClassOutOfRange { .. } => 4,
            Error::Io(_) => 5,
        }
    }
}

/// Attaches the offending path to an I/O error.
pub(crate) fn io_at(path: &std::path::Path) -> impl FnOnce(std::io::Error) -> Error + '_ {
    move |e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", path.display()),
        ))
    }
}
