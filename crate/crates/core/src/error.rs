use thiserror::Error;

use crate::data::ValidationReport;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("length mismatch for {what}: expected {expected}, found {found}")]
    LengthMismatch {
        what: String,
        expected: usize,
        found: usize,
    },
    #[error("unit index {unit} out of range 1..={max}")]
    InvalidUnit { unit: usize, max: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("series has a single exposure class: {0}")]
    SingleClass(String),
    #[error("no matches possible: exposed or unexposed class is empty")]
    NoMatchesPossible,
    #[error("estimation refused: the match set is empty")]
    NoMatches,
    #[error("dataset failed validation with {} issue(s)", .0.issues.len())]
    Validation(ValidationReport),
    #[error("missing exposure source: provide network.csv (with treatments.csv) or exposures.csv")]
    MissingExposureSource,
    #[error("unknown table id {0:?}")]
    UnknownTable(String),
    #[error("parse error in {file}: {message}")]
    Parse { file: String, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
