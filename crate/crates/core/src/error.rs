use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dataset is empty")]
    EmptyData,

    #[error("column length mismatch: {column} has {found} entries, expected {expected}")]
    LengthMismatch {
        column: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("outcome at row {row} is not a finite number")]
    NonFiniteOutcome { row: usize },

    #[error("{column} code {code} at row {row} has no label (only {levels} levels declared)")]
    CodeOutOfRange {
        column: &'static str,
        row: usize,
        code: u32,
        levels: usize,
    },

    #[error("instrument has {0} level(s); at least 2 are required")]
    TooFewInstrumentLevels(usize),

    #[error("treatment has a single observed level; at least 2 are required")]
    SingleTreatmentLevel,

    #[error("binary mode requires exactly two {column} levels, found {found}")]
    NotBinary { column: &'static str, found: usize },

    #[error("covariate column required by mode `{0}` is missing")]
    MissingCovariates(&'static str),

    #[error("unordered mode requires a non-empty c-set")]
    EmptyCSet,

    #[error("c-set triple ({d}, {z}, {z_prime}): {reason}")]
    InvalidTriple {
        d: String,
        z: String,
        z_prime: String,
        reason: String,
    },

    #[error("instrument order override: {0}")]
    InvalidInstrumentOrder(String),

    #[error("invalid measure on the trimming grid: {0}")]
    InvalidMeasure(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("no bootstrap statistics to take a quantile of")]
    EmptyBootstrap,

    #[error("unknown data generating process `{0}`")]
    UnknownDgp(String),

    #[error("unknown table `{0}`")]
    UnknownTable(String),

    #[error("invalid simulation setting: {0}")]
    InvalidSimulation(String),

    #[error("csv column `{0}` not found in header")]
    MissingColumn(String),

    #[error("row {row}, column `{column}`: cannot parse `{value}` as a number")]
    Parse {
        row: usize,
        column: String,
        value: String,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// Errors caused by the tool's settings rather than by the data it was given.
    pub fn is_config(&self) -> bool {
        matches!(
            self,
            Error::MissingCovariates(_)
                | Error::EmptyCSet
                | Error::InvalidTriple { .. }
                | Error::InvalidInstrumentOrder(_)
                | Error::InvalidMeasure(_)
                | Error::InvalidConfig(_)
                | Error::UnknownDgp(_)
                | Error::UnknownTable(_)
                | Error::InvalidSimulation(_)
        )
    }
}
