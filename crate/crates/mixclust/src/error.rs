use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("CSV error: {0}")]
    Csv(#[from] csv::Error),

    #[error("JSON error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("invalid schema: {0}")]
    InvalidSchema(String),

    #[error("unknown column '{0}' (not declared in the schema)")]
    UnknownColumn(String),

    #[error("column '{0}' declared in the schema is missing from the CSV header")]
    MissingColumn(String),

    #[error("row {row}, column '{column}': categorical code {value} outside 1..={levels}")]
    OutOfRangeCode {
        row: usize,
        column: String,
        value: i64,
        levels: u32,
    },

    #[error("row {row}, column '{column}': cannot parse '{value}' as a number")]
    NonNumericCell {
        row: usize,
        column: String,
        value: String,
    },

    #[error("row {row}, column '{column}': missing cell (missing data is not supported)")]
    MissingCell { row: usize, column: String },

    #[error(
        "column '{column}': level {level} has cumulative proportion {proportion}; \
         merge sparse levels so every level below the top is observed"
    )]
    DegenerateLevel {
        column: String,
        level: u32,
        proportion: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error(
        "numerically empty truncation interval ({lo}, {hi}) under N({mu}, {sigma}^2); \
         a cluster/level pairing has degenerated"
    )]
    EmptyInterval { lo: f64, hi: f64, mu: f64, sigma: f64 },

    #[error("cluster {0} became empty during the M-step")]
    EmptyCluster(usize),

    #[error("fit failed after {attempts} initialization attempts: {last}")]
    FitFailed { attempts: usize, last: String },

    #[error("all grid cells failed:\n{0}")]
    GridFailed(String),

    #[error("label vectors have different lengths ({0} vs {1})")]
    LengthMismatch(usize, usize),

    #[error("{0}")]
    Other(String),
}
