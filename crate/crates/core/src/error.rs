use thiserror::Error;

/// Errors raised while ingesting data or fitting models.
#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),
    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
    #[error("no rows")]
    NoRows,
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}: column `{column}` has non-numeric value `{value}`")]
    NonNumeric {
        row: usize,
        column: String,
        value: String,
    },
    #[error("row {row}: status {status} outside 0..={num_causes}")]
    InvalidStatus {
        row: usize,
        status: i64,
        num_causes: u32,
    },
    #[error("row {row}: negative time {time}")]
    NegativeTime { row: usize, time: f64 },
    #[error("invalid schema: {0}")]
    Schema(String),
    #[error("unknown covariate `{0}`")]
    UnknownCovariate(String),
    #[error("no events in dataset")]
    NoEvents,
    #[error("no censoring: cure fraction unidentifiable")]
    NoCensoring,
    #[error("only {found} distinct event times, {requested} breakpoints requested")]
    TooFewEventTimes { found: usize, requested: usize },
    #[error("zero risk-set denominator at event time {time}")]
    ZeroRiskSet { time: f64 },
    #[error("relative hazards diverge: basis interval {interval} contains events of a single cause")]
    SingleCauseInterval { interval: String },
    #[error("cause {cause} has no observed events")]
    MissingCause { cause: u32 },
    #[error("singular information matrix: {0}")]
    Singular(String),
    #[error("delta-method covariance requires a covariate-free latency model; use the bootstrap")]
    LatencyCovariatesPresent,
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("solver failure: {0}")]
    Solver(String),
}

pub type Result<T> = std::result::Result<T, Error>;
