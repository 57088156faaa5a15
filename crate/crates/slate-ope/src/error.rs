use thiserror::Error;

/// Errors produced by schema validation, data ingestion, estimation, and
/// enumeration.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid schema: {0}")]
    Schema(String),

    #[error("invalid policy: {0}")]
    Policy(String),

    /// The logging policy assigns zero probability to an action that was
    /// actually taken, so importance ratios are undefined for that record.
    #[error("record {record}: zero logging propensity in slot {slot}")]
    Coverage { record: usize, slot: usize },

    #[error("record {record}: {message}")]
    Record { record: usize, message: String },

    /// A malformed line in a JSONL dataset file. `line` is 1-based.
    #[error("line {line}: field `{field}`: {message}")]
    DatasetFormat {
        line: usize,
        field: String,
        message: String,
    },

    #[error("empty dataset: at least one record is required")]
    EmptyDataset,

    #[error("{what} requires n >= {required}, dataset has n = {actual}")]
    NotEnoughRecords {
        what: &'static str,
        required: usize,
        actual: usize,
    },

    #[error("weight vector has {got} entries but the schema has {expected} slots")]
    WeightDimension { expected: usize, got: usize },

    #[error("{context}: enumeration size {size} exceeds cap {cap}")]
    CapExceeded {
        context: &'static str,
        size: u64,
        cap: u64,
    },

    #[error("inconsistent moments: {0}")]
    InconsistentMoments(String),

    /// The requested exact expectation is undefined on a set of datasets
    /// with positive probability (e.g. the self-normalized estimator when
    /// every sampled weight is zero).
    #[error("estimator undefined on datasets of total probability {mass:.6e}")]
    UndefinedExpectation { mass: f64 },

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    /// True for errors caused by enumeration or size caps rather than bad
    /// input; the CLI maps these to a distinct exit code.
    pub fn is_cap(&self) -> bool {
        matches!(self, Error::CapExceeded { .. })
    }
}

pub type Result<T> = std::result::Result<T, Error>;
