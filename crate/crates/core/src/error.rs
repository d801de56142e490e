use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("empty input")]
    EmptyInput,
    #[error("length mismatch: column `{column}` has {found} entries, expected {expected}")]
    LengthMismatch {
        column: String,
        expected: usize,
        found: usize,
    },
    #[error("non-binary {what} at unit {index}: {value}")]
    NonBinary {
        what: &'static str,
        index: usize,
        value: f64,
    },
    #[error("non-finite value in column `{column}` at unit {index}")]
    NonFinite { column: String, index: usize },
    #[error("covariate column `{column}` is constant")]
    ConstantCovariate { column: String },
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("io error: {0}")]
    Io(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("stratum {stratum} has estimated assignment probability {pi_hat}; need 0 < pi_hat < 1")]
    DegenerateAssignment { stratum: String, pi_hat: f64 },
    #[error("empty cell: arm {arm}, stratum {stratum}")]
    EmptyCell { arm: u8, stratum: String },
    #[error("cell too small for {what}: arm {arm}, stratum {stratum} has {size} units")]
    CellTooSmall {
        what: &'static str,
        arm: u8,
        stratum: String,
        size: usize,
    },
    #[error("no identified compliance variation (denominator {0:e})")]
    NoCompliers(f64),
    #[error("perfect separation in logistic fit")]
    PerfectSeparation,
    #[error("singular matrix in {0}")]
    Singular(&'static str),
    #[error("weak or zero first stage (coefficient on assignment {0:e})")]
    WeakFirstStage(f64),
    #[error("probability {0} outside (0, 1)")]
    ProbabilityOutOfRange(f64),
    #[error("non-finite objective in {0}")]
    NonFiniteLoss(&'static str),
    #[error("zero standard error")]
    ZeroStandardError,
    #[error("{context}: {source}")]
    Cell {
        context: String,
        #[source]
        source: Box<Error>,
    },
    #[error("too many failed replications: {failures} of {reps}")]
    TooManyFailures { failures: usize, reps: usize },
}

impl Error {
    pub(crate) fn in_cell(self, arm: u8, stratum: &str) -> Error {
        Error::Cell {
            context: format!("arm {arm}, stratum {stratum}"),
            source: Box::new(self),
        }
    }
}
