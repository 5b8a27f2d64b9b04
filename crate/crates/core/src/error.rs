use thiserror::Error;

pub type Result<T> = std::result::Result<T, AuditError>;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AuditError {
    #[error("missing column `{0}`")]
    MissingColumn(String),
    #[error("row {row}, column `{column}`: non-numeric score {value:?}")]
    NonNumericScore { row: u64, column: String, value: String },
    #[error("row {row}, column `{column}`: missing required score")]
    MissingScore { row: u64, column: String },
    #[error("row {row}, column `{column}`: value {value} outside scale [{min}, {max}]")]
    OutOfScale { row: u64, column: String, value: f64, min: f64, max: f64 },
    #[error("duplicate subject id `{0}`")]
    DuplicateSubjectId(String),
    #[error("invalid score scale: min {min} must be below max {max}")]
    InvalidScale { min: f64, max: f64 },
    #[error("csv: {0}")]
    Csv(String),
    #[error("unknown group label `{0}`")]
    UnknownGroupLabel(String),
    #[error("group labels must differ, got `{0}` twice")]
    IdenticalGroups(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("too few samples: {0}")]
    TooFewSamples(String),
    #[error("zero pooled variance: {0}")]
    ZeroPooledVariance(String),
    #[error("no between-target variance in annotation matrix")]
    NoBetweenTargetVariance,
    #[error("annotation matrix has missing cells")]
    IncompleteMatrix,
    #[error("invalid k = {k} for {n} scores")]
    InvalidK { k: i64, n: usize },
    #[error("invalid selection rate {0}: must lie in (0, 1]")]
    InvalidRate(f64),
    #[error("length mismatch: {0}")]
    LengthMismatch(String),
    #[error("single class: {0}")]
    SingleClass(String),
    #[error("undefined: no selections in either group")]
    EmptySelection,
    #[error("unknown column `{0}`")]
    UnknownColumn(String),
    #[error("invalid synth spec: {0}")]
    InvalidSpec(String),
    #[error("config: {0}")]
    Config(String),
    #[error("io: {0}")]
    Io(String),
}

impl From<csv::Error> for AuditError {
    fn from(e: csv::Error) -> Self {
        AuditError::Csv(e.to_string())
    }
}

impl From<std::io::Error> for AuditError {
    fn from(e: std::io::Error) -> Self {
        AuditError::Io(e.to_string())
    }
}
