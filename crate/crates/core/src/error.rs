use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("schema violation in {source_name} row {row}, column `{column}`: {message}")]
    Schema {
        source_name: String,
        row: usize,
        column: String,
        message: String,
    },
    #[error("job row {row} references unknown person `{person_id}`")]
    OrphanJob { row: usize, person_id: String },
    #[error("duplicate job key (person `{person_id}`, employer `{employer_id}`, year {year})")]
    DuplicateKey {
        person_id: String,
        employer_id: String,
        year: i32,
    },
    #[error("duplicate person `{0}`")]
    DuplicatePerson(String),
    #[error("no {series} value for year {year}")]
    MissingYear { series: &'static str, year: i32 },
    #[error("invalid config field `{field}`: {message}")]
    InvalidConfig { field: String, message: String },
    #[error("year {year} is outside the panel span {first}..={last}")]
    OutsideSpan { year: i32, first: i32, last: i32 },
    #[error("empty input: {0}")]
    Empty(&'static str),
    #[error("need at least {needed} observations, got {got}: {what}")]
    TooFew {
        what: &'static str,
        needed: usize,
        got: usize,
    },
    #[error("degenerate variance: {0}")]
    Degenerate(&'static str),
    #[error("solver did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("no observed {0} values to impute from")]
    NothingObserved(&'static str),
    #[error("stage `{stage}` failed: {cause}")]
    Stage { stage: String, cause: Box<Error> },
    #[error("{0}")]
    Other(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error(transparent)]
    TomlDe(#[from] toml::de::Error),
}

impl Error {
    pub(crate) fn schema(
        source_name: &str,
        row: usize,
        column: &str,
        message: impl Into<String>,
    ) -> Self {
        Error::Schema {
            source_name: source_name.to_string(),
            row,
            column: column.to_string(),
            message: message.into(),
        }
    }

    pub(crate) fn config(field: &str, message: impl Into<String>) -> Self {
        Error::InvalidConfig {
            field: field.to_string(),
            message: message.into(),
        }
    }
}
