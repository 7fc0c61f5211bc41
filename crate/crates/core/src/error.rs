use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("input contains no data rows")]
    EmptyInput,
    #[error("row {row}: cannot parse {cell:?} as a number")]
    ParseError { row: usize, cell: String },
    #[error("row {row}: value is not finite")]
    InvalidValue { row: usize },
    #[error("unknown characterization spec {0:?} (expected \"puri-rubin\" or \"polya\")")]
    UnknownSpec(String),
    #[error("at least {min} replicates are required, got {got}")]
    InsufficientReps { got: usize, min: usize },
    #[error("kernel expects {expected} arguments, got {got}")]
    ArityError { expected: usize, got: usize },
    #[error("{0}")]
    SupportError(String),
    #[error("sample has zero variance")]
    DegenerateSample,
    #[error("sample size {n} is below the minimum {min}")]
    SampleTooSmall { n: usize, min: usize },
    #[error("{0}")]
    TooLargeForNaive(String),
    #[error("discretization size {n} is below the minimum {min}")]
    TooCoarse { n: usize, min: usize },
    #[error("numerical failure: {0}")]
    NumericalFailure(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("U-form limit requires the plain (uncorrected) spectrum")]
    MissingSpectrum,
    #[error("at least {min} draws are required, got {got}")]
    InsufficientDraws { got: usize, min: usize },
    #[error("quantile level {0} is outside (0, 1)")]
    InvalidQuantile(f64),
    #[error("no estimation effect expected: {0}")]
    NoEffectExpected(String),
    #[error("malformed eigen cache: {0}")]
    CacheError(String),
    #[error("I/O error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Stable machine-readable name, used in CLI error JSON.
    pub fn code(&self) -> &'static str {
        match self {
            Error::EmptyInput => "EmptyInput",
            Error::ParseError { .. } => "ParseError",
            Error::InvalidValue { .. } => "InvalidValue",
            Error::UnknownSpec(_) => "UnknownSpec",
            Error::InsufficientReps { .. } => "InsufficientReps",
            Error::ArityError { .. } => "ArityError",
            Error::SupportError(_) => "SupportError",
            Error::DegenerateSample => "DegenerateSample",
            Error::SampleTooSmall { .. } => "SampleTooSmall",
            Error::TooLargeForNaive(_) => "TooLargeForNaive",
            Error::TooCoarse { .. } => "TooCoarse",
            Error::NumericalFailure(_) => "NumericalFailure",
            Error::Precondition(_) => "precondition",
            Error::MissingSpectrum => "MissingSpectrum",
            Error::InsufficientDraws { .. } => "InsufficientDraws",
            Error::InvalidQuantile(_) => "InvalidQuantile",
            Error::NoEffectExpected(_) => "NoEffectExpected",
            Error::CacheError(_) => "CacheError",
            Error::Io { .. } => "IOError",
        }
    }

    /// Process exit code: 2 usage, 3 data, 4 numerical, 5 I/O.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::UnknownSpec(_)
            | Error::InsufficientReps { .. }
            | Error::Precondition(_)
            | Error::InsufficientDraws { .. }
            | Error::InvalidQuantile(_)
            | Error::NoEffectExpected(_)
            | Error::MissingSpectrum
            | Error::ArityError { .. }
            | Error::TooCoarse { .. } => 2,
            Error::EmptyInput
            | Error::ParseError { .. }
            | Error::InvalidValue { .. }
            | Error::SupportError(_)
            | Error::DegenerateSample
            | Error::SampleTooSmall { .. }
            | Error::TooLargeForNaive(_)
            | Error::CacheError(_) => 3,
            Error::NumericalFailure(_) => 4,
            Error::Io { .. } => 5,
        }
    }
}
