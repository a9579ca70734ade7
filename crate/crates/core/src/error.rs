use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Errors raised across the toolkit.
///
/// Variants are grouped so the CLI can map them onto stable exit codes via
/// [`Error::kind`].
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("stability assumption violated: mu ({mu}) must exceed lambda_w + lambda_b ({load})")]
    Unstable { mu: f64, load: f64 },

    #[error("degenerate model: lambda_b = 0 makes both hypotheses identical")]
    DegenerateModel,

    #[error("log-likelihood ratio undefined: zero transition probability for ({from} -> {to})")]
    UndefinedLlr { from: u8, to: u8 },

    #[error(
        "v closed form is ill-conditioned for lambda_b/lambda_w = {ratio:e}; use the limit v = 1/2"
    )]
    BelowSmallRateSwitch { ratio: f64 },

    #[error("numeric failure: {0}")]
    Numeric(String),

    #[error("invalid input data: {0}")]
    InputData(String),

    #[error("parse error at line {line}, column {column}: {message}")]
    Parse {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("unsupported result format version {found} (expected {expected})")]
    Version { found: u32, expected: u32 },

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Coarse classification used for process exit codes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ErrorKind {
    Argument,
    InputData,
    Numeric,
}

impl Error {
    pub fn kind(&self) -> ErrorKind {
        match self {
            Error::InvalidParameter(_)
            | Error::Unstable { .. }
            | Error::DegenerateModel
            | Error::Config(_) => ErrorKind::Argument,
            Error::UndefinedLlr { .. } | Error::BelowSmallRateSwitch { .. } | Error::Numeric(_) => {
                ErrorKind::Numeric
            }
            Error::InputData(_)
            | Error::Parse { .. }
            | Error::Version { .. }
            | Error::Io(_)
            | Error::Csv(_) => ErrorKind::InputData,
        }
    }
}
