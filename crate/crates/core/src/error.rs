use thiserror::Error;

use crate::lattice::Site;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("empty shape")]
    EmptyShape,

    #[error("insufficient margin: site {0} is outside the window domain")]
    InsufficientMargin(Site),

    #[error("symbol {symbol} at {site} is out of range for alphabet size {q}")]
    SymbolOutOfRange { site: Site, symbol: u32, q: u32 },

    #[error("windows have different domains")]
    DomainMismatch,

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("the SFT is not single-site fillable")]
    NotSsf,

    #[error("SSF contract violated: no compatible symbol at {0}")]
    SsfContractViolated(Site),

    #[error("{count} patterns exceed the enumeration limit {limit}; use the analytic bound")]
    TooManyPatterns { count: usize, limit: usize },

    #[error("support size {support} exceeds the {available} available patterns")]
    SupportTooLarge { support: usize, available: u128 },

    #[error("strip width {width} needs {states} candidate columns (limit {limit})")]
    StateGuard {
        width: usize,
        states: u128,
        limit: u128,
    },

    #[error("sequence length mismatch: expected {expected}, got {got}")]
    LengthMismatch { expected: usize, got: usize },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) fn parse_err(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse {
        line,
        msg: msg.into(),
    }
}
