use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid shift: {0}")]
    InvalidShift(String),

    #[error("symbol {symbol} out of range for alphabet of size {q}")]
    SymbolOutOfRange { symbol: usize, q: usize },

    #[error("word is not admissible: transition {from} -> {to} is forbidden")]
    Inadmissible { from: usize, to: usize },

    #[error("enumeration would produce {count} words, above the cap of {cap}")]
    EnumerationCap { count: u128, cap: usize },

    #[error("invalid potential: {0}")]
    InvalidPotential(String),

    #[error("invalid cocycle: {0}")]
    InvalidCocycle(String),

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("{solver} did not converge: {detail}")]
    NoConvergence { solver: &'static str, detail: String },

    #[error("non-finite value in {0}")]
    NonFinite(String),
}

impl Error {
    /// Numeric failures (as opposed to bad input) get their own exit status in the CLI.
    pub fn is_numeric(&self) -> bool {
        matches!(self, Error::NoConvergence { .. } | Error::NonFinite(_))
    }
}
