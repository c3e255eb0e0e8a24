use alloc::string::String;

pub type Result<T> = core::result::Result<T, Error>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },

    #[error("invalid alphabet: {0}")]
    InvalidAlphabet(String),

    #[error("invalid probability vector: {0}")]
    InvalidPmf(String),

    #[error("invalid matrix: {0}")]
    InvalidMatrix(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("symbol index {symbol} at position {position} is outside an alphabet of size {size}")]
    SymbolOutOfRange {
        position: usize,
        symbol: usize,
        size: usize,
    },

    #[error("label {0} is not in the alphabet")]
    UnknownLabel(i64),

    #[error("matrix is singular (|det| = {det:e})")]
    SingularMatrix { det: f64 },

    #[error("input symbol {symbol} never observed; cannot estimate its channel row")]
    UnobservedSymbol { symbol: usize },

    #[error("observed symbol has zero assigned probability (symbol {symbol}, position {position:?})")]
    ZeroProbabilityObservation {
        symbol: usize,
        position: Option<usize>,
    },

    #[error("naive SPA undefined at unseen context")]
    NaiveUndefined,

    #[error("all lookahead candidates have zero probability (position {position:?})")]
    DegenerateLookahead { position: Option<usize> },

    #[error("impossible observation at position {position}")]
    ImpossibleObservation { position: usize },

    #[error("work budget exceeded: {required:e} > {budget:e}; {hint}")]
    BudgetExceeded {
        required: f64,
        budget: f64,
        hint: &'static str,
    },
}
