use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

/// Error raised by the expression parser. `offset` is a byte offset into the
/// source string.
#[derive(Debug, Clone, PartialEq, Error)]
#[error("syntax error at byte {offset}: expected {expected}")]
pub struct SyntaxError {
    pub offset: usize,
    pub expected: String,
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("inverted bounds on axis {axis}: lo {lo} > hi {hi}")]
    InvertedBounds { axis: usize, lo: f64, hi: f64 },

    #[error("non-finite input: {0}")]
    NonFiniteInput(String),

    #[error("point budget exceeded: {requested} points requested, cap is {cap}")]
    BudgetExceeded { requested: u128, cap: usize },

    #[error("non-finite image coordinate {coordinate} at sample {sample}")]
    NonFiniteImage { sample: usize, coordinate: usize },

    #[error(transparent)]
    Syntax(#[from] SyntaxError),

    #[error("unknown identifier `{name}` at byte {offset}")]
    UnknownIdentifier { name: String, offset: usize },

    #[error("variable x{index} out of range: expression has {dim_in} input(s)")]
    VariableOutOfRange { index: usize, dim_in: usize },

    #[error("domain error in `{op}` (argument {argument}) while evaluating output {component}")]
    DomainError {
        op: &'static str,
        argument: f64,
        component: usize,
    },

    #[error("unknown built-in target `{0}`")]
    UnknownBuiltin(String),

    #[error("tolerance {tolerance} unreachable: best error {best_error} at size {size}")]
    ToleranceUnreachable {
        tolerance: f64,
        best_error: f64,
        size: usize,
    },

    #[error("regularized normal matrix is numerically singular (pivot {pivot} at row {row}); increase ridge")]
    SingularSystem { row: usize, pivot: f64 },

    #[error("continuation anchor list is empty")]
    EmptyAnchors,

    #[error("continuation failure at layer {layer}: {reason}")]
    ContinuationFailure { layer: usize, reason: String },

    #[error("depth cap {cap} exceeded before reaching tolerance {eps}")]
    DepthCapExceeded { cap: usize, eps: f64 },

    #[error("layer {layer} out of range 1..={depth}")]
    LayerOutOfRange { layer: usize, depth: usize },

    #[error("no sampled pair satisfies separation 1/{n_sep} and target gap {gamma}")]
    NoPairsFound { n_sep: u32, gamma: f64 },

    #[error("pair set is empty")]
    EmptyPairSet,

    #[error("repair failed: best margin {best_margin} below tau {tau}")]
    RepairFailure { best_margin: f64, tau: f64 },

    #[error("non-positive probability {value} for class {class}")]
    NonPositiveProbability { class: usize, value: f64 },

    #[error("posterior does not sum to one (sum = {sum})")]
    InvalidPosterior { sum: f64 },

    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("config parse error at line {line}, column {column}: {message}")]
    ParseError {
        line: usize,
        column: usize,
        message: String,
    },

    #[error("missing field `{0}`")]
    MissingField(String),

    #[error("invalid config: {0}")]
    ValidationError(String),

    #[error("i/o error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    /// Process exit code for the command line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::ToleranceUnreachable { .. }
            | Error::DepthCapExceeded { .. }
            | Error::ContinuationFailure { .. }
            | Error::SingularSystem { .. }
            | Error::BudgetExceeded { .. } => 2,
            Error::RepairFailure { .. } | Error::NoPairsFound { .. } | Error::EmptyPairSet => 3,
            Error::Io { .. } => 4,
            _ => 1,
        }
    }
}
