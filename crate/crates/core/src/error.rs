use thiserror::Error;

use crate::graph::EdgeId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("syntax error at line {line}, column {col}: {msg}")]
    Syntax { line: usize, col: usize, msg: String },

    #[error("graph is disconnected")]
    Disconnected,

    #[error("graph is compact: at least one half-line is required")]
    CompactGraph,

    #[error("edge {edge} has non-positive or non-finite length {length}")]
    NonPositiveLength { edge: EdgeId, length: f64 },

    #[error("unknown vertex `{0}`")]
    UnknownVertex(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("mesh would have {requested} degrees of freedom, above the cap of {cap}")]
    TooManyDofs { requested: usize, cap: usize },

    #[error("function has zero mass")]
    ZeroMass,

    #[error("function has zero derivative; the quotient is undefined")]
    ZeroDerivative,

    #[error("negative values are not allowed (min = {0})")]
    NegativeValues(f64),

    #[error("operation requires a star graph (only half-lines at one vertex)")]
    UnsupportedGeometry,

    #[error("graph has no terminal edge")]
    NoTerminalEdge,

    #[error("profile support does not fit: {0}")]
    SupportOverflow(String),

    #[error("first-order dilation condition violated: Pohozaev residual {0:e}")]
    PohozaevViolated(f64),

    #[error("profile has non-negative critical energy ({0:e}); a negative one is required")]
    NonNegativeEnergy(f64),

    #[error("linear system is singular or numerically degenerate")]
    Singular,

    #[error("Newton iteration diverged: {0}")]
    Diverged(String),

    #[error("no verdict reached within the iteration budget (best energy {best_energy:e})")]
    Indeterminate { best_energy: f64, iterations: usize },

    #[error("bisection precondition failed: {0}")]
    Bisection(String),

    #[error("precondition violated: {0}")]
    Precondition(String),

    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),

    #[error("serialisation error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("malformed profile data: {0}")]
    Format(String),
}
