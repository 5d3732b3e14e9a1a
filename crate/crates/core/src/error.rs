//! Error type shared by every module of the crate.

use thiserror::Error;

/// Result alias used throughout the crate.
pub type Result<T> = std::result::Result<T, Error>;

/// Every failure the library can report.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Alphabet size outside the supported `2..=16` range.
    #[error("alphabet size {0} is outside the supported range 2..=16")]
    AlphabetSize(usize),

    /// A coordinate takes part in fewer than two constraints.
    #[error("coordinate {var} has degree {degree}; every coordinate needs at least 2 constraints")]
    DegreeViolation { var: usize, degree: usize },

    /// A clause handed to the k-SAT builder is not usable.
    #[error("malformed clause {index}: {reason}")]
    MalformedClause { index: usize, reason: String },

    /// An edge handed to the coloring builder is not usable.
    #[error("malformed edge {index}: {reason}")]
    MalformedEdge { index: usize, reason: String },

    /// The same undirected edge appears twice in a coloring instance.
    #[error("duplicate edge {{{u}, {v}}}")]
    DuplicateEdge { u: usize, v: usize },

    /// A constraint violates the representation invariants.
    #[error("malformed constraint {index}: {reason}")]
    MalformedConstraint { index: usize, reason: String },

    /// A rectangle or coordinate does not match a constraint scope.
    #[error("scope mismatch: {0}")]
    ScopeError(String),

    /// An exhaustive enumeration would exceed the configured budget.
    #[error("enumeration of {needed} items exceeds the budget of {budget}")]
    BudgetExceeded { needed: u128, budget: u64 },

    /// An assignment does not cover every coordinate.
    #[error("assignment has {got} entries but the graph has {expected} coordinates")]
    IncompleteAssignment { expected: usize, got: usize },

    /// A message-passing engine was initialized with unusable data.
    #[error("invalid initialization: {0}")]
    InitError(String),

    /// Every unit of mass of a message was dropped by conditioning.
    #[error("degenerate message ({0}): all mass dropped")]
    DegenerateMessage(String),

    /// A numeric parameter is out of range.
    #[error("invalid parameter: {0}")]
    ParamError(String),

    /// Decimation found no coordinate with positive singleton bias.
    #[error("no polarized variable")]
    NoPolarizedVariable,

    /// Simplification emptied a constraint.
    #[error("contradiction: {0}")]
    Contradiction(String),

    /// A DIMACS header is missing or unreadable.
    #[error("malformed header: {0}")]
    MalformedHeader(String),

    /// Generic text-format parse failure.
    #[error("parse error on line {line}: {reason}")]
    Parse { line: usize, reason: String },

    /// JSON (de)serialization failure.
    #[error("json: {0}")]
    Json(String),
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Json(e.to_string())
    }
}
