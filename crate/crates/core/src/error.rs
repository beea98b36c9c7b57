use thiserror::Error;

/// Errors raised by the engine.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),

    #[error("dimension mismatch: {0} vs {1}")]
    DimensionMismatch(usize, usize),

    /// `p` is not majorised by `q`; `prefix` is the first violated prefix length.
    #[error("not majorised: prefix of length {prefix} violated ({lhs} > {rhs})")]
    Majorisation { prefix: usize, lhs: f64, rhs: f64 },

    #[error("numerical degeneracy: {0}")]
    Degenerate(String),

    /// Some `ln(q_j / p_i)` is not an integer multiple of the coherence quantum.
    #[error("ratios off the coherence grid at (i, j) = {offending:?}")]
    Grid { offending: Vec<(usize, usize)> },

    #[error("battery support would leave the allowed levels: {0}")]
    Wraparound(String),

    #[error("window error: {0}")]
    Window(String),

    #[error("condition {condition} violated: {detail}")]
    ConditionViolation { condition: u8, detail: String },

    #[error("theorem precondition unmet: {0}")]
    Precondition(String),

    #[error("linear program inconclusive after {0} iterations")]
    LpInconclusive(usize),

    #[error("instance too large: {0}")]
    SizeCap(String),
}

pub type Result<T> = std::result::Result<T, Error>;
