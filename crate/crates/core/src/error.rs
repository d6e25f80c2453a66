use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("state space must have J >= 1 (got J = {0})")]
    EmptyStateSpace(usize),

    #[error("vector `{field}` has length {got}, expected J + 1 = {expected}")]
    LengthMismatch {
        field: &'static str,
        expected: usize,
        got: usize,
    },

    #[error("rate `{field}[{index}]` = {value} is not finite")]
    NonFiniteRate {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("boundary rate `{field}[{index}]` must be 0 (got {value})")]
    BoundaryRateNonzero {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("interior rate `{field}[{index}]` must be positive (got {value})")]
    NonPositiveInteriorRate {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("probability `{field}[{index}]` = {value} is outside the allowed range")]
    ProbabilityOutOfRange {
        field: &'static str,
        index: usize,
        value: f64,
    },

    #[error("no transition is ever counted: every q_plus and q_minus entry is 0")]
    AllThinningZero,

    #[error("stationary weights left the representable range at state {state}")]
    NumericOverflow { state: usize },

    #[error("tridiagonal solve failed at row {row}: {reason}")]
    SolveFailed { row: usize, reason: String },

    #[error("internal identity `{identity}` violated: {lhs} vs {rhs}")]
    InternalIdentityViolated { identity: &'static str, lhs: f64, rhs: f64 },

    #[error("stability sum appears to diverge (last term ratios >= 1 - 1e-6 over {window} states)")]
    StabilityCheckFailed { window: usize },

    #[error("truncation did not converge within {max_states} states")]
    TruncationNotConverged { max_states: usize },

    #[error("invalid infinite model at state {state}: {reason}")]
    InvalidInfiniteModel { state: usize, reason: String },

    #[error("invalid simulation config: {0}")]
    InvalidConfig(String),

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("model `{model}`: missing parameter `{param}`")]
    MissingParam { model: String, param: String },

    #[error("model `{model}`: unknown parameter `{param}`")]
    UnknownParam { model: String, param: String },

    #[error("parameter `{param}` = {value} out of range: {reason}")]
    ParamOutOfRange { param: String, value: f64, reason: String },

    #[error("model JSON: {0}")]
    Parse(String),
}

impl Error {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::EmptyStateSpace(_) => "EmptyStateSpace",
            Error::LengthMismatch { .. } => "LengthMismatch",
            Error::NonFiniteRate { .. } => "NonFiniteRate",
            Error::BoundaryRateNonzero { .. } => "BoundaryRateNonzero",
            Error::NonPositiveInteriorRate { .. } => "NonPositiveInteriorRate",
            Error::ProbabilityOutOfRange { .. } => "ProbabilityOutOfRange",
            Error::AllThinningZero => "AllThinningZero",
            Error::NumericOverflow { .. } => "NumericOverflow",
            Error::SolveFailed { .. } => "SolveFailed",
            Error::InternalIdentityViolated { .. } => "InternalIdentityViolated",
            Error::StabilityCheckFailed { .. } => "StabilityCheckFailed",
            Error::TruncationNotConverged { .. } => "TruncationNotConverged",
            Error::InvalidInfiniteModel { .. } => "InvalidInfiniteModel",
            Error::InvalidConfig(_) => "InvalidConfig",
            Error::UnknownModel(_) => "UnknownModel",
            Error::MissingParam { .. } => "MissingParam",
            Error::UnknownParam { .. } => "UnknownParam",
            Error::ParamOutOfRange { .. } => "ParamOutOfRange",
            Error::Parse(_) => "Parse",
        }
    }
}
