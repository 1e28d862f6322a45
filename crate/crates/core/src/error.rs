use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("self-edge ({0}, {0}) is not allowed")]
    SelfEdge(usize),
    #[error("edge ({i}, {j}) has an index outside 0..{n}")]
    IndexOutOfRange { i: usize, j: usize, n: usize },
    #[error("{what}: expected length {expected}, found {found}")]
    LengthMismatch { what: &'static str, expected: usize, found: usize },
    #[error("denominator B[{index}] = {denominator} is smaller than the interference set size {row_sum}")]
    DenominatorTooSmall { index: usize, denominator: u32, row_sum: usize },
    #[error("time at index {index} must be positive and finite, got {value}")]
    NonPositiveTime { index: usize, value: f64 },
    #[error("treatment arm {0} is empty")]
    EmptyArm(u8),
    #[error("no failures observed")]
    NoEvents,
    #[error("the Kolmogorov-Smirnov statistic requires uncensored data")]
    CensoredInput,
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("enumeration needs {count} assignments, over the budget of {budget}")]
    BudgetExceeded { count: u128, budget: u128 },
    #[error("non-finite value: {0}")]
    NonFinite(&'static str),
    #[error("correlation matrix could not be repaired to positive definite")]
    NotPositiveDefinite,
    #[error("unknown causal model `{0}` (expected add-G, add-Gstar, add-T, bfp-T or bfp-G)")]
    UnknownModel(String),
}

impl Error {
    pub(crate) fn invalid(msg: impl Into<String>) -> Self {
        Error::InvalidParameter(msg.into())
    }
}
