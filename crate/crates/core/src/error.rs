use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid parameter `{name}`: {reason}")]
    InvalidParameter { name: &'static str, reason: String },

    #[error("empty trace: at least one probe record is required")]
    EmptyTrace,

    #[error("trace parse error at line {line}: {reason}")]
    TraceParse { line: usize, reason: String },

    #[error("interface count {0} out of range (1..=16)")]
    InterfaceCount(usize),

    #[error("strategy references interface {index} but only {count} interfaces are defined")]
    UnknownInterface { index: usize, count: usize },

    #[error("k = {k} is not in 1..={n}")]
    KOutOfRange { k: usize, n: usize },

    #[error("no feasible allocation: the largest reachable total fraction {max_total} is below the decoding threshold {gamma_d}")]
    Infeasible { max_total: f64, gamma_d: f64 },

    #[error("search grid has {required} points, budget is {budget}")]
    BudgetExceeded { required: u128, budget: u64 },

    #[error("linear solve failed: residual {residual:e} exceeds tolerance {tolerance:e}")]
    Residual { residual: f64, tolerance: f64 },

    #[error("negative state probability {value:e} for state {state}")]
    NegativeProbability { state: usize, value: f64 },

    #[error("singular system: {0}")]
    Singular(&'static str),

    #[error("trace lengths differ: {0:?}")]
    Misaligned(Vec<usize>),
}

impl Error {
    pub(crate) fn param(name: &'static str, reason: impl Into<String>) -> Self {
        Error::InvalidParameter {
            name,
            reason: reason.into(),
        }
    }
}
