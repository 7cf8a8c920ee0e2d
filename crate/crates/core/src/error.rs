use thiserror::Error;

pub type Result<T> = std::result::Result<T, FairDivError>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FairDivError {
    #[error("invalid instance: {0}")]
    InvalidInstance(String),

    #[error("feasible set is empty: {0}")]
    EmptySpace(String),

    #[error("instance too large: {0}")]
    TooLarge(String),

    #[error("agent index {agent} out of range for {n_agents} agents")]
    AgentOutOfRange { agent: usize, n_agents: usize },

    #[error("item `{0}` has no utility value")]
    MissingItem(String),

    #[error("unknown item `{0}`")]
    UnknownItem(String),

    #[error("invalid lottery: {0}")]
    InvalidLottery(String),

    #[error("invalid preference: {0}")]
    InvalidPreference(String),

    #[error("invalid weight vector: {0}")]
    InvalidWeights(String),

    #[error("invalid solver configuration: {0}")]
    InvalidConfig(String),

    #[error("swapped allocation is not feasible: space is not permutation-invariant ({0})")]
    InvarianceViolation(String),

    #[error("solver did not converge within {iters} iterations (last gap {last_gap:e})")]
    NonConvergence { iters: usize, last_gap: f64 },

    #[error("no envy-free agent in the support at tolerance {tol:e}; envy matrix {envy:?}")]
    LuckyViolation { tol: f64, envy: Vec<Vec<f64>> },

    #[error("no completely labeled simplex found: {0}")]
    SpernerViolation(String),

    #[error("refinement schedule exhausted; best lambda {best_lambda:?} has max envy {max_envy:e}")]
    RefinementFailure {
        best_lambda: Vec<f64>,
        max_envy: f64,
    },

    #[error("weak Pareto gap {gap:e} exceeds bound {bound:e}")]
    WpeCheckFailure { gap: f64, bound: f64 },

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("operation requires exactly two agents, got {0}")]
    NotTwoAgents(usize),

    #[error("not a partition of unity: {0}")]
    NotPartitionOfUnity(String),

    #[error("no nonnegative solution to the indicator system: {0}")]
    FarkasViolation(String),

    #[error("measure has atoms on cells {0:?}; atomless conversion does not apply")]
    AtomicMeasure(Vec<usize>),

    #[error("certification failed: {}", .0.join("; "))]
    Certification(Vec<String>),

    #[error("parse error: {0}")]
    Parse(String),
}
