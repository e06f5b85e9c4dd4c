use thiserror::Error;

/// Errors surfaced by game validation, estimators and diagnostics.
#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error("{context}: row for state {state}{} sums to {sum:.17e}, expected 1", fmt_action(.action))]
    NonStochasticRow {
        context: String,
        state: usize,
        action: Option<usize>,
        sum: f64,
    },
    #[error("{context}: negative entry {value:.17e}")]
    NegativeEntry { context: String, value: f64 },
    #[error("{context}: expected dimension {expected}, got {got}")]
    DimensionMismatch {
        context: String,
        expected: usize,
        got: usize,
    },
    #[error("floor {floor} is infeasible for {len} coordinates ({len}*{floor} > 1)")]
    InfeasibleFloor { floor: f64, len: usize },
    #[error("{context}: linear system is singular")]
    SingularSystem { context: String },
    #[error("empty trajectory batch")]
    EmptyBatch,
    #[error("agent {agent} sampled action {action} in state {state} with zero probability")]
    ZeroProbabilityAction {
        agent: usize,
        state: usize,
        action: usize,
    },
    #[error("utility kind does not support {context}")]
    UnsupportedKind { context: String },
    #[error("{0}")]
    InvalidConfig(String),
}

fn fmt_action(action: &Option<usize>) -> String {
    match action {
        Some(a) => format!(", joint action {a}"),
        None => String::new(),
    }
}

pub type Result<T> = std::result::Result<T, Error>;
