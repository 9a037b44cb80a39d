use thiserror::Error;

/// Which of the two mapping stages an error came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum StageId {
    Icmp,
    Csmp,
}

impl std::fmt::Display for StageId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            StageId::Icmp => write!(f, "icmp"),
            StageId::Csmp => write!(f, "csmp"),
        }
    }
}

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),

    #[error("invalid request: {0}")]
    InvalidRequest(String),

    /// Rejected at intake: some instance can never fit a container of its
    /// request, so no search is attempted.
    #[error("request {request}: instance {instance} demand exceeds container capacity")]
    OversizedInstance { request: usize, instance: usize },

    #[error("invalid config: {0}")]
    InvalidConfig(String),

    /// A precondition the caller promised to uphold was violated.
    #[error("contract violation: {0}")]
    ContractViolation(String),

    #[error("placement failed in stage {stage} at step {step}: {reason}")]
    PlacementFailed {
        stage: StageId,
        step: usize,
        reason: String,
    },

    #[error("topology error: {0}")]
    Topology(String),

    #[error("search space too large: {0}")]
    SearchSpaceTooLarge(String),

    #[error("no feasible assignment exists")]
    Infeasible,

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),

    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
