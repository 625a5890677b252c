use std::path::PathBuf;

use thiserror::Error;

use crate::AgentId;

pub type Result<T, E = DsmError> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum DsmError {
    #[error("dimension mismatch: expected {expected} slots, got {got}")]
    DimensionMismatch { expected: usize, got: usize },

    #[error("non-finite energy value at slot {slot}")]
    NonFinite { slot: usize },

    #[error("negative energy value {value} at slot {slot}")]
    NegativeEnergy { slot: usize, value: f64 },

    #[error("plan has no slots")]
    EmptyPlan,

    #[error("plan set is empty")]
    EmptyPlanSet,

    #[error("preferred index {index} out of range for {len} plans")]
    PreferredIndex { index: usize, len: usize },

    #[error("plan {index} has total energy {total}, preferred plan has {expected}")]
    UnequalTotals {
        index: usize,
        total: f64,
        expected: f64,
    },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("population is empty")]
    EmptyPopulation,

    #[error("topology covers {topology} agents but population has {population}")]
    TopologyMismatch { topology: usize, population: usize },

    #[error("blackboard view of agent {0} is out of date")]
    StaleBlackboard(AgentId),

    #[error("{}:{line}: {msg}", path.display())]
    Parse {
        path: PathBuf,
        line: usize,
        msg: String,
    },

    #[error("dataset: {0}")]
    Dataset(String),

    #[error("i/o error on {}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Exchange(#[from] ExchangeError),
}

impl DsmError {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        DsmError::Io {
            path: path.into(),
            source,
        }
    }
}

/// Outcome of a refused or malformed slot exchange.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExchangeError {
    #[error("agent {0} cannot exchange with itself")]
    SelfExchange(AgentId),

    #[error("unknown agent {0}")]
    UnknownAgent(AgentId),

    #[error("slot {slot} out of range for {d} slots")]
    SlotOutOfRange { slot: usize, d: usize },

    /// Retriable: the agent is inside another transaction.
    #[error("agent {0} is locked by another exchange")]
    Locked(AgentId),

    #[error("agent {agent} holds its preferred value at slot {slot}")]
    PreferredSlot { agent: AgentId, slot: usize },

    #[error("initiator {agent} already holds its preferred value at slot {slot}")]
    NothingToGain { agent: AgentId, slot: usize },

    #[error("advertisement of agent {agent} at slot {slot} is stale")]
    StaleAdvertisement { agent: AgentId, slot: usize },

    #[error("agent {agent} does not hold the requested value at slot {slot}")]
    ValueMismatch { agent: AgentId, slot: usize },

    #[error("agent {agent} would lose comfort at slot {slot}")]
    WouldLoseComfort { agent: AgentId, slot: usize },
}

impl ExchangeError {
    pub fn is_retriable(&self) -> bool {
        matches!(self, ExchangeError::Locked(_))
    }
}
