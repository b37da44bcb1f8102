use thiserror::Error;

/// Errors surfaced by the engine. Batch processing treats most of these as
/// fatal for the run: the protocol guarantees no conflict aborts, so an error
/// here means a broken precondition, a corrupt log, or a bad configuration.
#[derive(Debug, Error)]
pub enum EngineError {
    #[error("procedure not found: {0}")]
    ProcedureNotFound(String),
    #[error("duplicate procedure name: {0}")]
    DuplicateProcedure(String),
    #[error("malformed parameters for {proc}: {reason}")]
    MalformedParams { proc: String, reason: String },
    #[error("record not found: {0}")]
    RecordNotFound(String),
    #[error("record already exists: {0}")]
    RecordExists(String),
    #[error("no owner for key {0}")]
    OwnershipGap(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("epoch {0} incomplete: missing subgraph from node {1}")]
    EpochIncomplete(u64, u32),
    #[error("decode error at offset {offset}: {reason}")]
    Decode { offset: usize, reason: String },
    #[error("unrecoverable log on node {node}: {reason}")]
    UnrecoverableLog { node: u32, reason: String },
    #[error("recovery fault: {0}")]
    RecoveryFault(String),
    #[error("checkpoint aborted: {0}")]
    CheckpointAborted(String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EngineError>;

impl EngineError {
    pub fn decode(offset: usize, reason: impl Into<String>) -> Self {
        EngineError::Decode {
            offset,
            reason: reason.into(),
        }
    }

    /// True for errors that indicate a torn tail rather than corruption in
    /// the middle of a log file.
    pub fn is_decode(&self) -> bool {
        matches!(self, EngineError::Decode { .. })
    }
}
