use thiserror::Error;

use crate::domain::Event;

pub type Result<T> = std::result::Result<T, SeqStoreError>;

#[derive(Debug, Error)]
pub enum SeqStoreError {
    #[error("duplicate event (timestamp={timestamp}, event_id={event_id}) for user {user_id}")]
    DuplicateEvent {
        user_id: u64,
        timestamp: u64,
        event_id: u64,
    },

    #[error("coverage gap: mutable retention floor {retention_floor_ts} is above the immutable horizon {immutable_end_ts}")]
    CoverageGap {
        retention_floor_ts: u64,
        immutable_end_ts: u64,
    },

    #[error("future leakage: {} event(s) after request_ts {request_ts}, first offender (ts={}, event_id={})",
            offenders.len(), offenders[0].timestamp, offenders[0].event_id)]
    FutureLeakage {
        request_ts: u64,
        offenders: Vec<Event>,
    },

    #[error("O2O violation during reconstruction: {detail}")]
    O2OViolation { detail: String },

    #[error("generation {generation_id} is not retained (live generation: {live:?})")]
    StaleGeneration {
        generation_id: u64,
        live: Option<u64>,
    },

    #[error("reconstruction diverged after deletion-scrubbing recompaction: {detail}")]
    ScrubDivergence { detail: String },

    #[error("publish of generation {attempted} would regress the live generation {live}")]
    Monotonicity { attempted: u64, live: u64 },

    #[error("encoding error: {0}")]
    Encoding(String),

    #[error("decode error: {0}")]
    Decode(String),

    #[error("config error: {0}")]
    Config(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl SeqStoreError {
    /// Stable machine-readable tag, used for the CLI's structured stderr output.
    pub fn kind(&self) -> &'static str {
        match self {
            SeqStoreError::DuplicateEvent { .. } => "duplicate_event",
            SeqStoreError::CoverageGap { .. } => "coverage_gap",
            SeqStoreError::FutureLeakage { .. } => "future_leakage",
            SeqStoreError::O2OViolation { .. } => "o2o_violation",
            SeqStoreError::StaleGeneration { .. } => "stale_generation",
            SeqStoreError::ScrubDivergence { .. } => "scrub_divergence",
            SeqStoreError::Monotonicity { .. } => "monotonicity",
            SeqStoreError::Encoding(_) => "encoding",
            SeqStoreError::Decode(_) => "decode",
            SeqStoreError::Config(_) => "config",
            SeqStoreError::Io(_) => "io",
            SeqStoreError::Json(_) => "json",
        }
    }
}
