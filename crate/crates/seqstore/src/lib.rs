//! Versioned late materialization for user-interaction-history training data.
//!
//! A bifurcated sequence store (real-time mutable tier + compacted immutable
//! tier), a snapshot/reconstruct protocol that logs a version pointer instead
//! of the full sequence per training example, the fat-row baseline it
//! replaces, and a disaggregated preprocessing simulator that late-
//! materializes sequences at training time.

pub mod domain;
pub mod encoding;
pub mod error;
pub mod fatrow;
pub mod immutable;
pub mod metrics;
pub mod mutable;
pub mod pipeline;
pub mod protocol;
pub mod scenario;
pub mod stripe;
pub mod workload;

pub use domain::{
    compute_checksum, Event, EventType, FeatureGroup, TenantSpec, TrainingExample, TraitValue,
    UihPayload, VersionMetadata, WorkloadSpec,
};
pub use error::{Result, SeqStoreError};
pub use immutable::{compact, CompactionConfig, DeletionList, Generation, ImmutableStore};
pub use mutable::MutableStore;
pub use protocol::{reconstruct, snapshot_at_inference, InferenceSnapshot, RankingRequest};
pub use scenario::{run_scenario, ScenarioConfig, ScenarioReport};
