//! The fat-row baseline: physically materialize the complete sequence into
//! every training example. Reuses the inference snapshot path so the baseline
//! cannot drift from the protocol's view of history; divergence testing
//! targets the reconstruction path.

use crate::domain::TenantSpec;
use crate::error::Result;
use crate::metrics::IoLedger;
use crate::protocol::{snapshot_at_inference, InferenceSnapshot, ProtocolStores, RankingRequest};

/// Same observation as `snapshot_at_inference`; callers embed
/// `full_sequence` as the example payload and charge its full serialized
/// size to the write ledger. That duplicated write volume is the K-fold
/// amplification the late-materialized path removes.
pub fn generate_fat_row(
    stores: &ProtocolStores,
    request: &RankingRequest,
    tenant: &TenantSpec,
    ledger: &IoLedger,
) -> Result<InferenceSnapshot> {
    snapshot_at_inference(stores, request, tenant, ledger)
}
