#![no_main]

use libfuzzer_sys::fuzz_target;
use seqstore::domain::{validate_feature_groups, WorkloadSpec};
use seqstore::scenario::ScenarioConfig;

fuzz_target!(|data: &[u8]| {
    if let Ok(config) = serde_json::from_slice::<ScenarioConfig>(data) {
        // parsing may accept what validation rejects, but neither may panic
        let _ = validate_feature_groups(&config.feature_groups);
        for tenant in &config.tenants {
            let _ = tenant.validate();
        }
        let _ = config.workload.validate();
        let _ = serde_json::to_vec(&config);
    }
    if let Ok(spec) = serde_json::from_slice::<WorkloadSpec>(data) {
        let _ = spec.validate();
    }
});
