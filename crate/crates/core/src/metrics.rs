use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

/// Measured quantities of one run. Times are seconds of wall clock.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "camelCase")]
pub struct RunMetrics {
    pub task_count: usize,
    pub partition_count: usize,
    /// Matching phase only, excluding load and planning.
    pub total_elapsed: f64,
    pub per_worker_busy_time: BTreeMap<String, f64>,
    pub pairs_compared: u64,
    /// Partition fetches served by the data store.
    pub fetches: u64,
    /// Cache hits reported by workers.
    pub cache_hits: u64,
    pub hit_ratio: f64,
    pub correspondence_count: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub speedup_baseline: Option<f64>,
}

/// `hits / (hits + fetches)`, or 0 without any access.
pub fn hit_ratio(hits: u64, fetches: u64) -> f64 {
    let total = hits + fetches;
    if total == 0 {
        0.0
    } else {
        hits as f64 / total as f64
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio() {
        assert_eq!(hit_ratio(0, 0), 0.0);
        assert_eq!(hit_ratio(3, 1), 0.75);
        assert_eq!(hit_ratio(0, 5), 0.0);
    }

    #[test]
    fn json_field_names() {
        let m = RunMetrics {
            task_count: 2,
            ..RunMetrics::default()
        };
        let v = serde_json::to_value(&m).unwrap();
        for key in [
            "taskCount",
            "partitionCount",
            "totalElapsed",
            "perWorkerBusyTime",
            "pairsCompared",
            "fetches",
            "cacheHits",
            "hitRatio",
            "correspondenceCount",
        ] {
            assert!(v.get(key).is_some(), "{key}");
        }
        assert!(v.get("speedupBaseline").is_none());
    }
}
