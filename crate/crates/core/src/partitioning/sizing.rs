use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ComputingEnvironment;

/// Inputs to the memory-bounded partition size estimate.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SizingInput {
    /// Bytes of memory a node devotes to matching.
    pub max_mem_per_node: u64,
    /// Concurrent match tasks per node; each gets an equal memory share.
    pub threads_per_node: u64,
    /// Bytes needed per compared entity pair.
    pub pair_memory_cost: u64,
}

impl SizingInput {
    pub fn from_environment(ce: &ComputingEnvironment, pair_memory_cost: u64) -> Self {
        Self {
            max_mem_per_node: ce.max_mem_per_node,
            threads_per_node: ce.threads_per_node as u64,
            pair_memory_cost,
        }
    }
}

/// Largest `m` such that an `m × m` task fits one thread's memory share:
/// `m = ⌊√(max_mem / (threads · c_ms))⌋`.
pub fn max_partition_size(s: SizingInput) -> Result<usize> {
    if s.threads_per_node == 0 {
        return Err(Error::config("threads_per_node", "must be at least 1"));
    }
    if s.pair_memory_cost == 0 {
        return Err(Error::config("pair_memory_cost", "must be positive"));
    }
    // floor(sqrt(floor(x))) == floor(sqrt(x)), so integer division is exact here
    let pairs_per_task = s.max_mem_per_node / s.threads_per_node.saturating_mul(s.pair_memory_cost);
    let m = pairs_per_task.isqrt();
    if m == 0 {
        return Err(Error::config(
            "max_mem",
            format!(
                "{} bytes over {} threads cannot hold a single pair at {} bytes each",
                s.max_mem_per_node, s.threads_per_node, s.pair_memory_cost
            ),
        ));
    }
    usize::try_from(m).map_err(|_| Error::config("max_mem", "partition size overflows usize"))
}

#[cfg(test)]
mod tests {
    use super::*;

    const GB: u64 = 1_000_000_000;

    #[test]
    fn lean_strategy_on_two_gigabytes() {
        let s = SizingInput {
            max_mem_per_node: 2 * GB,
            threads_per_node: 4,
            pair_memory_cost: 20,
        };
        assert_eq!(max_partition_size(s).unwrap(), 5000);
    }

    #[test]
    fn learner_strategy_on_two_gigabytes() {
        let s = SizingInput {
            max_mem_per_node: 2 * GB,
            threads_per_node: 4,
            pair_memory_cost: 1000,
        };
        // sqrt(500_000) = 707.1
        assert_eq!(max_partition_size(s).unwrap(), 707);
    }

    #[test]
    fn boundary_and_too_small() {
        let one = SizingInput {
            max_mem_per_node: 4 * 1000,
            threads_per_node: 4,
            pair_memory_cost: 1000,
        };
        assert_eq!(max_partition_size(one).unwrap(), 1);
        let none = SizingInput {
            max_mem_per_node: 3999,
            ..one
        };
        assert!(matches!(max_partition_size(none), Err(Error::Config { .. })));
    }

    #[test]
    fn from_environment_uses_threads() {
        let ce = ComputingEnvironment::with_threads(4, 4, 3 * GB, 2).unwrap();
        let s = SizingInput::from_environment(&ce, 20);
        assert_eq!(s.threads_per_node, 2);
        // 3e9 / 40 = 75e6, sqrt = 8660.25
        assert_eq!(max_partition_size(s).unwrap(), 8660);
    }
}
