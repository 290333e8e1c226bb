//! Plan and metrics reports as JSON documents.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;
use crate::metrics::RunMetrics;
use crate::model::{PartitionKind, TaskId};
use crate::partitioning::{PartitionPlan, PartitioningMode};

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PlanReport<'a> {
    pub mode: PartitioningMode,
    pub max_partition_size: usize,
    pub min_partition_size: usize,
    pub partition_count: usize,
    pub task_count: usize,
    pub predicted_pairs: u64,
    pub partitions: Vec<PartitionRow<'a>>,
    pub tasks: Vec<TaskRow<'a>>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PartitionRow<'a> {
    pub id: &'a str,
    #[serde(flatten)]
    pub kind: &'a PartitionKind,
    pub size: usize,
    pub block_keys: Vec<&'a str>,
}

#[derive(Debug, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct TaskRow<'a> {
    pub id: &'a TaskId,
    pub partition_a: &'a str,
    pub partition_b: &'a str,
    pub self_task: bool,
    pub pairs: u64,
}

impl<'a> PlanReport<'a> {
    pub fn new(plan: &'a PartitionPlan) -> Self {
        let size_of = |id| plan.partition(id).map_or(0, |p| p.size() as u64);
        Self {
            mode: plan.mode,
            max_partition_size: plan.max_partition_size,
            min_partition_size: plan.min_partition_size,
            partition_count: plan.partitions.len(),
            task_count: plan.tasks.len(),
            predicted_pairs: plan.predicted_pairs(),
            partitions: plan
                .partitions
                .iter()
                .map(|p| PartitionRow {
                    id: p.id().as_str(),
                    kind: p.kind(),
                    size: p.size(),
                    block_keys: p.block_keys(),
                })
                .collect(),
            tasks: plan
                .tasks
                .iter()
                .map(|t| {
                    let a = size_of(&t.partition_a);
                    TaskRow {
                        id: &t.id,
                        partition_a: t.partition_a.as_str(),
                        partition_b: t.partition_b.as_str(),
                        self_task: t.is_self_task(),
                        pairs: if t.is_self_task() {
                            a * a.saturating_sub(1) / 2
                        } else {
                            a * size_of(&t.partition_b)
                        },
                    }
                })
                .collect(),
        }
    }
}

pub fn write_plan_report<W: Write>(plan: &PartitionPlan, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, &PlanReport::new(plan)).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    Ok(())
}

pub fn write_metrics<W: Write>(metrics: &RunMetrics, mut out: W) -> Result<()> {
    serde_json::to_writer_pretty(&mut out, metrics).map_err(std::io::Error::other)?;
    out.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::Entity;
    use crate::partitioning::size_based_partition;

    #[test]
    fn plan_report_tables() {
        let es: Vec<Entity> = (0..5).map(|i| Entity::new("s", i.to_string()).unwrap()).collect();
        let plan = size_based_partition(&es, 3, "wam").unwrap();
        let mut out = Vec::new();
        write_plan_report(&plan, &mut out).unwrap();
        let v: serde_json::Value = serde_json::from_slice(&out).unwrap();
        assert_eq!(v["partitionCount"], 2);
        assert_eq!(v["taskCount"], 3);
        assert_eq!(v["predictedPairs"], 10);
        assert_eq!(v["partitions"][0]["kind"], "plain");
        let pairs: Vec<u64> = v["tasks"]
            .as_array()
            .unwrap()
            .iter()
            .map(|t| t["pairs"].as_u64().unwrap())
            .collect();
        assert_eq!(pairs, vec![3, 6, 1]);
    }
}
