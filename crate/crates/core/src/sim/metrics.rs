use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::auction::mn_revenue;
use crate::sim::event::EventRecord;
use crate::types::{AuctionOutcome, Capacity, NodeId, Task, TaskId};

/// Jain's fairness index `(sum x)^2 / (n * sum x^2)`. An all-zero vector
/// (and an empty one) counts as perfectly fair.
pub fn jain_fairness(counts: &[f64]) -> f64 {
    let sum: f64 = counts.iter().sum();
    let sq: f64 = counts.iter().map(|x| x * x).sum();
    if sq == 0.0 {
        return 1.0;
    }
    sum * sum / (counts.len() as f64 * sq)
}

/// Manager profit over the given outcomes: per sold task, revenue from its
/// input data minus the payment to the winner. Unsold outcomes add nothing.
pub fn mn_profit(outcomes: &[AuctionOutcome], tasks: &[Task], unit_price: f64) -> f64 {
    let by_id: HashMap<TaskId, &Task> = tasks.iter().map(|t| (t.id, t)).collect();
    outcomes
        .iter()
        .filter(|o| o.winner.is_some())
        .filter_map(|o| by_id.get(&o.task_id).map(|t| mn_revenue(t, unit_price) - o.payment))
        .sum()
}

/// Nearest-rank percentile of an ascending slice; 0 for an empty one.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return 0.0;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil().max(1.0) as usize;
    sorted[rank.min(sorted.len()) - 1]
}

/// Mean, median and 95th percentile of completion times.
pub fn completion_summary(times: &[f64]) -> (f64, f64, f64) {
    if times.is_empty() {
        return (0.0, 0.0, 0.0);
    }
    let mut sorted = times.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mean = sorted.iter().sum::<f64>() / sorted.len() as f64;
    let n = sorted.len();
    let median = if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    };
    (mean, median, percentile(&sorted, 95.0))
}

/// Node state after one logged event.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UtilizationPoint {
    pub time: f64,
    /// Busy compute over capacity.
    pub cpu_frac: f64,
    /// Base memory plus live executor memory, MB.
    pub memory_mb: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct NodeSeries {
    pub node: NodeId,
    pub points: Vec<UtilizationPoint>,
}

impl NodeSeries {
    pub fn peak_memory(&self) -> f64 {
        self.points.iter().map(|p| p.memory_mb).fold(0.0, f64::max)
    }
}

/// Replays the `mem` and `cpu` deltas in an event log into per-node series.
/// `capacities` is indexed by node id; every series starts with an idle
/// point at time 0.
pub fn utilization_series(log: &[EventRecord], capacities: &[Capacity], base_memory_mb: f64) -> Vec<NodeSeries> {
    let mut series: Vec<NodeSeries> = (0..capacities.len())
        .map(|i| NodeSeries {
            node: NodeId(i as u32),
            points: vec![UtilizationPoint {
                time: 0.0,
                cpu_frac: 0.0,
                memory_mb: base_memory_mb,
            }],
        })
        .collect();
    let mut busy = vec![0.0; capacities.len()];
    let mut mem = vec![base_memory_mb; capacities.len()];
    for rec in log {
        let Some(node) = rec.node_id else { continue };
        let i = node.0 as usize;
        if i >= capacities.len() {
            continue;
        }
        let (dm, dc) = (rec.delta("mem"), rec.delta("cpu"));
        if dm == 0.0 && dc == 0.0 {
            continue;
        }
        mem[i] += dm;
        busy[i] += dc;
        series[i].points.push(UtilizationPoint {
            time: rec.time,
            cpu_frac: busy[i] / capacities[i].cpu,
            memory_mb: mem[i],
        });
    }
    series
}
