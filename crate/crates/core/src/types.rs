//! Domain types shared by the cost model, auction, container and simulation layers.

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::config::ExecutorProfile;
use crate::error::ConfigError;

macro_rules! id_newtype {
    ($(#[$meta:meta])* $name:ident($inner:ty)) => {
        $(#[$meta])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(transparent)]
        pub struct $name(pub $inner);

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                write!(f, "{}", self.0)
            }
        }
    };
}

id_newtype!(
    /// Task identifier, dense from zero in arrival order.
    TaskId(u64)
);
id_newtype!(
    /// Worker node identifier, dense from zero.
    NodeId(u32)
);
id_newtype!(
    /// Container identifier, unique within its node.
    ContainerId(u64)
);

const WEIGHT_SUM_TOL: f64 = 1e-12;

/// Weights of the resource function: contribution of cycles, memory and power,
/// the unit-matching factors for memory and power, and the mapping constant.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ResourceWeights {
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    pub alpha1: f64,
    pub alpha2: f64,
    pub delta: f64,
}

impl Default for ResourceWeights {
    fn default() -> Self {
        Self {
            lambda1: 1.0 / 3.0,
            lambda2: 1.0 / 3.0,
            lambda3: 1.0 / 3.0,
            alpha1: 1.0,
            alpha2: 1.0,
            delta: 1.0,
        }
    }
}

impl ResourceWeights {
    pub fn new(
        lambda1: f64,
        lambda2: f64,
        lambda3: f64,
        alpha1: f64,
        alpha2: f64,
        delta: f64,
    ) -> Result<Self, ConfigError> {
        let w = Self {
            lambda1,
            lambda2,
            lambda3,
            alpha1,
            alpha2,
            delta,
        };
        w.validate()?;
        Ok(w)
    }

    /// Equal lambdas with the given unit factors and mapping constant.
    pub fn equal(alpha1: f64, alpha2: f64, delta: f64) -> Result<Self, ConfigError> {
        Self::new(1.0 / 3.0, 1.0 / 3.0, 1.0 / 3.0, alpha1, alpha2, delta)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("weights.lambda1", self.lambda1),
            ("weights.lambda2", self.lambda2),
            ("weights.lambda3", self.lambda3),
        ] {
            if !(v > 0.0 && v < 1.0) {
                return Err(ConfigError::invalid(name, format!("must lie in (0, 1), got {v}")));
            }
        }
        let sum = self.lambda1 + self.lambda2 + self.lambda3;
        if (sum - 1.0).abs() > WEIGHT_SUM_TOL {
            return Err(ConfigError::invalid(
                "weights.lambda",
                format!("lambda1 + lambda2 + lambda3 must equal 1, got {sum}"),
            ));
        }
        for (name, v) in [
            ("weights.alpha1", self.alpha1),
            ("weights.alpha2", self.alpha2),
            ("weights.delta", self.delta),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(())
    }
}

/// Workload intensity class.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Intensity {
    Lit,
    Mit,
    Hit,
}

impl Intensity {
    pub const ALL: [Intensity; 3] = [Intensity::Lit, Intensity::Mit, Intensity::Hit];
}

/// One IoT workload unit.
///
/// `deadline` is the only completion deadline a task carries; it is used both
/// as the maximum allowed execution time of the constrained cost problem and
/// as `r_j` in the bidding eligibility test.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Task {
    pub id: TaskId,
    pub device: u32,
    pub class: Intensity,
    /// MB sent from the device to the manager.
    pub data_in: f64,
    /// MB of result returned.
    pub data_out: f64,
    pub cycles: f64,
    /// MB.
    pub memory: f64,
    /// Watts.
    pub power: f64,
    /// Seconds, relative to arrival.
    pub deadline: f64,
    /// Maximum execution delay inside a container, seconds.
    pub td_max: f64,
    /// Valuation; unset until a worker values the task.
    pub value: Option<f64>,
    pub arrival_time: f64,
}

impl Task {
    /// A task with the given demand and generous defaults for everything else.
    pub fn with_demand(id: u64, cycles: f64, memory: f64, power: f64) -> Self {
        Self {
            id: TaskId(id),
            device: 0,
            class: Intensity::Lit,
            data_in: 0.0,
            data_out: 0.0,
            cycles,
            memory,
            power,
            deadline: f64::MAX,
            td_max: f64::MAX,
            value: None,
            arrival_time: 0.0,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let fields = [
            ("data_in", self.data_in),
            ("data_out", self.data_out),
            ("cycles", self.cycles),
            ("memory", self.memory),
            ("power", self.power),
            ("arrival_time", self.arrival_time),
        ];
        for (name, v) in fields {
            if !(v >= 0.0) {
                return Err(ConfigError::invalid(
                    format!("task.{name}"),
                    format!("must be non-negative, got {v}"),
                ));
            }
        }
        if !(self.deadline > 0.0) {
            return Err(ConfigError::invalid("task.deadline", "must be positive"));
        }
        if !(self.td_max > 0.0) {
            return Err(ConfigError::invalid("task.td_max", "must be positive"));
        }
        if let Some(v) = self.value {
            if !(v >= 0.0) {
                return Err(ConfigError::invalid("task.value", "must be non-negative"));
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExecutorMode {
    #[default]
    Container,
    Vm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ContainerState {
    Free,
    Busy,
}

/// A placement slot on a node with a fixed memory reservation and compute slice.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Container {
    pub id: ContainerId,
    pub node_id: NodeId,
    /// Reserved memory in MB, library overhead included.
    pub memory: f64,
    /// Compute slice in cycles per second.
    pub compute: f64,
    /// MB of `memory` taken by library installation.
    pub lib_overhead: f64,
    pub state: ContainerState,
    /// Cold-start latency paid when the container was created, seconds.
    pub startup_time: f64,
    /// Simulation time the container last became free.
    pub idle_since: f64,
}

/// Capacities of a worker node.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Capacity {
    /// Cycles per second.
    pub cpu: f64,
    /// MB.
    pub memory: f64,
    /// Watts.
    pub power: f64,
}

/// A compute server that values, bids on and executes tasks.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorkerNode {
    pub id: NodeId,
    pub capacity: Capacity,
    /// Currency per resource unit.
    pub unit_cost: f64,
    /// Time constant of the execution-time model, seconds.
    pub time_const: f64,
    pub executor_mode: ExecutorMode,
    pub executor: ExecutorProfile,
    pub containers: Vec<Container>,
    /// MB not reserved by any live container.
    pub free_memory: f64,
    /// Cycles per second not reserved by any live container.
    pub free_cpu: f64,
    pub(crate) next_container: u64,
}

impl WorkerNode {
    pub fn new(
        id: NodeId,
        capacity: Capacity,
        unit_cost: f64,
        time_const: f64,
        executor_mode: ExecutorMode,
        executor: ExecutorProfile,
    ) -> Result<Self, ConfigError> {
        for (name, v) in [
            ("node.cpu", capacity.cpu),
            ("node.memory", capacity.memory),
            ("node.power", capacity.power),
            ("node.unit_cost", unit_cost),
            ("node.time_const", time_const),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        Ok(Self {
            id,
            capacity,
            unit_cost,
            time_const,
            executor_mode,
            executor,
            containers: Vec::new(),
            free_memory: capacity.memory,
            free_cpu: capacity.cpu,
            next_container: 0,
        })
    }

    pub fn container(&self, id: ContainerId) -> Option<&Container> {
        self.containers.iter().find(|c| c.id == id)
    }

    pub fn live_memory(&self) -> f64 {
        self.containers.iter().map(|c| c.memory).sum()
    }

    pub fn busy_compute(&self) -> f64 {
        self.containers
            .iter()
            .filter(|c| c.state == ContainerState::Busy)
            .map(|c| c.compute)
            .sum()
    }

    /// `live container memory + free memory == capacity` up to rounding.
    pub fn memory_conserved(&self) -> bool {
        let total = self.live_memory() + self.free_memory;
        (total - self.capacity.memory).abs() <= 1e-9 * self.capacity.memory.max(1.0)
            && self.free_memory >= -1e-9
    }
}

/// Distribution of competing bids used by the winning-probability model.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum BidDistribution {
    Uniform { lower: f64, upper: f64 },
    /// Samples are kept sorted ascending.
    Empirical { samples: Vec<f64> },
}

impl BidDistribution {
    pub fn uniform(lower: f64, upper: f64) -> Result<Self, ConfigError> {
        if !(lower < upper) || !lower.is_finite() || !upper.is_finite() {
            return Err(ConfigError::invalid(
                "bid_distribution",
                format!("uniform bounds need lower < upper, got [{lower}, {upper}]"),
            ));
        }
        Ok(Self::Uniform { lower, upper })
    }

    pub fn empirical(mut samples: Vec<f64>) -> Result<Self, ConfigError> {
        if samples.len() < 2 {
            return Err(ConfigError::invalid(
                "bid_distribution.samples",
                "empirical distribution needs at least 2 samples",
            ));
        }
        if samples.iter().any(|s| !s.is_finite()) {
            return Err(ConfigError::invalid("bid_distribution.samples", "non-finite sample"));
        }
        samples.sort_by(f64::total_cmp);
        Ok(Self::Empirical { samples })
    }

    pub fn cdf(&self, b: f64) -> f64 {
        match self {
            Self::Uniform { lower, upper } => ((b - lower) / (upper - lower)).clamp(0.0, 1.0),
            Self::Empirical { samples } => {
                let below = samples.partition_point(|s| *s <= b);
                below as f64 / samples.len() as f64
            }
        }
    }

    pub fn lower(&self) -> f64 {
        match self {
            Self::Uniform { lower, .. } => *lower,
            Self::Empirical { samples } => samples.first().copied().unwrap_or(0.0),
        }
    }

    pub fn upper(&self) -> f64 {
        match self {
            Self::Uniform { upper, .. } => *upper,
            Self::Empirical { samples } => samples.last().copied().unwrap_or(0.0),
        }
    }
}

/// A node's sealed bid for a task.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Bid {
    pub node_id: NodeId,
    pub task_id: TaskId,
    pub amount: f64,
    pub submit_time: f64,
    /// Deadline eligibility of the bidder for this task.
    pub eligible: bool,
}

impl Bid {
    pub fn new(node_id: NodeId, task_id: TaskId, amount: f64, submit_time: f64, eligible: bool) -> Self {
        debug_assert!(amount >= 0.0, "negative bid");
        Self {
            node_id,
            task_id,
            amount,
            submit_time,
            eligible,
        }
    }
}

/// Result of one sealed-bid auction: the winner, the first-price payment and
/// every bid that lost.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionOutcome {
    pub task_id: TaskId,
    pub winner: Option<NodeId>,
    pub payment: f64,
    pub losing_bids: Vec<Bid>,
}

impl AuctionOutcome {
    pub fn unsold(task_id: TaskId, losing_bids: Vec<Bid>) -> Self {
        Self {
            task_id,
            winner: None,
            payment: 0.0,
            losing_bids,
        }
    }
}

/// Per-run aggregates.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct MetricsRecord {
    pub tasks_arrived: u64,
    pub tasks_completed: u64,
    pub deadline_miss: u64,
    pub failed_to_place: u64,
    pub in_flight: u64,
    pub mean_completion_s: f64,
    pub median_completion_s: f64,
    pub p95_completion_s: f64,
    pub fairness_jain: f64,
    pub mn_profit: f64,
    pub per_node_tasks: Vec<u64>,
    pub peak_mem_mb: Vec<f64>,
    pub mean_cpu_frac: f64,
}

impl MetricsRecord {
    /// Highest per-node memory peak.
    pub fn max_peak_mem(&self) -> f64 {
        self.peak_mem_mb.iter().copied().fold(0.0, f64::max)
    }
}
