//! Experiment configuration and its JSON schema.
//!
//! Every struct here rejects unknown keys. Missing keys fall back to the
//! defaults below, so a config file only needs to name what it changes.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::auction::{AuctionMode, WinRule};
use crate::error::ConfigError;
use crate::types::{Capacity, ExecutorMode, NodeId, ResourceWeights, WorkerNode};

/// Task-to-node assignment strategy.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    #[default]
    Aucrac,
    Random,
    RoundRobin,
    Greedy,
    Mct,
    AuctionBasic,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Aucrac,
        StrategyKind::Random,
        StrategyKind::RoundRobin,
        StrategyKind::Greedy,
        StrategyKind::Mct,
        StrategyKind::AuctionBasic,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Self::Aucrac => "aucrac",
            Self::Random => "random",
            Self::RoundRobin => "round_robin",
            Self::Greedy => "greedy",
            Self::Mct => "mct",
            Self::AuctionBasic => "auction_basic",
        }
    }

    /// Strategies that allocate through a sealed-bid auction.
    pub fn is_auction(self) -> bool {
        matches!(self, Self::Aucrac | Self::AuctionBasic)
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for StrategyKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| ConfigError::UnknownVariant {
                field: "strategy".into(),
                value: s.into(),
                expected: Self::ALL.map(|k| k.as_str()).join(", "),
            })
    }
}

/// Closed interval `[min, max]` sampled uniformly.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Span {
    pub min: f64,
    pub max: f64,
}

impl Span {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    fn validate(&self, field: &str) -> Result<(), ConfigError> {
        if !(self.min.is_finite() && self.max.is_finite() && self.min >= 0.0 && self.min <= self.max) {
            return Err(ConfigError::invalid(
                field,
                format!("need 0 <= min <= max, got [{}, {}]", self.min, self.max),
            ));
        }
        Ok(())
    }
}

/// Fractions of low-, medium- and high-intensity tasks.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IntensityMix {
    pub lit: f64,
    pub mit: f64,
    pub hit: f64,
}

impl Default for IntensityMix {
    fn default() -> Self {
        Self {
            lit: 0.4,
            mit: 0.3,
            hit: 0.3,
        }
    }
}

impl IntensityMix {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [("workload.mix.lit", self.lit), ("workload.mix.mit", self.mit), ("workload.mix.hit", self.hit)] {
            if !(0.0..=1.0).contains(&v) {
                return Err(ConfigError::invalid(name, format!("fraction must lie in [0, 1], got {v}")));
            }
        }
        let sum = self.lit + self.mit + self.hit;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(ConfigError::MixSum { sum });
        }
        Ok(())
    }

    pub fn fractions(&self) -> [f64; 3] {
        [self.lit, self.mit, self.hit]
    }
}

/// Task-generation parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WorkloadConfig {
    /// Tasks per second emitted by each device.
    pub arrival_rate: f64,
    pub mix: IntensityMix,
    pub lit_cycles: Span,
    pub mit_cycles: Span,
    pub hit_cycles: Span,
    pub memory_mb: Span,
    pub power_w: Span,
    pub data_in_mb: Span,
    pub data_out_mb: Span,
    /// Cycles per second of the reference machine used to scale time budgets.
    pub reference_cpu: f64,
    /// `td_max = factor * cycles / reference_cpu`.
    pub td_max_factor: Span,
    /// `deadline = deadline_offset_s + factor * cycles / reference_cpu`.
    pub deadline_factor: Span,
    pub deadline_offset_s: f64,
}

impl Default for WorkloadConfig {
    fn default() -> Self {
        Self {
            arrival_rate: 0.2,
            mix: IntensityMix::default(),
            lit_cycles: Span::new(1e8, 5e8),
            mit_cycles: Span::new(5e8, 2e9),
            hit_cycles: Span::new(2e9, 1e10),
            memory_mb: Span::new(128.0, 1024.0),
            power_w: Span::new(5.0, 50.0),
            data_in_mb: Span::new(1.0, 10.0),
            data_out_mb: Span::new(0.1, 1.0),
            reference_cpu: 2e10,
            td_max_factor: Span::new(1.5, 3.0),
            deadline_factor: Span::new(4.0, 8.0),
            deadline_offset_s: 1.0,
        }
    }
}

impl WorkloadConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.arrival_rate >= 0.0 && self.arrival_rate.is_finite()) {
            return Err(ConfigError::invalid("workload.arrival_rate", "must be non-negative"));
        }
        self.mix.validate()?;
        for (name, span) in [
            ("workload.lit_cycles", self.lit_cycles),
            ("workload.mit_cycles", self.mit_cycles),
            ("workload.hit_cycles", self.hit_cycles),
            ("workload.memory_mb", self.memory_mb),
            ("workload.power_w", self.power_w),
            ("workload.data_in_mb", self.data_in_mb),
            ("workload.data_out_mb", self.data_out_mb),
            ("workload.td_max_factor", self.td_max_factor),
            ("workload.deadline_factor", self.deadline_factor),
        ] {
            span.validate(name)?;
        }
        if !(self.reference_cpu > 0.0) {
            return Err(ConfigError::invalid("workload.reference_cpu", "must be positive"));
        }
        if !(self.td_max_factor.min > 0.0) {
            return Err(ConfigError::invalid("workload.td_max_factor", "min must be positive"));
        }
        if !(self.deadline_offset_s >= 0.0) {
            return Err(ConfigError::invalid("workload.deadline_offset_s", "must be non-negative"));
        }
        if !(self.deadline_offset_s > 0.0 || self.deadline_factor.min > 0.0) {
            return Err(ConfigError::invalid("workload.deadline_factor", "deadlines would be zero"));
        }
        Ok(())
    }
}

/// Capacities and prices of one class of worker node.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeTemplate {
    pub cpu: f64,
    pub memory: f64,
    pub power: f64,
    pub unit_cost: f64,
    #[serde(default = "one")]
    pub time_const: f64,
    #[serde(default)]
    pub executor_mode: ExecutorMode,
}

fn one() -> f64 {
    1.0
}

impl NodeTemplate {
    const fn new(cpu: f64, memory: f64, power: f64, unit_cost: f64) -> Self {
        Self {
            cpu,
            memory,
            power,
            unit_cost,
            time_const: 1.0,
            executor_mode: ExecutorMode::Container,
        }
    }

    pub fn defaults() -> Vec<NodeTemplate> {
        vec![
            NodeTemplate::new(3.2e10, 32768.0, 400.0, 2.0),
            NodeTemplate::new(2.4e10, 16384.0, 300.0, 1.5),
            NodeTemplate::new(2.0e10, 16384.0, 300.0, 1.3),
            NodeTemplate::new(1.6e10, 16384.0, 250.0, 1.2),
            NodeTemplate::new(1.2e10, 8192.0, 200.0, 1.0),
        ]
    }
}

/// Executor overheads and container lifecycle knobs shared by all nodes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExecutorProfile {
    /// Memory the node uses with no executors, MB.
    pub base_memory_mb: f64,
    /// Library-install memory added to every container, MB.
    pub lib_overhead_mb: f64,
    /// Guest OS image memory added to every VM, MB.
    pub os_image_overhead_mb: f64,
    pub container_start_s: f64,
    pub vm_boot_s: f64,
    /// Container compute slices are multiples of this, cycles per second.
    pub cpu_granularity: f64,
    /// Free containers idle this long are destroyed.
    pub idle_ttl_s: f64,
    /// Auction retries before a task is declared failed-to-place.
    pub max_requeue: u32,
    pub requeue_interval_s: f64,
}

impl Default for ExecutorProfile {
    fn default() -> Self {
        Self {
            base_memory_mb: 256.0,
            lib_overhead_mb: 20.0,
            os_image_overhead_mb: 512.0,
            container_start_s: 0.5,
            vm_boot_s: 20.0,
            cpu_granularity: 1e9,
            idle_ttl_s: 30.0,
            max_requeue: 3,
            requeue_interval_s: 0.5,
        }
    }
}

impl ExecutorProfile {
    pub fn validate(&self) -> Result<(), ConfigError> {
        for (name, v) in [
            ("executor.base_memory_mb", self.base_memory_mb),
            ("executor.lib_overhead_mb", self.lib_overhead_mb),
            ("executor.os_image_overhead_mb", self.os_image_overhead_mb),
            ("executor.container_start_s", self.container_start_s),
            ("executor.vm_boot_s", self.vm_boot_s),
            ("executor.idle_ttl_s", self.idle_ttl_s),
            ("executor.requeue_interval_s", self.requeue_interval_s),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return Err(ConfigError::invalid(name, format!("must be non-negative, got {v}")));
            }
        }
        if !(self.cpu_granularity > 0.0) {
            return Err(ConfigError::invalid("executor.cpu_granularity", "must be positive"));
        }
        Ok(())
    }

    /// Memory overhead and cold-start latency of one executor.
    pub fn overhead(&self, mode: ExecutorMode) -> (f64, f64) {
        match mode {
            ExecutorMode::Container => (self.lib_overhead_mb, self.container_start_s),
            ExecutorMode::Vm => (self.os_image_overhead_mb, self.vm_boot_s),
        }
    }
}

/// Full description of one simulation run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub seed: u64,
    pub num_devices: usize,
    pub num_workers: usize,
    pub strategy: StrategyKind,
    pub auction_mode: AuctionMode,
    pub win_rule: WinRule,
    /// Currency the manager charges per MB of task input.
    pub unit_price: f64,
    pub weights: ResourceWeights,
    /// Markup applied to execution cost to obtain a node's valuation.
    pub valuation_margin: f64,
    pub workload: WorkloadConfig,
    /// Worker `i` is built from template `i % node_templates.len()`.
    pub node_templates: Vec<NodeTemplate>,
    pub executor: ExecutorProfile,
    /// Tasks arrive in `[0, horizon)`, seconds.
    pub horizon: f64,
    /// Extra simulated time after the horizon for in-flight work to finish.
    pub drain: f64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            num_devices: 50,
            num_workers: 10,
            strategy: StrategyKind::Aucrac,
            auction_mode: AuctionMode::Repaired,
            win_rule: WinRule::Lowest,
            unit_price: 0.5,
            weights: ResourceWeights::default(),
            valuation_margin: 0.1,
            workload: WorkloadConfig::default(),
            node_templates: NodeTemplate::defaults(),
            executor: ExecutorProfile::default(),
            horizon: 300.0,
            drain: 120.0,
        }
    }
}

const ENUM_FIELDS: [(&str, &[&str]); 3] = [
    ("strategy", &["aucrac", "random", "round_robin", "greedy", "mct", "auction_basic"]),
    ("auction_mode", &["literal", "repaired"]),
    ("win_rule", &["highest", "lowest"]),
];

const EXECUTOR_MODES: &[&str] = &["container", "vm"];

fn check_variant(path: String, value: &serde_json::Value, allowed: &[&str]) -> Result<(), ConfigError> {
    match value {
        serde_json::Value::String(s) if !allowed.contains(&s.as_str()) => Err(ConfigError::UnknownVariant {
            field: path,
            value: s.clone(),
            expected: allowed.join(", "),
        }),
        _ => Ok(()),
    }
}

/// Reports bad enum strings as unknown variants before serde folds them
/// into a generic schema error.
fn check_enum_fields(raw: &serde_json::Value) -> Result<(), ConfigError> {
    let serde_json::Value::Object(map) = raw else { return Ok(()) };
    for (field, allowed) in ENUM_FIELDS {
        if let Some(v) = map.get(field) {
            check_variant(field.into(), v, allowed)?;
        }
    }
    if let Some(serde_json::Value::Array(templates)) = map.get("node_templates") {
        for (i, t) in templates.iter().enumerate() {
            if let Some(v) = t.get("executor_mode") {
                check_variant(format!("node_templates[{i}].executor_mode"), v, EXECUTOR_MODES)?;
            }
        }
    }
    Ok(())
}

impl SimConfig {
    /// Parses and validates a JSON config document.
    pub fn from_json_str(text: &str) -> Result<Self, ConfigError> {
        let raw: serde_json::Value = serde_json::from_str(text).map_err(|e| ConfigError::Schema {
            path: ".".into(),
            message: e.to_string(),
        })?;
        check_enum_fields(&raw)?;
        let cfg: SimConfig = serde_path_to_error::deserialize(raw).map_err(|e| ConfigError::Schema {
            path: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json_string(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.num_workers < 2 {
            return Err(ConfigError::invalid("num_workers", "need at least 2 worker nodes"));
        }
        // Zero horizon is accepted and yields an empty run.
        if !(self.horizon >= 0.0 && self.horizon.is_finite()) {
            return Err(ConfigError::invalid("horizon", "must be a non-negative number"));
        }
        if !(self.drain >= 0.0 && self.drain.is_finite()) {
            return Err(ConfigError::invalid("drain", "must be a non-negative number"));
        }
        if !(self.unit_price >= 0.0) {
            return Err(ConfigError::invalid("unit_price", "must be non-negative"));
        }
        if !(self.valuation_margin >= 0.0) {
            return Err(ConfigError::invalid("valuation_margin", "must be non-negative"));
        }
        if self.node_templates.is_empty() {
            return Err(ConfigError::invalid("node_templates", "need at least one template"));
        }
        self.weights.validate()?;
        self.workload.validate()?;
        self.executor.validate()?;
        self.build_nodes().map(|_| ())
    }

    /// Instantiates the worker nodes with empty container pools.
    pub fn build_nodes(&self) -> Result<Vec<WorkerNode>, ConfigError> {
        (0..self.num_workers)
            .map(|i| {
                let t = &self.node_templates[i % self.node_templates.len()];
                WorkerNode::new(
                    NodeId(i as u32),
                    Capacity {
                        cpu: t.cpu,
                        memory: t.memory,
                        power: t.power,
                    },
                    t.unit_cost,
                    t.time_const,
                    t.executor_mode,
                    self.executor.clone(),
                )
            })
            .collect()
    }

    /// Number of tasks the workload generator emits for this config.
    pub fn task_count(&self) -> usize {
        (self.num_devices as f64 * self.workload.arrival_rate * self.horizon).round() as usize
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_config_is_valid() {
        SimConfig::default().validate().unwrap();
    }

    #[test]
    fn json_round_trip_is_identity() {
        let cfg = SimConfig::default();
        let text = cfg.to_json_string();
        let back = SimConfig::from_json_str(&text).unwrap();
        assert_eq!(cfg, back);
        assert_eq!(text, back.to_json_string());
    }

    #[test]
    fn unknown_key_is_schema_error_with_path() {
        let err = SimConfig::from_json_str(r#"{"workload": {"arrival_rte": 1.0}}"#).unwrap_err();
        match &err {
            ConfigError::Schema { path, message } => {
                assert_eq!(path, "workload.arrival_rte");
                assert!(message.contains("arrival_rte"), "{message}");
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn unknown_strategy_names_the_field() {
        let err = SimConfig::from_json_str(r#"{"strategy": "foo"}"#).unwrap_err();
        assert_eq!(err.field(), "strategy");
        assert!(matches!(err, ConfigError::UnknownVariant { .. }));
    }

    #[test]
    fn unknown_executor_mode_names_the_template() {
        let err = SimConfig::from_json_str(
            r#"{"node_templates": [{"cpu": 1e10, "memory": 1024, "power": 10, "unit_cost": 1, "time_const": 1, "executor_mode": "boat"}]}"#,
        )
        .unwrap_err();
        assert!(matches!(err, ConfigError::UnknownVariant { .. }));
        assert_eq!(err.field(), "node_templates[0].executor_mode");
    }

    #[test]
    fn lambda_sum_is_enforced_at_load() {
        let err = SimConfig::from_json_str(
            r#"{"weights": {"lambda1": 0.5, "lambda2": 0.5, "lambda3": 0.5, "alpha1": 1, "alpha2": 1, "delta": 1}}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("lambda1 + lambda2 + lambda3"), "{err}");
    }

    #[test]
    fn mix_must_sum_to_one() {
        let err = SimConfig::from_json_str(r#"{"workload": {"mix": {"lit": 0.5, "mit": 0.3, "hit": 0.3}}}"#).unwrap_err();
        assert!(matches!(err, ConfigError::MixSum { .. }));
    }

    #[test]
    fn single_worker_is_rejected() {
        let cfg = SimConfig {
            num_workers: 1,
            ..SimConfig::default()
        };
        assert_eq!(cfg.validate().unwrap_err().field(), "num_workers");
    }

    #[test]
    fn strategy_names_parse() {
        for k in StrategyKind::ALL {
            assert_eq!(k.as_str().parse::<StrategyKind>().unwrap(), k);
        }
        assert!("fastest".parse::<StrategyKind>().is_err());
    }

    #[test]
    fn task_count_follows_rate_and_horizon() {
        let mut cfg = SimConfig {
            num_devices: 10,
            horizon: 10.0,
            ..SimConfig::default()
        };
        cfg.workload.arrival_rate = 1.0;
        assert_eq!(cfg.task_count(), 100);
        cfg.horizon = 0.0;
        assert_eq!(cfg.task_count(), 0);
    }
}
