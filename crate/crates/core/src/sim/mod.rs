//! Discrete-event simulation of task offloading under the auction-based
//! scheduler and the baseline strategies.

mod engine;
pub mod event;
pub mod metrics;
pub mod strategy;

pub use engine::{run, run_tasks, RunReport, SimError, TaskRun, TaskStatus};
pub use event::{format_log, parse_log, EventKind, EventRecord, SimEvent};
pub use metrics::{completion_summary, jain_fairness, mn_profit, percentile, utilization_series, NodeSeries, UtilizationPoint};
pub use strategy::{assign, AssignContext, Assignment, NodeLoad, StrategyState};
