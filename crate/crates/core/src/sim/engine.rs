use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap, VecDeque};

use log::{debug, trace};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::auction::AuctionError;
use crate::config::{SimConfig, StrategyKind};
use crate::containers::{acquire_container, create_container, destroy_container, provision, release_container, select_container, ContainerAction, ContainerError};
use crate::costmodel::{deadline_eligibility, execution_time};
use crate::error::ConfigError;
use crate::rng::{derive_rng, stream, SimRng};
use crate::sim::event::{EventKind, EventRecord, SimEvent};
use crate::sim::metrics::{completion_summary, jain_fairness, mn_profit};
use crate::sim::strategy::{assign, mct_estimate, AssignContext, StrategyState};
use crate::types::{AuctionOutcome, ContainerId, MetricsRecord, NodeId, Task, WorkerNode};
use crate::workload::generate_workload;

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Auction(#[from] AuctionError),
    #[error(transparent)]
    Container(#[from] ContainerError),
    #[error("duplicate task id {0}")]
    DuplicateTask(u64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    /// Arrived, waiting for a successful auction round.
    Pending,
    /// Assigned to a node, not yet finished.
    Assigned,
    Completed,
    /// Finished after its deadline.
    Missed,
    FailedToPlace,
}

impl TaskStatus {
    pub fn is_terminal(self) -> bool {
        matches!(self, Self::Completed | Self::Missed | Self::FailedToPlace)
    }
}

/// Per-task trace of one run.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TaskRun {
    pub task: Task,
    pub status: TaskStatus,
    pub node: Option<NodeId>,
    pub container: Option<ContainerId>,
    pub retries: u32,
    /// Cold-start latency paid before execution, seconds.
    pub startup: f64,
    /// Execution time excluding startup, seconds.
    pub exec_time: f64,
    pub finish: Option<f64>,
    pub outcome: Option<AuctionOutcome>,
}

impl TaskRun {
    pub fn completion_time(&self) -> Option<f64> {
        self.finish.map(|f| f - self.task.arrival_time)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunReport {
    pub metrics: MetricsRecord,
    pub log: Vec<EventRecord>,
    pub tasks: Vec<TaskRun>,
    /// Final node state, indexed by node id.
    pub nodes: Vec<WorkerNode>,
    /// Tasks that executed on a node whose deadline indicator was 0.
    pub zeta_violations: u64,
    /// Events after which some node failed the memory-conservation check.
    pub conservation_violations: u64,
    pub end_time: f64,
}

/// Generates the seeded workload for `config` and simulates it.
pub fn run(config: &SimConfig) -> Result<RunReport, SimError> {
    config.validate()?;
    let mut rng = derive_rng(config.seed, stream::WORKLOAD);
    let tasks = generate_workload(config, &mut rng)?;
    run_tasks(config, tasks)
}

/// Simulates an explicit task list under `config`'s nodes and strategy.
pub fn run_tasks(config: &SimConfig, tasks: Vec<Task>) -> Result<RunReport, SimError> {
    config.validate()?;
    for t in &tasks {
        t.validate()?;
    }
    let mut engine = Engine::new(config, tasks)?;
    engine.run()?;
    Ok(engine.finish())
}

struct Engine<'a> {
    cfg: &'a SimConfig,
    nodes: Vec<WorkerNode>,
    runs: Vec<TaskRun>,
    heap: BinaryHeap<Reverse<SimEvent>>,
    seq: u64,
    /// Per-node FIFO queues for the one-task-at-a-time strategies.
    fifo: Vec<VecDeque<usize>>,
    running: Vec<Option<usize>>,
    state: StrategyState,
    rng: SimRng,
    log: Vec<EventRecord>,
    now: f64,
    cpu_area: Vec<f64>,
    peak_mem: Vec<f64>,
    arrived: u64,
    zeta_violations: u64,
    conservation_violations: u64,
}

impl<'a> Engine<'a> {
    fn new(cfg: &'a SimConfig, tasks: Vec<Task>) -> Result<Self, SimError> {
        let nodes = cfg.build_nodes()?;
        let n = nodes.len();
        let mut seen = HashMap::with_capacity(tasks.len());
        let runs: Vec<TaskRun> = tasks
            .into_iter()
            .map(|task| TaskRun {
                task,
                status: TaskStatus::Pending,
                node: None,
                container: None,
                retries: 0,
                startup: 0.0,
                exec_time: 0.0,
                finish: None,
                outcome: None,
            })
            .collect();
        for (i, r) in runs.iter().enumerate() {
            if seen.insert(r.task.id, i).is_some() {
                return Err(SimError::DuplicateTask(r.task.id.0));
            }
        }
        let mut engine = Self {
            cfg,
            peak_mem: vec![cfg.executor.base_memory_mb; n],
            cpu_area: vec![0.0; n],
            fifo: vec![VecDeque::new(); n],
            running: vec![None; n],
            state: StrategyState::new(n),
            rng: derive_rng(cfg.seed, stream::STRATEGY),
            nodes,
            runs,
            heap: BinaryHeap::new(),
            seq: 0,
            log: Vec::new(),
            now: 0.0,
            arrived: 0,
            zeta_violations: 0,
            conservation_violations: 0,
        };
        for i in 0..engine.runs.len() {
            let at = engine.runs[i].task.arrival_time;
            engine.schedule(at, EventKind::TaskArrival, Some(i), None, None);
        }
        Ok(engine)
    }

    fn schedule(&mut self, time: f64, kind: EventKind, run: Option<usize>, node: Option<NodeId>, container: Option<ContainerId>) {
        let ev = SimEvent {
            time,
            kind,
            task: run.map(|i| self.runs[i].task.id),
            node,
            container,
            seq: self.seq,
        };
        self.seq += 1;
        self.heap.push(Reverse(ev));
    }

    fn record(&mut self, kind: EventKind, run: Option<usize>, node: Option<NodeId>, container: Option<ContainerId>, detail: String) {
        let rec = EventRecord {
            time: self.now,
            kind,
            task_id: run.map(|i| self.runs[i].task.id),
            node_id: node,
            container_id: container,
            detail,
        };
        trace!("{rec}");
        self.log.push(rec);
    }

    fn run(&mut self) -> Result<(), SimError> {
        let stop = self.cfg.horizon + self.cfg.drain;
        let index: HashMap<_, _> = self.runs.iter().enumerate().map(|(i, r)| (r.task.id, i)).collect();
        while let Some(Reverse(ev)) = self.heap.pop() {
            if ev.time > stop {
                break;
            }
            self.advance(ev.time);
            let run = ev.task.map(|id| index[&id]);
            match ev.kind {
                EventKind::TaskArrival => self.on_arrival(run.expect("arrival carries a task")),
                EventKind::AuctionRound => self.on_auction(run.expect("auction carries a task"))?,
                EventKind::ExecStart => self.on_exec_start(run.expect("start carries a task"), ev.node.expect("start carries a node"))?,
                EventKind::ExecFinish => self.on_exec_finish(run.expect("finish carries a task"), ev.node.expect("finish carries a node"))?,
                EventKind::ContainerRelease => self.on_container_release(ev.node.expect("release carries a node"), ev.container.expect("release carries a container"))?,
            }
            self.after_event();
        }
        Ok(())
    }

    /// Integrates busy compute up to `t`.
    fn advance(&mut self, t: f64) {
        let dt = t - self.now;
        if dt > 0.0 {
            for (i, node) in self.nodes.iter().enumerate() {
                self.cpu_area[i] += node.busy_compute() / node.capacity.cpu * dt;
            }
            self.now = t;
        }
    }

    fn after_event(&mut self) {
        let base = self.cfg.executor.base_memory_mb;
        let mut violated = false;
        for (i, node) in self.nodes.iter().enumerate() {
            self.peak_mem[i] = self.peak_mem[i].max(base + node.live_memory());
            violated |= !node.memory_conserved();
        }
        if violated {
            self.conservation_violations += 1;
        }
    }

    fn fifo_strategy(&self) -> bool {
        self.cfg.strategy != StrategyKind::Aucrac
    }

    fn on_arrival(&mut self, run: usize) {
        self.arrived += 1;
        self.record(EventKind::TaskArrival, Some(run), None, None, String::new());
        self.schedule(self.now, EventKind::AuctionRound, Some(run), None, None);
    }

    fn on_auction(&mut self, run: usize) -> Result<(), SimError> {
        let ctx = AssignContext {
            weights: &self.cfg.weights,
            margin: self.cfg.valuation_margin,
            win_rule: self.cfg.win_rule,
            mode: self.cfg.auction_mode,
            now: self.now,
        };
        let task = &self.runs[run].task;
        let Some(a) = assign(self.cfg.strategy, task, &self.nodes, &mut self.rng, &mut self.state, &ctx)? else {
            return self.requeue(run, None);
        };
        let ni = a.node.0 as usize;

        if self.fifo_strategy() {
            let est = mct_estimate(task, &self.nodes[ni], &self.state.loads[ni], self.now);
            let load = &mut self.state.loads[ni];
            load.available_at = est;
            load.outstanding += 1;
            let r = &mut self.runs[run];
            r.status = TaskStatus::Assigned;
            r.node = Some(a.node);
            r.outcome = Some(a.outcome);
            self.fifo[ni].push_back(run);
            self.record(EventKind::AuctionRound, Some(run), Some(a.node), None, "queued".into());
            self.try_start(ni);
            return Ok(());
        }

        let node = &mut self.nodes[ni];
        let decision = select_container(node, task);
        let (container, startup, detail) = match decision.action {
            ContainerAction::Reuse => {
                let id = decision.container_id.expect("reuse names a container");
                acquire_container(node, id)?;
                (id, 0.0, "reuse".to_string())
            }
            ContainerAction::Create => match create_container(node, task) {
                Ok(id) => {
                    let mem = node.container(id).map_or(0.0, |c| c.memory);
                    (id, node.executor.container_start_s, format!("create;mem+={mem}"))
                }
                Err(ContainerError::Insufficient { .. }) => return self.requeue(run, Some(a.node)),
                Err(e) => return Err(e.into()),
            },
            ContainerAction::Requeue => return self.requeue(run, Some(a.node)),
        };
        let r = &mut self.runs[run];
        r.status = TaskStatus::Assigned;
        r.node = Some(a.node);
        r.container = Some(container);
        r.startup = startup;
        r.exec_time = decision.predicted_time;
        r.outcome = Some(a.outcome);
        self.record(EventKind::AuctionRound, Some(run), Some(a.node), Some(container), detail);
        self.schedule(self.now, EventKind::ExecStart, Some(run), Some(a.node), Some(container));
        Ok(())
    }

    fn requeue(&mut self, run: usize, node: Option<NodeId>) -> Result<(), SimError> {
        let r = &mut self.runs[run];
        r.retries += 1;
        if r.retries > self.cfg.executor.max_requeue {
            r.status = TaskStatus::FailedToPlace;
            self.record(EventKind::AuctionRound, Some(run), node, None, "failed".into());
        } else {
            self.record(EventKind::AuctionRound, Some(run), node, None, "requeue".into());
            let at = self.now + self.cfg.executor.requeue_interval_s;
            self.schedule(at, EventKind::AuctionRound, Some(run), None, None);
        }
        Ok(())
    }

    /// Starts the head of a FIFO queue on an idle node.
    fn try_start(&mut self, ni: usize) {
        if self.running[ni].is_none() {
            if let Some(run) = self.fifo[ni].pop_front() {
                self.running[ni] = Some(run);
                self.schedule(self.now, EventKind::ExecStart, Some(run), Some(NodeId(ni as u32)), None);
            }
        }
    }

    fn on_exec_start(&mut self, run: usize, node_id: NodeId) -> Result<(), SimError> {
        let ni = node_id.0 as usize;
        if self.cfg.strategy.is_auction() && !deadline_eligibility(&self.nodes[ni], &self.runs[run].task) {
            self.zeta_violations += 1;
        }
        if let Some(id) = self.runs[run].container {
            let compute = self.nodes[ni].container(id).map_or(0.0, |c| c.compute);
            self.record(EventKind::ExecStart, Some(run), Some(node_id), Some(id), format!("cpu+={compute}"));
            let r = &self.runs[run];
            let at = self.now + r.startup + r.exec_time;
            self.schedule(at, EventKind::ExecFinish, Some(run), Some(node_id), Some(id));
            return Ok(());
        }

        // One fresh executor per task, sized to the whole node.
        let node = &mut self.nodes[ni];
        let (overhead, startup) = node.executor.overhead(node.executor_mode);
        let memory = self.runs[run].task.memory + overhead;
        let compute = node.capacity.cpu;
        match provision(node, memory, compute, overhead, startup) {
            Ok(id) => {
                let exec = execution_time(node, &self.runs[run].task);
                let r = &mut self.runs[run];
                r.container = Some(id);
                r.startup = startup;
                r.exec_time = exec;
                self.record(EventKind::ExecStart, Some(run), Some(node_id), Some(id), format!("create;mem+={memory};cpu+={compute}"));
                let at = self.now + startup + exec;
                self.schedule(at, EventKind::ExecFinish, Some(run), Some(node_id), Some(id));
            }
            Err(ContainerError::Insufficient { .. }) => {
                self.runs[run].status = TaskStatus::FailedToPlace;
                self.record(EventKind::ExecStart, Some(run), Some(node_id), None, "failed".into());
                self.running[ni] = None;
                self.state.loads[ni].outstanding -= 1;
                self.try_start(ni);
            }
            Err(e) => return Err(e.into()),
        }
        Ok(())
    }

    fn on_exec_finish(&mut self, run: usize, node_id: NodeId) -> Result<(), SimError> {
        let ni = node_id.0 as usize;
        let id = self.runs[run].container.expect("running task has a container");
        let r = &mut self.runs[run];
        r.finish = Some(self.now);
        let late = self.now - r.task.arrival_time > r.task.deadline;
        r.status = if late { TaskStatus::Missed } else { TaskStatus::Completed };
        let tag = if late { "miss" } else { "ok" };
        let compute = self.nodes[ni].container(id).map_or(0.0, |c| c.compute);
        self.record(EventKind::ExecFinish, Some(run), Some(node_id), Some(id), format!("{tag};cpu-={compute}"));

        if self.fifo_strategy() {
            let c = destroy_container(&mut self.nodes[ni], id)?;
            self.record(EventKind::ContainerRelease, Some(run), Some(node_id), Some(id), format!("destroy;mem-={}", c.memory));
            self.running[ni] = None;
            self.state.loads[ni].outstanding -= 1;
            self.try_start(ni);
        } else {
            release_container(&mut self.nodes[ni], id, self.now)?;
            let at = self.now + self.cfg.executor.idle_ttl_s;
            self.schedule(at, EventKind::ContainerRelease, None, Some(node_id), Some(id));
        }
        Ok(())
    }

    /// Destroys a container whose idle TTL ran out without reuse.
    fn on_container_release(&mut self, node_id: NodeId, id: ContainerId) -> Result<(), SimError> {
        let node = &mut self.nodes[node_id.0 as usize];
        let expired = node
            .container(id)
            .is_some_and(|c| c.state == crate::types::ContainerState::Free && self.now >= c.idle_since + node.executor.idle_ttl_s);
        if expired {
            let c = destroy_container(node, id)?;
            self.record(EventKind::ContainerRelease, None, Some(node_id), Some(id), format!("destroy;mem-={}", c.memory));
        }
        Ok(())
    }

    fn finish(self) -> RunReport {
        let n = self.nodes.len();
        let mut per_node = vec![0u64; n];
        let mut completion = Vec::new();
        let (mut completed, mut missed, mut failed, mut in_flight) = (0, 0, 0, 0);
        let mut outcomes = Vec::new();
        for r in &self.runs {
            match r.status {
                TaskStatus::Completed | TaskStatus::Missed => {
                    if r.status == TaskStatus::Completed {
                        completed += 1;
                    } else {
                        missed += 1;
                    }
                    if let Some(node) = r.node {
                        per_node[node.0 as usize] += 1;
                    }
                    completion.extend(r.completion_time());
                    outcomes.extend(r.outcome.clone());
                }
                TaskStatus::FailedToPlace => failed += 1,
                TaskStatus::Pending | TaskStatus::Assigned => {
                    // Tasks that never arrived before the stop time are not counted.
                    if r.task.arrival_time <= self.cfg.horizon + self.cfg.drain {
                        in_flight += 1;
                    }
                }
            }
        }
        let tasks: Vec<Task> = self.runs.iter().map(|r| r.task.clone()).collect();
        let (mean, median, p95) = completion_summary(&completion);
        let counts: Vec<f64> = per_node.iter().map(|&c| c as f64).collect();
        let end = self.now;
        let mean_cpu_frac = if end > 0.0 {
            self.cpu_area.iter().sum::<f64>() / (n as f64 * end)
        } else {
            0.0
        };
        let metrics = MetricsRecord {
            tasks_arrived: self.arrived,
            tasks_completed: completed,
            deadline_miss: missed,
            failed_to_place: failed,
            in_flight,
            mean_completion_s: mean,
            median_completion_s: median,
            p95_completion_s: p95,
            fairness_jain: jain_fairness(&counts),
            mn_profit: mn_profit(&outcomes, &tasks, self.cfg.unit_price),
            per_node_tasks: per_node,
            peak_mem_mb: self.peak_mem.clone(),
            mean_cpu_frac,
        };
        debug!(
            "run done: strategy={} seed={} arrived={} completed={} missed={} failed={} in_flight={}",
            self.cfg.strategy, self.cfg.seed, metrics.tasks_arrived, completed, missed, failed, in_flight
        );
        RunReport {
            metrics,
            log: self.log,
            tasks: self.runs,
            nodes: self.nodes,
            zeta_violations: self.zeta_violations,
            conservation_violations: self.conservation_violations,
            end_time: end,
        }
    }
}
