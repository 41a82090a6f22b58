//! Task-to-node assignment for every simulated strategy.

use rand::Rng;

use crate::auction::{allocate_tasks_literal, optimal_bid_truthful, run_sealed_auction, AuctionConfig, AuctionError, AuctionMode, WinRule};
use crate::config::StrategyKind;
use crate::containers::select_container;
use crate::costmodel::{deadline_eligibility, execution_time, valuation};
use crate::rng::SimRng;
use crate::types::{AuctionOutcome, Bid, NodeId, ResourceWeights, Task, WorkerNode};

/// Queue view of one node, maintained by the engine for the FIFO strategies.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct NodeLoad {
    /// Time the node's FIFO queue is expected to drain.
    pub available_at: f64,
    /// Tasks queued or running on the node.
    pub outstanding: usize,
}

/// Mutable strategy state carried across assignments within one run.
#[derive(Clone, Debug, PartialEq)]
pub struct StrategyState {
    pub rr_next: usize,
    pub loads: Vec<NodeLoad>,
    /// Literal-mode bid state, indexed by node.
    pub literal_bids: Vec<f64>,
}

impl StrategyState {
    pub fn new(num_nodes: usize) -> Self {
        Self {
            rr_next: 0,
            loads: vec![NodeLoad::default(); num_nodes],
            literal_bids: vec![0.0; num_nodes],
        }
    }
}

/// Run-wide parameters the strategies read.
#[derive(Clone, Copy, Debug)]
pub struct AssignContext<'a> {
    pub weights: &'a ResourceWeights,
    pub margin: f64,
    pub win_rule: WinRule,
    pub mode: AuctionMode,
    pub now: f64,
}

/// A chosen node and the price the manager pays it.
#[derive(Clone, Debug, PartialEq)]
pub struct Assignment {
    pub node: NodeId,
    pub payment: f64,
    pub outcome: AuctionOutcome,
}

/// Picks a node for `task`, or `None` when the strategy finds no taker.
///
/// `nodes` must be indexed by node id.
pub fn assign(
    strategy: StrategyKind,
    task: &Task,
    nodes: &[WorkerNode],
    rng: &mut SimRng,
    state: &mut StrategyState,
    ctx: &AssignContext<'_>,
) -> Result<Option<Assignment>, AuctionError> {
    if nodes.is_empty() {
        return Err(AuctionError::NoWorkers);
    }
    let pick = match strategy {
        StrategyKind::Aucrac => return auction_assign(task, nodes, state, ctx, true),
        StrategyKind::AuctionBasic => return auction_assign(task, nodes, state, ctx, false),
        StrategyKind::Random => rng.random_range(0..nodes.len()),
        StrategyKind::RoundRobin => {
            let i = state.rr_next % nodes.len();
            state.rr_next = (i + 1) % nodes.len();
            i
        }
        StrategyKind::Greedy => greedy_pick(nodes, &state.loads),
        StrategyKind::Mct => mct_pick(task, nodes, &state.loads, ctx.now),
    };
    let node = &nodes[pick];
    // Non-auction strategies still pay the node its valuation when it can price the task.
    let payment = valuation(node, task, ctx.weights, ctx.margin).unwrap_or(0.0);
    Ok(Some(Assignment {
        node: node.id,
        payment,
        outcome: AuctionOutcome {
            task_id: task.id,
            winner: Some(node.id),
            payment,
            losing_bids: Vec::new(),
        },
    }))
}

/// Node with the most unreserved compute: an idle node offers all of it, a
/// node with queued work offers none. Ties go to fewer outstanding tasks,
/// then the lowest id.
fn greedy_pick(nodes: &[WorkerNode], loads: &[NodeLoad]) -> usize {
    let free = |i: usize| if loads[i].outstanding == 0 { nodes[i].capacity.cpu } else { 0.0 };
    (0..nodes.len())
        .min_by(|&a, &b| {
            free(b)
                .total_cmp(&free(a))
                .then(loads[a].outstanding.cmp(&loads[b].outstanding))
                .then(a.cmp(&b))
        })
        .expect("non-empty node list")
}

/// Node with the earliest estimated completion: queue drain time, executor
/// cold start, then execution at full node speed.
pub fn mct_estimate(task: &Task, node: &WorkerNode, load: &NodeLoad, now: f64) -> f64 {
    let (_, startup) = node.executor.overhead(node.executor_mode);
    now.max(load.available_at) + startup + execution_time(node, task)
}

fn mct_pick(task: &Task, nodes: &[WorkerNode], loads: &[NodeLoad], now: f64) -> usize {
    (0..nodes.len())
        .min_by(|&a, &b| {
            mct_estimate(task, &nodes[a], &loads[a], now)
                .total_cmp(&mct_estimate(task, &nodes[b], &loads[b], now))
                .then(a.cmp(&b))
        })
        .expect("non-empty node list")
}

/// Collects sealed bids and runs the auction. Nodes that cannot price the
/// task stay out; nodes that miss the deadline bid but are filtered by the
/// auction. With `container_aware`, a node also stays out when it has no
/// container able to take the task right now, and bids its optimized amount
/// rather than its raw valuation.
fn auction_assign(
    task: &Task,
    nodes: &[WorkerNode],
    state: &mut StrategyState,
    ctx: &AssignContext<'_>,
    container_aware: bool,
) -> Result<Option<Assignment>, AuctionError> {
    let mut bids = Vec::with_capacity(nodes.len());
    for node in nodes {
        let Ok(value) = valuation(node, task, ctx.weights, ctx.margin) else {
            continue;
        };
        if container_aware && !select_container(node, task).is_placeable() {
            continue;
        }
        let amount = if container_aware { optimal_bid_truthful(value) } else { value };
        bids.push(Bid::new(node.id, task.id, amount, ctx.now, deadline_eligibility(node, task)));
    }
    if bids.is_empty() {
        return Ok(None);
    }

    let outcome = match ctx.mode {
        AuctionMode::Repaired => {
            let cfg = AuctionConfig::new(ctx.win_rule, ctx.mode, nodes.len().max(2))?;
            run_sealed_auction(task, &bids, &cfg)?
        }
        AuctionMode::Literal => literal_round(task, bids, state)?,
    };
    Ok(outcome.winner.map(|node| Assignment {
        node,
        payment: outcome.payment,
        outcome: outcome.clone(),
    }))
}

/// One task through the literal allocation routine, keeping each node's bid
/// state between tasks. The task is valued at the cheapest eligible bid.
fn literal_round(task: &Task, bids: Vec<Bid>, state: &mut StrategyState) -> Result<AuctionOutcome, AuctionError> {
    let (eligible, ineligible): (Vec<Bid>, Vec<Bid>) = bids.into_iter().partition(|b| b.eligible);
    if eligible.is_empty() {
        return Ok(AuctionOutcome::unsold(task.id, ineligible));
    }
    let values: Vec<f64> = eligible.iter().map(|b| b.amount).collect();
    let mut valued = task.clone();
    valued.value = Some(values.iter().copied().fold(f64::INFINITY, f64::min));

    // Prior bid state is passed in the routine's sorted order.
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let prior: Vec<f64> = order
        .iter()
        .map(|&i| state.literal_bids[eligible[i].node_id.0 as usize])
        .collect();

    let alloc = allocate_tasks_literal(&values, std::slice::from_ref(&valued), Some(&prior))?;
    for (pos, &i) in alloc.order.iter().enumerate() {
        state.literal_bids[eligible[i].node_id.0 as usize] = alloc.bids[pos];
    }
    let (_, pos) = alloc.assignments[0];
    let w = alloc.worker_of(pos);
    let winner = eligible[w].clone();
    let losing_bids = eligible
        .into_iter()
        .enumerate()
        .filter(|(i, _)| *i != w)
        .map(|(_, b)| b)
        .chain(ineligible)
        .collect();
    Ok(AuctionOutcome {
        task_id: task.id,
        winner: Some(winner.node_id),
        payment: winner.amount,
        losing_bids,
    })
}
