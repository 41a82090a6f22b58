//! Manager-side mechanism: winning probability, expected utility, bid
//! optimization, sealed-bid winner determination with first-price payment,
//! and the sort-and-scan allocation routine in its literal form.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{AuctionOutcome, Bid, BidDistribution, Task, TaskId};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AuctionError {
    #[error("need at least 2 bidders, got {0}")]
    TooFewBidders(usize),
    #[error("empirical bid distribution needs at least 2 samples, got {0}")]
    TooFewSamples(usize),
    #[error("empty bid search range [{lower}, {upper}]")]
    EmptyRange { lower: f64, upper: f64 },
    #[error("bid search grid needs at least 100 points, got {0}")]
    GridTooSmall(usize),
    #[error("no bids submitted for task {0}")]
    NoBids(TaskId),
    #[error("task {0} has no value")]
    MissingTaskValue(TaskId),
    #[error("literal allocation needs at least one worker value")]
    NoWorkers,
    #[error("prior bids cover {got} workers, expected {expected}")]
    PriorBidsLength { got: usize, expected: usize },
}

/// Which bid wins a sealed-bid auction.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum WinRule {
    Highest,
    /// Procurement semantics: the cheapest offer wins.
    #[default]
    Lowest,
}

/// Winner determination used by the simulator.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AuctionMode {
    /// The sort-and-scan routine taken literally, degenerate behavior included.
    Literal,
    /// One-shot first-price auction among deadline-eligible bids.
    #[default]
    Repaired,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    EarliestSubmit,
    LowestNodeId,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AuctionConfig {
    pub win_rule: WinRule,
    pub mode: AuctionMode,
    /// Applied in order until bids differ.
    pub tie_break: Vec<TieBreak>,
    /// Number of bidders assumed by the probability model.
    pub n: usize,
}

impl AuctionConfig {
    pub fn new(win_rule: WinRule, mode: AuctionMode, n: usize) -> Result<Self, AuctionError> {
        if n < 2 {
            return Err(AuctionError::TooFewBidders(n));
        }
        Ok(Self {
            win_rule,
            mode,
            tie_break: vec![TieBreak::EarliestSubmit, TieBreak::LowestNodeId],
            n,
        })
    }
}

fn check_inputs(dist: &BidDistribution, n: usize) -> Result<(), AuctionError> {
    if n < 2 {
        return Err(AuctionError::TooFewBidders(n));
    }
    if let BidDistribution::Empirical { samples } = dist {
        if samples.len() < 2 {
            return Err(AuctionError::TooFewSamples(samples.len()));
        }
    }
    Ok(())
}

/// Probability that `bid` beats `n - 1` i.i.d. competitors drawn from `dist`:
/// `F(b)^(n-1)` when the highest bid wins, `(1 - F(b))^(n-1)` when the lowest does.
pub fn win_probability(bid: f64, dist: &BidDistribution, n: usize, rule: WinRule) -> Result<f64, AuctionError> {
    check_inputs(dist, n)?;
    let f = dist.cdf(bid);
    let base = match rule {
        WinRule::Highest => f,
        WinRule::Lowest => 1.0 - f,
    };
    Ok(base.powi(n as i32 - 1).clamp(0.0, 1.0))
}

/// `P_win(b) * (V - b) * zeta`.
pub fn expected_utility(
    bid: f64,
    value: f64,
    dist: &BidDistribution,
    n: usize,
    eligible: bool,
    rule: WinRule,
) -> Result<f64, AuctionError> {
    if !eligible {
        check_inputs(dist, n)?;
        return Ok(0.0);
    }
    Ok(win_probability(bid, dist, n, rule)? * (value - bid))
}

/// Truthful bidding: bid the value itself.
pub fn optimal_bid_truthful(value: f64) -> f64 {
    value
}

/// Grid maximizer of [`expected_utility`] over `[dist.lower, min(value, dist.upper)]`
/// using `grid` evenly spaced points; ties go to the lowest bid.
pub fn optimal_bid_numeric(value: f64, dist: &BidDistribution, n: usize, rule: WinRule, grid: usize) -> Result<f64, AuctionError> {
    check_inputs(dist, n)?;
    if grid < 100 {
        return Err(AuctionError::GridTooSmall(grid));
    }
    let lower = dist.lower();
    let upper = value.min(dist.upper());
    if !(upper >= lower) {
        return Err(AuctionError::EmptyRange { lower, upper });
    }
    let step = (upper - lower) / (grid - 1) as f64;
    let mut best = (lower, f64::NEG_INFINITY);
    for k in 0..grid {
        let b = if k == grid - 1 { upper } else { lower + k as f64 * step };
        let u = expected_utility(b, value, dist, n, true, rule)?;
        if u > best.1 {
            best = (b, u);
        }
    }
    Ok(best.0)
}

/// `(n - 1) V / n`: the utility maximizer for highest-wins with competitors
/// uniform on `[0, 1]`.
pub fn optimal_bid_uniform_highest(value: f64, n: usize) -> f64 {
    (n as f64 - 1.0) * value / n as f64
}

fn compare_bids(a: &Bid, b: &Bid, cfg: &AuctionConfig) -> Ordering {
    let by_amount = match cfg.win_rule {
        WinRule::Lowest => a.amount.total_cmp(&b.amount),
        WinRule::Highest => b.amount.total_cmp(&a.amount),
    };
    cfg.tie_break.iter().fold(by_amount, |ord, rule| {
        ord.then_with(|| match rule {
            TieBreak::EarliestSubmit => a.submit_time.total_cmp(&b.submit_time),
            TieBreak::LowestNodeId => a.node_id.cmp(&b.node_id),
        })
    })
}

/// First-price sealed-bid auction among deadline-eligible bids. Ineligible
/// bids never win; with no eligible bid the task stays unsold.
pub fn run_sealed_auction(task: &Task, bids: &[Bid], cfg: &AuctionConfig) -> Result<AuctionOutcome, AuctionError> {
    if bids.is_empty() {
        return Err(AuctionError::NoBids(task.id));
    }
    let winner = bids
        .iter()
        .enumerate()
        .filter(|(_, b)| b.eligible)
        .min_by(|(_, a), (_, b)| compare_bids(a, b, cfg))
        .map(|(i, _)| i);
    let Some(w) = winner else {
        return Ok(AuctionOutcome::unsold(task.id, bids.to_vec()));
    };
    let losing_bids = bids
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != w)
        .map(|(_, b)| b.clone())
        .collect();
    Ok(AuctionOutcome {
        task_id: task.id,
        winner: Some(bids[w].node_id),
        payment: bids[w].amount,
        losing_bids,
    })
}

/// Trace of the literal allocation routine.
#[derive(Clone, Debug, PartialEq)]
pub struct LiteralAllocation {
    /// Input worker indices in ascending order of value; position `k` in the
    /// sorted list is worker `order[k]`.
    pub order: Vec<usize>,
    /// Per task, the sorted position it was assigned to.
    pub assignments: Vec<(TaskId, usize)>,
    /// Bid state per sorted position after all tasks.
    pub bids: Vec<f64>,
}

impl LiteralAllocation {
    /// Input worker index a task was assigned to.
    pub fn worker_of(&self, position: usize) -> usize {
        self.order[position]
    }
}

/// Sort workers ascending by value, start every bid at zero (or at
/// `prior_bids`, given in sorted order), then for each task pick the first
/// worker whose bid reaches the task value, falling back to the last worker,
/// and raise that worker's bid to at least the task value.
pub fn allocate_tasks_literal(values: &[f64], tasks: &[Task], prior_bids: Option<&[f64]>) -> Result<LiteralAllocation, AuctionError> {
    if values.is_empty() {
        return Err(AuctionError::NoWorkers);
    }
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));

    let mut bids = match prior_bids {
        Some(p) if p.len() != values.len() => {
            return Err(AuctionError::PriorBidsLength {
                got: p.len(),
                expected: values.len(),
            })
        }
        Some(p) => p.to_vec(),
        None => vec![0.0; values.len()],
    };

    let mut assignments = Vec::with_capacity(tasks.len());
    for task in tasks {
        let task_value = task.value.ok_or(AuctionError::MissingTaskValue(task.id))?;
        let index = bids.iter().position(|&b| b >= task_value).unwrap_or(bids.len() - 1);
        assignments.push((task.id, index));
        bids[index] = bids[index].max(task_value);
    }
    Ok(LiteralAllocation { order, assignments, bids })
}

/// Manager revenue for one task: `data_in * unit_price`.
pub fn mn_revenue(task: &Task, unit_price: f64) -> f64 {
    task.data_in * unit_price
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::NodeId;
    use approx::assert_relative_eq;

    fn u01() -> BidDistribution {
        BidDistribution::uniform(0.0, 1.0).unwrap()
    }

    fn valued(id: u64, value: f64) -> Task {
        let mut t = Task::with_demand(id, 1.0, 1.0, 1.0);
        t.value = Some(value);
        t
    }

    fn bid(node: u32, amount: f64, t: f64, eligible: bool) -> Bid {
        Bid::new(NodeId(node), TaskId(0), amount, t, eligible)
    }

    #[test]
    fn win_probability_cases() {
        assert_relative_eq!(win_probability(0.5, &u01(), 2, WinRule::Highest).unwrap(), 0.5);
        assert_relative_eq!(win_probability(0.5, &u01(), 3, WinRule::Highest).unwrap(), 0.25);
        assert_relative_eq!(win_probability(0.5, &u01(), 2, WinRule::Lowest).unwrap(), 0.5);
        assert_relative_eq!(win_probability(0.2, &u01(), 3, WinRule::Lowest).unwrap(), 0.64, epsilon = 1e-12);
    }

    #[test]
    fn win_probability_input_errors() {
        assert_eq!(win_probability(0.5, &u01(), 1, WinRule::Highest), Err(AuctionError::TooFewBidders(1)));
        let degenerate = BidDistribution::Empirical { samples: vec![1.0] };
        assert_eq!(
            win_probability(0.5, &degenerate, 3, WinRule::Highest),
            Err(AuctionError::TooFewSamples(1))
        );
    }

    #[test]
    fn expected_utility_cases() {
        assert_eq!(expected_utility(0.7, 0.7, &u01(), 4, true, WinRule::Highest).unwrap(), 0.0);
        assert_eq!(expected_utility(0.1, 0.9, &u01(), 4, false, WinRule::Highest).unwrap(), 0.0);
        assert_relative_eq!(expected_utility(0.5, 1.0, &u01(), 2, true, WinRule::Highest).unwrap(), 0.25);
    }

    #[test]
    fn truthful_bid_is_identity() {
        assert_eq!(optimal_bid_truthful(0.8), 0.8);
        assert_eq!(optimal_bid_truthful(0.0), 0.0);
        assert_eq!(optimal_bid_truthful(100.0), 100.0);
    }

    #[test]
    fn numeric_bid_matches_calculus() {
        let step = 1.0 / 1000.0;
        for (v, n, expected) in [(1.0, 2, 0.5), (1.0, 4, 0.75), (0.8, 2, 0.4)] {
            let b = optimal_bid_numeric(v, &u01(), n, WinRule::Highest, 1001).unwrap();
            assert!((b - expected).abs() <= step, "v={v} n={n}: {b}");
        }
    }

    #[test]
    fn numeric_bid_input_errors() {
        assert_eq!(optimal_bid_numeric(1.0, &u01(), 2, WinRule::Highest, 50), Err(AuctionError::GridTooSmall(50)));
        let d = BidDistribution::uniform(2.0, 3.0).unwrap();
        assert!(matches!(
            optimal_bid_numeric(1.0, &d, 2, WinRule::Highest, 100),
            Err(AuctionError::EmptyRange { .. })
        ));
    }

    #[test]
    fn lowest_wins_procurement() {
        let cfg = AuctionConfig::new(WinRule::Lowest, AuctionMode::Repaired, 3).unwrap();
        let bids = [bid(0, 5.0, 0.0, true), bid(1, 3.0, 0.0, true), bid(2, 7.0, 0.0, true)];
        let out = run_sealed_auction(&valued(0, 1.0), &bids, &cfg).unwrap();
        assert_eq!(out.winner, Some(NodeId(1)));
        assert_eq!(out.payment, 3.0);
        assert_eq!(out.losing_bids.len(), 2);
    }

    #[test]
    fn highest_wins_rule() {
        let cfg = AuctionConfig::new(WinRule::Highest, AuctionMode::Repaired, 3).unwrap();
        let bids = [bid(0, 5.0, 0.0, true), bid(1, 3.0, 0.0, true), bid(2, 7.0, 0.0, false)];
        let out = run_sealed_auction(&valued(0, 1.0), &bids, &cfg).unwrap();
        assert_eq!(out.winner, Some(NodeId(0)));
        assert_eq!(out.payment, 5.0);
    }

    #[test]
    fn all_ineligible_leaves_task_unsold() {
        let cfg = AuctionConfig::new(WinRule::Lowest, AuctionMode::Repaired, 2).unwrap();
        let bids = [bid(0, 1.0, 0.0, false), bid(1, 2.0, 0.0, false)];
        let out = run_sealed_auction(&valued(0, 1.0), &bids, &cfg).unwrap();
        assert_eq!(out.winner, None);
        assert_eq!(out.payment, 0.0);
        assert_eq!(out.losing_bids.len(), 2);
    }

    #[test]
    fn ties_go_to_earliest_then_lowest_id() {
        let cfg = AuctionConfig::new(WinRule::Lowest, AuctionMode::Repaired, 2).unwrap();
        let out = run_sealed_auction(&valued(0, 1.0), &[bid(1, 3.0, 2.0, true), bid(0, 3.0, 1.0, true)], &cfg).unwrap();
        assert_eq!(out.winner, Some(NodeId(0)));
        let out = run_sealed_auction(&valued(0, 1.0), &[bid(2, 3.0, 1.0, true), bid(1, 3.0, 1.0, true)], &cfg).unwrap();
        assert_eq!(out.winner, Some(NodeId(1)));
    }

    #[test]
    fn no_bids_is_an_error() {
        let cfg = AuctionConfig::new(WinRule::Lowest, AuctionMode::Repaired, 2).unwrap();
        assert!(run_sealed_auction(&valued(0, 1.0), &[], &cfg).is_err());
        assert!(AuctionConfig::new(WinRule::Lowest, AuctionMode::Repaired, 1).is_err());
    }

    #[test]
    fn literal_funnels_everything_to_last_worker() {
        let alloc = allocate_tasks_literal(&[3.0, 5.0, 7.0], &[valued(0, 4.0), valued(1, 6.0)], None).unwrap();
        assert_eq!(alloc.assignments, vec![(TaskId(0), 2), (TaskId(1), 2)]);
        assert_eq!(alloc.bids, vec![0.0, 0.0, 6.0]);
    }

    #[test]
    fn literal_single_worker() {
        let alloc = allocate_tasks_literal(&[1.0], &[valued(0, 9.0)], None).unwrap();
        assert_eq!(alloc.assignments, vec![(TaskId(0), 0)]);
        assert_eq!(alloc.bids, vec![9.0]);
    }

    #[test]
    fn literal_continuation_state_hits_lookup_branch() {
        let alloc = allocate_tasks_literal(&[1.0, 2.0, 3.0], &[valued(0, 2.0)], Some(&[3.0, 0.0, 0.0])).unwrap();
        assert_eq!(alloc.assignments, vec![(TaskId(0), 0)]);
        assert_eq!(alloc.bids, vec![3.0, 0.0, 0.0]);
    }

    #[test]
    fn literal_maps_sorted_positions_back() {
        let alloc = allocate_tasks_literal(&[7.0, 3.0, 5.0], &[valued(0, 4.0)], None).unwrap();
        assert_eq!(alloc.order, vec![1, 2, 0]);
        assert_eq!(alloc.worker_of(alloc.assignments[0].1), 0);
    }

    #[test]
    fn literal_edge_inputs() {
        assert!(allocate_tasks_literal(&[1.0], &[], None).unwrap().assignments.is_empty());
        assert_eq!(allocate_tasks_literal(&[], &[valued(0, 1.0)], None), Err(AuctionError::NoWorkers));
        let unvalued = Task::with_demand(5, 1.0, 1.0, 1.0);
        assert_eq!(
            allocate_tasks_literal(&[1.0], &[unvalued], None),
            Err(AuctionError::MissingTaskValue(TaskId(5)))
        );
    }

    #[test]
    fn revenue_is_data_times_price() {
        let mut t = Task::with_demand(0, 1.0, 1.0, 1.0);
        t.data_in = 10.0;
        assert_eq!(mn_revenue(&t, 2.0), 20.0);
        t.data_in = 7.5;
        assert_relative_eq!(mn_revenue(&t, 0.4), 3.0, epsilon = 1e-12);
        t.data_in = 0.0;
        assert_eq!(mn_revenue(&t, 2.0), 0.0);
    }
}
