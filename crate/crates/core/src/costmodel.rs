//! A worker's private assessment of a task: weighted resource function,
//! execution cost relative to node capacity, execution time, deadline
//! eligibility and valuation.

use std::ops::{Add, Mul};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::types::{Capacity, ResourceWeights, Task, WorkerNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum CostError {
    #[error("negative {field} demand: {value}")]
    NegativeDemand { field: &'static str, value: f64 },
    /// Demand is not strictly below node capacity for one resource.
    #[error("infeasible: {resource} ratio {ratio} is not below 1")]
    Infeasible { resource: &'static str, ratio: f64 },
    #[error("margin must be non-negative, got {0}")]
    NegativeMargin(f64),
}

/// Resource demand of a task: CPU cycles, memory (MB) and power (W).
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ResourceDemand {
    pub cycles: f64,
    pub memory: f64,
    pub power: f64,
}

impl ResourceDemand {
    pub const fn new(cycles: f64, memory: f64, power: f64) -> Self {
        Self { cycles, memory, power }
    }

    fn check(&self) -> Result<(), CostError> {
        for (field, value) in [("cycles", self.cycles), ("memory", self.memory), ("power", self.power)] {
            if !(value >= 0.0) {
                return Err(CostError::NegativeDemand { field, value });
            }
        }
        Ok(())
    }
}

impl From<&Task> for ResourceDemand {
    fn from(t: &Task) -> Self {
        Self::new(t.cycles, t.memory, t.power)
    }
}

impl Add for ResourceDemand {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self::new(self.cycles + o.cycles, self.memory + o.memory, self.power + o.power)
    }
}

impl Mul<ResourceDemand> for f64 {
    type Output = ResourceDemand;
    fn mul(self, d: ResourceDemand) -> ResourceDemand {
        ResourceDemand::new(self * d.cycles, self * d.memory, self * d.power)
    }
}

/// `delta * (lambda1 e + alpha1 lambda2 m + alpha2 lambda3 p)`.
pub fn resource_function(demand: ResourceDemand, w: &ResourceWeights) -> Result<f64, CostError> {
    demand.check()?;
    Ok(w.delta * (w.lambda1 * demand.cycles + w.alpha1 * w.lambda2 * demand.memory + w.alpha2 * w.lambda3 * demand.power))
}

/// Demand-to-capacity ratios `(e_j/e_i, m_j/m_i, p_j/p_i)`, each required to be below 1.
pub fn capacity_ratios(capacity: &Capacity, demand: ResourceDemand) -> Result<[f64; 3], CostError> {
    demand.check()?;
    let ratios = [
        demand.cycles / capacity.cpu,
        demand.memory / capacity.memory,
        demand.power / capacity.power,
    ];
    for (resource, ratio) in ["cpu", "memory", "power"].into_iter().zip(ratios) {
        if !(ratio < 1.0) {
            return Err(CostError::Infeasible { resource, ratio });
        }
    }
    Ok(ratios)
}

/// Cost of serving `demand` on a node with the given capacity and unit cost:
/// the resource function applied to the capacity ratios, scaled by the unit cost.
pub fn ratio_cost(unit_cost: f64, capacity: &Capacity, demand: ResourceDemand, w: &ResourceWeights) -> Result<f64, CostError> {
    let [re, rm, rp] = capacity_ratios(capacity, demand)?;
    Ok(unit_cost * resource_function(ResourceDemand::new(re, rm, rp), w)?)
}

pub fn execution_cost(node: &WorkerNode, task: &Task, w: &ResourceWeights) -> Result<f64, CostError> {
    ratio_cost(node.unit_cost, &node.capacity, task.into(), w)
}

/// Required execution time `phi_i * e_j / e_i`, seconds.
pub fn execution_time(node: &WorkerNode, task: &Task) -> f64 {
    node.time_const * task.cycles / node.capacity.cpu
}

/// Eligibility to bid: the required execution time is strictly below the deadline.
pub fn deadline_eligibility(node: &WorkerNode, task: &Task) -> bool {
    task.deadline - execution_time(node, task) > 0.0
}

/// `(1 + margin) * execution_cost`.
pub fn valuation(node: &WorkerNode, task: &Task, w: &ResourceWeights, margin: f64) -> Result<f64, CostError> {
    if !(margin >= 0.0) {
        return Err(CostError::NegativeMargin(margin));
    }
    Ok((1.0 + margin) * execution_cost(node, task, w)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ExecutorProfile;
    use crate::types::{ExecutorMode, NodeId};
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    fn node(cpu: f64, memory: f64, power: f64, unit_cost: f64, time_const: f64) -> WorkerNode {
        WorkerNode::new(
            NodeId(0),
            Capacity { cpu, memory, power },
            unit_cost,
            time_const,
            ExecutorMode::Container,
            ExecutorProfile::default(),
        )
        .unwrap()
    }

    fn task(cycles: f64, memory: f64, power: f64) -> Task {
        Task::with_demand(0, cycles, memory, power)
    }

    #[test]
    fn resource_function_equal_weights() {
        let w = ResourceWeights::default();
        assert_relative_eq!(resource_function(ResourceDemand::new(3.0, 3.0, 3.0), &w).unwrap(), 3.0, epsilon = 1e-12);
        assert_eq!(resource_function(ResourceDemand::default(), &w).unwrap(), 0.0);
    }

    #[test]
    fn resource_function_scaled() {
        let w = ResourceWeights::equal(0.5, 0.8, 2.0).unwrap();
        // 2 * (1 + 1 + 0.8)
        assert_relative_eq!(resource_function(ResourceDemand::new(3.0, 6.0, 3.0), &w).unwrap(), 5.6, epsilon = 1e-12);
    }

    #[test]
    fn resource_function_rejects_negative_demand() {
        let err = resource_function(ResourceDemand::new(1.0, -1.0, 0.0), &ResourceWeights::default()).unwrap_err();
        assert!(matches!(err, CostError::NegativeDemand { field: "memory", .. }));
    }

    #[test]
    fn execution_cost_half_ratios() {
        let n = node(2.0, 4.0, 6.0, 1.0, 1.0);
        let c = execution_cost(&n, &task(1.0, 2.0, 3.0), &ResourceWeights::default()).unwrap();
        assert_relative_eq!(c, 0.5, epsilon = 1e-12);
        assert_eq!(execution_cost(&n, &task(0.0, 0.0, 0.0), &ResourceWeights::default()).unwrap(), 0.0);
    }

    #[test]
    fn execution_cost_at_example_point() {
        let n = node(2.0, 3.0, 4.0, 1.0, 10.0);
        let w = ResourceWeights::equal(0.5, 0.8, 1.0).unwrap();
        let c = execution_cost(&n, &task(4.0 / 3.0, 2.0 / 3.0, 8.0 / 3.0), &w).unwrap();
        let expected = (1.0 / 3.0) * (2.0 / 3.0) + 0.5 * (1.0 / 3.0) * (2.0 / 9.0) + 0.8 * (1.0 / 3.0) * (2.0 / 3.0);
        assert_relative_eq!(c, expected, epsilon = 1e-12);
        assert!((c - 0.4370).abs() < 1e-4);
    }

    #[test]
    fn ratio_at_or_above_one_is_infeasible() {
        let n = node(2.0, 3.0, 4.0, 1.0, 1.0);
        let w = ResourceWeights::default();
        assert!(matches!(
            execution_cost(&n, &task(2.0, 1.0, 1.0), &w),
            Err(CostError::Infeasible { resource: "cpu", .. })
        ));
        assert!(matches!(
            execution_cost(&n, &task(1.0, 1.0, 5.0), &w),
            Err(CostError::Infeasible { resource: "power", .. })
        ));
    }

    #[test]
    fn execution_time_cases() {
        let n = node(2.0, 1.0, 1.0, 1.0, 10.0);
        assert_relative_eq!(execution_time(&n, &task(1.0, 0.0, 0.0)), 5.0);
        assert_eq!(execution_time(&n, &task(0.0, 0.0, 0.0)), 0.0);
        assert_relative_eq!(execution_time(&n, &task(4.0 / 3.0, 0.0, 0.0)), 20.0 / 3.0, epsilon = 1e-12);
    }

    #[test]
    fn eligibility_is_strict() {
        // q = 10 * 1 / 2 = 5
        let n = node(2.0, 1.0, 1.0, 1.0, 10.0);
        let mut t = task(1.0, 0.0, 0.0);
        t.deadline = 10.0;
        assert!(deadline_eligibility(&n, &t));
        t.deadline = 5.0;
        assert!(!deadline_eligibility(&n, &t));
        t.deadline = 4.0;
        assert!(!deadline_eligibility(&n, &t));
    }

    #[test]
    fn valuation_applies_margin() {
        let n = node(2.0, 4.0, 6.0, 1.0, 1.0);
        let w = ResourceWeights::default();
        let t = task(1.0, 2.0, 3.0);
        assert_relative_eq!(valuation(&n, &t, &w, 0.0).unwrap(), 0.5, epsilon = 1e-12);
        assert_relative_eq!(valuation(&n, &t, &w, 0.2).unwrap(), 0.6, epsilon = 1e-12);
        assert_eq!(valuation(&n, &task(0.0, 0.0, 0.0), &w, 0.7).unwrap(), 0.0);
        assert!(valuation(&n, &task(3.0, 0.0, 0.0), &w, 0.1).is_err());
        assert!(valuation(&n, &t, &w, -0.1).is_err());
    }

    fn demand() -> impl Strategy<Value = ResourceDemand> {
        (0.0..1e3f64, 0.0..1e3f64, 0.0..1e3f64).prop_map(|(e, m, p)| ResourceDemand::new(e, m, p))
    }

    fn weights() -> impl Strategy<Value = ResourceWeights> {
        (0.05..0.9f64, 0.05..0.9f64, 0.1..3.0f64, 0.1..3.0f64, 0.1..5.0f64).prop_filter_map(
            "lambda3 in (0,1)",
            |(l1, frac, a1, a2, d)| {
                let l2 = (1.0 - l1) * frac;
                let l3 = 1.0 - l1 - l2;
                ResourceWeights::new(l1, l2, l3, a1, a2, d).ok()
            },
        )
    }

    proptest! {
        #[test]
        fn resource_function_is_homogeneous(d in demand(), w in weights(), a in 0.0..50.0f64) {
            let lhs = resource_function(a * d, &w).unwrap();
            let rhs = a * resource_function(d, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn resource_function_is_additive(d1 in demand(), d2 in demand(), w in weights()) {
            let lhs = resource_function(d1 + d2, &w).unwrap();
            let rhs = resource_function(d1, &w).unwrap() + resource_function(d2, &w).unwrap();
            prop_assert!((lhs - rhs).abs() <= 1e-9 * (1.0 + rhs.abs()));
        }

        #[test]
        fn cost_monotone_in_demand_and_capacity(
            cap in (10.0..100.0f64, 10.0..100.0f64, 10.0..100.0f64),
            dem in (0.0..5.0f64, 0.0..5.0f64, 0.0..5.0f64),
            bump in 0.0..4.0f64,
            axis in 0usize..3,
            w in weights(),
        ) {
            let base = node(cap.0, cap.1, cap.2, 1.3, 1.0);
            let t = task(dem.0, dem.1, dem.2);
            let c0 = execution_cost(&base, &t, &w).unwrap();

            let mut bigger = t.clone();
            match axis { 0 => bigger.cycles += bump, 1 => bigger.memory += bump, _ => bigger.power += bump }
            prop_assert!(execution_cost(&base, &bigger, &w).unwrap() >= c0);

            let mut roomier = base.clone();
            match axis { 0 => roomier.capacity.cpu += bump, 1 => roomier.capacity.memory += bump, _ => roomier.capacity.power += bump }
            prop_assert!(execution_cost(&roomier, &t, &w).unwrap() <= c0);
        }

        #[test]
        fn cost_is_linear_in_unit_cost(c in 0.01..10.0f64, k in 0.0..10.0f64) {
            let w = ResourceWeights::default();
            let t = task(1.0, 2.0, 3.0);
            let a = execution_cost(&node(4.0, 5.0, 6.0, c, 1.0), &t, &w).unwrap();
            let b = execution_cost(&node(4.0, 5.0, 6.0, k * c + 1e-12, 1.0), &t, &w).unwrap();
            prop_assert!((b - (k + 1e-12 / c) * a).abs() <= 1e-9 * (1.0 + b.abs()));
        }
    }
}
