//! Worker-side resource optimization.
//!
//! The objective is the simplified Lagrangian of the constrained cost problem
//! with `lambda1 = lambda2 = lambda3 = 1/3`:
//!
//! ```text
//! L = (1/3)(e_i + a1 m_i + a2 p_i) * (e_j/(3e_i) + m_j/(3m_i) + p_j/(3p_i))
//!   + (1/9) * [(1 - e_j/e_i) + (1 - m_j/m_i) + (1 - p_j/p_i)]
//!   + lambda4 * (phi_i e_j/e_i - deadline_max)
//! ```
//!
//! [`optimize`] runs projected gradient descent on `L` over the feasible box
//! (lower bound up to just below capacity, with the deadline cap on `e_j`),
//! halving the step whenever a step would raise `L`. [`grid_oracle`] is an
//! independent exhaustive search of the raw execution cost over the same box.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::costmodel::{ratio_cost, ResourceDemand};
use crate::types::{Capacity, ResourceWeights};

/// Steps smaller than this end the search.
pub const MIN_STEP: f64 = 1e-12;
/// Upper box edge as a fraction of capacity; capacity ratios must stay below 1.
const BOX_EDGE: f64 = 1.0 - 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptimizeError {
    #[error("invalid optimizer parameter `{field}`: {message}")]
    InvalidParams { field: &'static str, message: String },
    #[error("feasible set is empty")]
    Infeasible,
    #[error("start point {0:?} lies outside the feasible box")]
    StartOutsideBox([f64; 3]),
    #[error("objective became non-finite at iteration {iteration}")]
    Divergence { iteration: usize },
}

/// Which terms of the Lagrangian to minimize.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Objective {
    /// The full simplified Lagrangian.
    #[default]
    Full,
    /// Only the weighted-ratio cost term; penalty and deadline terms dropped.
    LinearOnly,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OptimizerParams {
    pub capacity: Capacity,
    pub alpha1: f64,
    pub alpha2: f64,
    /// Time constant `phi_i`, seconds.
    pub time_const: f64,
    /// Maximum allowed execution time, seconds.
    pub deadline_max: f64,
    pub learning_rate: f64,
    pub tolerance: f64,
    pub max_iter: usize,
    /// Fixed multiplier of the deadline term.
    pub lambda4: f64,
    /// Scale of the execution cost evaluated by the oracle.
    pub unit_cost: f64,
    pub delta: f64,
    /// Per-coordinate lower bound of the feasible box `(e_j, m_j, p_j)`.
    pub lower_bound: [f64; 3],
    pub objective: Objective,
}

impl OptimizerParams {
    pub fn new(capacity: Capacity, alpha1: f64, alpha2: f64, time_const: f64, deadline_max: f64) -> Self {
        Self {
            capacity,
            alpha1,
            alpha2,
            time_const,
            deadline_max,
            learning_rate: 1.0,
            tolerance: 1e-8,
            max_iter: 100_000,
            lambda4: 0.0,
            unit_cost: 1.0,
            delta: 1.0,
            lower_bound: [0.0; 3],
            objective: Objective::Full,
        }
    }

    /// Lower bound of the box set to a task's demand.
    pub fn with_demand_floor(mut self, demand: ResourceDemand) -> Self {
        self.lower_bound = [demand.cycles, demand.memory, demand.power];
        self
    }

    pub fn validate(&self) -> Result<(), OptimizeError> {
        let positive = [
            ("capacity.cpu", self.capacity.cpu),
            ("capacity.memory", self.capacity.memory),
            ("capacity.power", self.capacity.power),
            ("alpha1", self.alpha1),
            ("alpha2", self.alpha2),
            ("time_const", self.time_const),
            ("learning_rate", self.learning_rate),
            ("tolerance", self.tolerance),
            ("unit_cost", self.unit_cost),
            ("delta", self.delta),
        ];
        for (field, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(OptimizeError::InvalidParams {
                    field,
                    message: format!("must be positive, got {v}"),
                });
            }
        }
        if self.max_iter == 0 {
            return Err(OptimizeError::InvalidParams {
                field: "max_iter",
                message: "must be at least 1".into(),
            });
        }
        if self.lower_bound.iter().any(|b| !(*b >= 0.0)) {
            return Err(OptimizeError::InvalidParams {
                field: "lower_bound",
                message: "must be non-negative".into(),
            });
        }
        Ok(())
    }

    fn caps(&self) -> [f64; 3] {
        [self.capacity.cpu, self.capacity.memory, self.capacity.power]
    }

    fn weights(&self) -> ResourceWeights {
        ResourceWeights {
            lambda1: 1.0 / 3.0,
            lambda2: 1.0 / 3.0,
            lambda3: 1.0 / 3.0,
            alpha1: self.alpha1,
            alpha2: self.alpha2,
            delta: self.delta,
        }
    }

    /// Largest `e_j` meeting the deadline: `phi_i e_j / e_i <= deadline_max`.
    fn deadline_cap(&self) -> f64 {
        self.deadline_max * self.capacity.cpu / self.time_const
    }

    /// `(lower, upper)` corners of the projection box, or `None` when empty.
    pub fn feasible_box(&self) -> Option<([f64; 3], [f64; 3])> {
        let lo = self.lower_bound;
        let mut hi = self.caps().map(|c| c * BOX_EDGE);
        hi[0] = hi[0].min(self.deadline_cap());
        lo.iter().zip(&hi).all(|(l, h)| l <= h).then_some((lo, hi))
    }

    /// Midpoint of capacity, projected into the box.
    pub fn default_start(&self) -> Option<ResourceDemand> {
        let (lo, hi) = self.feasible_box()?;
        let mid = self.caps().map(|c| c / 2.0);
        Some(to_demand(project(mid, lo, hi)))
    }
}

fn to_array(p: ResourceDemand) -> [f64; 3] {
    [p.cycles, p.memory, p.power]
}

fn to_demand(p: [f64; 3]) -> ResourceDemand {
    ResourceDemand::new(p[0], p[1], p[2])
}

fn project(x: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> [f64; 3] {
    std::array::from_fn(|k| x[k].clamp(lo[k], hi[k]))
}

pub fn lagrangian_value(point: ResourceDemand, params: &OptimizerParams) -> f64 {
    let [e_i, m_i, p_i] = params.caps();
    let re = point.cycles / e_i;
    let rm = point.memory / m_i;
    let rp = point.power / p_i;
    let scale = (e_i + params.alpha1 * m_i + params.alpha2 * p_i) / 3.0;
    let linear = scale * (re / 3.0 + rm / 3.0 + rp / 3.0);
    match params.objective {
        Objective::LinearOnly => linear,
        Objective::Full => {
            let penalty = ((1.0 - re) + (1.0 - rm) + (1.0 - rp)) / 9.0;
            let deadline = params.lambda4 * (params.time_const * re - params.deadline_max);
            linear + penalty + deadline
        }
    }
}

/// Analytic partials of [`lagrangian_value`] with respect to `(e_j, m_j, p_j)`.
pub fn lagrangian_gradient(_point: ResourceDemand, params: &OptimizerParams) -> [f64; 3] {
    let caps = params.caps();
    let scale = (caps[0] + params.alpha1 * caps[1] + params.alpha2 * caps[2]) / 3.0;
    let penalty = match params.objective {
        Objective::Full => 1.0 / 9.0,
        Objective::LinearOnly => 0.0,
    };
    let mut g = caps.map(|c| (scale / 3.0 - penalty) / c);
    if params.objective == Objective::Full {
        g[0] += params.lambda4 * params.time_const / caps[0];
    }
    g
}

/// Norm of the projected-gradient step `x - P(x - g)`; zero exactly at a
/// stationary point of the box-constrained problem.
fn projected_gradient_norm(x: [f64; 3], g: [f64; 3], lo: [f64; 3], hi: [f64; 3]) -> f64 {
    let moved = project(std::array::from_fn(|k| x[k] - g[k]), lo, hi);
    (0..3).map(|k| (x[k] - moved[k]).powi(2)).sum::<f64>().sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CriticalPoint {
    pub point: ResourceDemand,
    pub lagrangian: f64,
    /// Projected-gradient norm at `point`.
    pub gradient_norm: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// One accepted iterate.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Iterate {
    pub point: ResourceDemand,
    pub lagrangian: f64,
    pub step: f64,
}

pub fn optimize(params: &OptimizerParams, start: ResourceDemand) -> Result<CriticalPoint, OptimizeError> {
    optimize_inner(params, start, |_| {})
}

/// Like [`optimize`], also returning every accepted iterate, the start included.
pub fn optimize_traced(params: &OptimizerParams, start: ResourceDemand) -> Result<(CriticalPoint, Vec<Iterate>), OptimizeError> {
    let mut trace = Vec::new();
    let cp = optimize_inner(params, start, |it| trace.push(it))?;
    Ok((cp, trace))
}

fn optimize_inner(
    params: &OptimizerParams,
    start: ResourceDemand,
    mut on_accept: impl FnMut(Iterate),
) -> Result<CriticalPoint, OptimizeError> {
    params.validate()?;
    let (lo, hi) = params.feasible_box().ok_or(OptimizeError::Infeasible)?;
    let mut x = to_array(start);
    if (0..3).any(|k| !(x[k] >= lo[k] && x[k] <= hi[k])) {
        return Err(OptimizeError::StartOutsideBox(x));
    }

    let mut value = lagrangian_value(start, params);
    if !value.is_finite() {
        return Err(OptimizeError::Divergence { iteration: 0 });
    }
    let mut step = params.learning_rate;
    on_accept(Iterate {
        point: start,
        lagrangian: value,
        step,
    });

    let mut grad = lagrangian_gradient(start, params);
    let mut norm = projected_gradient_norm(x, grad, lo, hi);
    let mut iterations = 0;
    let mut converged = norm < params.tolerance;

    while !converged && iterations < params.max_iter {
        iterations += 1;
        let candidate = project(std::array::from_fn(|k| x[k] - step * grad[k]), lo, hi);
        let cand_value = lagrangian_value(to_demand(candidate), params);
        if !cand_value.is_finite() {
            return Err(OptimizeError::Divergence { iteration: iterations });
        }
        if cand_value > value {
            step /= 2.0;
            if step < MIN_STEP {
                break;
            }
            continue;
        }
        x = candidate;
        value = cand_value;
        on_accept(Iterate {
            point: to_demand(x),
            lagrangian: value,
            step,
        });
        grad = lagrangian_gradient(to_demand(x), params);
        norm = projected_gradient_norm(x, grad, lo, hi);
        converged = norm < params.tolerance;
    }

    Ok(CriticalPoint {
        point: to_demand(x),
        lagrangian: value,
        gradient_norm: norm,
        iterations,
        converged,
    })
}

/// Execution cost `c_i * delta * (e_j/(3e_i) + a1 m_j/(3m_i) + a2 p_j/(3p_i))`
/// at `point`, or `None` when a capacity ratio is not below 1.
pub fn execution_cost_at(point: ResourceDemand, params: &OptimizerParams) -> Option<f64> {
    ratio_cost(params.unit_cost, &params.capacity, point, &params.weights()).ok()
}

#[derive(Clone, Debug, PartialEq)]
pub struct GridMinimum {
    pub point: ResourceDemand,
    pub cost: f64,
    /// Grid index per coordinate.
    pub index: [usize; 3],
}

fn grid_steps(params: &OptimizerParams, resolution: usize) -> [f64; 3] {
    let caps = params.caps();
    std::array::from_fn(|k| (caps[k] - params.lower_bound[k]) / resolution as f64)
}

/// Exhaustive minimum of [`execution_cost_at`] over the grid
/// `lower + k * (capacity - lower) / resolution`, `k in 0..resolution`,
/// restricted to points meeting the deadline. Ties go to the
/// lexicographically smallest index.
pub fn grid_oracle(params: &OptimizerParams, resolution: usize) -> Result<GridMinimum, OptimizeError> {
    params.validate()?;
    if resolution < 8 {
        return Err(OptimizeError::InvalidParams {
            field: "grid_resolution",
            message: format!("must be at least 8, got {resolution}"),
        });
    }
    let h = grid_steps(params, resolution);
    let lb = params.lower_bound;
    let coord = |k: usize, i: usize| lb[k] + i as f64 * h[k];
    let mut best: Option<GridMinimum> = None;
    for i in 0..resolution {
        let e = coord(0, i);
        if params.time_const * e / params.capacity.cpu > params.deadline_max {
            break;
        }
        for j in 0..resolution {
            for k in 0..resolution {
                let point = ResourceDemand::new(e, coord(1, j), coord(2, k));
                let Some(cost) = execution_cost_at(point, params) else {
                    continue;
                };
                if best.as_ref().is_none_or(|b| cost < b.cost) {
                    best = Some(GridMinimum {
                        point,
                        cost,
                        index: [i, j, k],
                    });
                }
            }
        }
    }
    best.ok_or(OptimizeError::Infeasible)
}

/// Largest cost change across one grid cell at `resolution`.
pub fn grid_cell_bound(params: &OptimizerParams, resolution: usize) -> f64 {
    let h = grid_steps(params, resolution);
    let caps = params.caps();
    params.unit_cost * params.delta / 3.0 * (h[0] / caps[0] + params.alpha1 * h[1] / caps[1] + params.alpha2 * h[2] / caps[2])
}
