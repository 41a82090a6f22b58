//! Worker-side container placement.
//!
//! A node reserves memory and a static compute slice for every live container.
//! Reserved resources return to the node only when the container is destroyed,
//! so `sum(live container memory) + free_memory == capacity` at all times.

use thiserror::Error;

use crate::config::ExecutorProfile;
use crate::types::{Container, ContainerId, ContainerState, ExecutorMode, Task, WorkerNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ContainerError {
    #[error("node {node} has no container {id}")]
    UnknownContainer { node: u32, id: ContainerId },
    #[error("container {id} is {state:?}, expected {expected:?}")]
    WrongState {
        id: ContainerId,
        state: ContainerState,
        expected: ContainerState,
    },
    /// The node cannot reserve the requested resources; the task must be requeued.
    #[error("node {node} cannot reserve {memory} MB / {compute} cycles/s")]
    Insufficient { node: u32, memory: f64, compute: f64 },
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ContainerAction {
    Reuse,
    Create,
    Requeue,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ContainerDecision {
    pub action: ContainerAction,
    pub container_id: Option<ContainerId>,
    /// Seconds of execution the decision implies; infinite for requeue.
    pub predicted_time: f64,
}

impl ContainerDecision {
    fn requeue() -> Self {
        Self {
            action: ContainerAction::Requeue,
            container_id: None,
            predicted_time: f64::INFINITY,
        }
    }

    pub fn is_placeable(&self) -> bool {
        self.action != ContainerAction::Requeue
    }
}

/// Smallest multiple of the node's CPU granularity giving
/// `cycles / slice < td_max`, capped at the node's unreserved compute.
/// `None` when even the whole unreserved compute misses the bound.
pub fn compute_slice(node: &WorkerNode, task: &Task) -> Option<f64> {
    if !(task.cycles / node.free_cpu < task.td_max) {
        return None;
    }
    let g = node.executor.cpu_granularity;
    let units = (task.cycles / (task.td_max * g)).floor() + 1.0;
    let mut slice = (units * g).min(node.free_cpu);
    // Rounding at the bound can leave the quotient equal to td_max.
    if !(task.cycles / slice < task.td_max) {
        slice += g;
        if slice > node.free_cpu {
            slice = node.free_cpu;
        }
    }
    Some(slice)
}

/// Best-fit container choice for a task that won on `node`.
///
/// Free containers are scanned in ascending `(compute, memory, id)` order and
/// the first with `memory > task.memory` and `cycles / compute < td_max` is
/// reused. Otherwise a container is created when the node's unreserved memory
/// exceeds the task memory plus library overhead and its unreserved compute
/// meets the delay bound. Otherwise the task is requeued.
pub fn select_container(node: &WorkerNode, task: &Task) -> ContainerDecision {
    let mut free: Vec<&Container> = node.containers.iter().filter(|c| c.state == ContainerState::Free).collect();
    free.sort_by(|a, b| {
        a.compute
            .total_cmp(&b.compute)
            .then(a.memory.total_cmp(&b.memory))
            .then(a.id.cmp(&b.id))
    });
    for c in free {
        let time = task.cycles / c.compute;
        if c.memory > task.memory && time < task.td_max {
            return ContainerDecision {
                action: ContainerAction::Reuse,
                container_id: Some(c.id),
                predicted_time: time,
            };
        }
    }

    let needed = task.memory + node.executor.lib_overhead_mb;
    if node.free_memory > needed {
        if let Some(slice) = compute_slice(node, task) {
            return ContainerDecision {
                action: ContainerAction::Create,
                container_id: None,
                predicted_time: task.cycles / slice,
            };
        }
    }
    ContainerDecision::requeue()
}

/// Reserves a container of the given size on `node`, initially busy.
pub fn provision(node: &mut WorkerNode, memory: f64, compute: f64, lib_overhead: f64, startup_time: f64) -> Result<ContainerId, ContainerError> {
    if memory > node.free_memory || compute > node.free_cpu {
        return Err(ContainerError::Insufficient {
            node: node.id.0,
            memory,
            compute,
        });
    }
    let id = ContainerId(node.next_container);
    node.next_container += 1;
    node.free_memory -= memory;
    node.free_cpu -= compute;
    node.containers.push(Container {
        id,
        node_id: node.id,
        memory,
        compute,
        lib_overhead,
        state: ContainerState::Busy,
        startup_time,
        idle_since: f64::NAN,
    });
    Ok(id)
}

/// Creates a busy container sized for `task`: task memory plus library
/// overhead, and the minimal compute slice meeting the delay bound.
pub fn create_container(node: &mut WorkerNode, task: &Task) -> Result<ContainerId, ContainerError> {
    let lib = node.executor.lib_overhead_mb;
    let startup = node.executor.container_start_s;
    let memory = task.memory + lib;
    let slice = compute_slice(node, task).ok_or(ContainerError::Insufficient {
        node: node.id.0,
        memory,
        compute: task.cycles / task.td_max,
    })?;
    provision(node, memory, slice, lib, startup)
}

fn container_mut(node: &mut WorkerNode, id: ContainerId) -> Result<&mut Container, ContainerError> {
    let node_id = node.id.0;
    node.containers
        .iter_mut()
        .find(|c| c.id == id)
        .ok_or(ContainerError::UnknownContainer { node: node_id, id })
}

fn transition(node: &mut WorkerNode, id: ContainerId, from: ContainerState, to: ContainerState) -> Result<&mut Container, ContainerError> {
    let c = container_mut(node, id)?;
    if c.state != from {
        return Err(ContainerError::WrongState {
            id,
            state: c.state,
            expected: from,
        });
    }
    c.state = to;
    Ok(c)
}

/// Free -> busy.
pub fn acquire_container(node: &mut WorkerNode, id: ContainerId) -> Result<(), ContainerError> {
    transition(node, id, ContainerState::Free, ContainerState::Busy).map(|_| ())
}

/// Busy -> free, stamping the idle start.
pub fn release_container(node: &mut WorkerNode, id: ContainerId, now: f64) -> Result<(), ContainerError> {
    let c = transition(node, id, ContainerState::Busy, ContainerState::Free)?;
    c.idle_since = now;
    Ok(())
}

/// Removes a container and returns its reservation to the node.
pub fn destroy_container(node: &mut WorkerNode, id: ContainerId) -> Result<Container, ContainerError> {
    let pos = node
        .containers
        .iter()
        .position(|c| c.id == id)
        .ok_or(ContainerError::UnknownContainer { node: node.id.0, id })?;
    let c = node.containers.remove(pos);
    node.free_memory += c.memory;
    node.free_cpu += c.compute;
    // Snap accumulated rounding back onto capacity.
    if node.containers.is_empty() {
        node.free_memory = node.capacity.memory;
        node.free_cpu = node.capacity.cpu;
    }
    Ok(c)
}

/// Destroys free containers idle for at least the profile's TTL.
pub fn reap_idle(node: &mut WorkerNode, now: f64) -> Vec<Container> {
    let ttl = node.executor.idle_ttl_s;
    let expired: Vec<ContainerId> = node
        .containers
        .iter()
        .filter(|c| c.state == ContainerState::Free && now - c.idle_since >= ttl)
        .map(|c| c.id)
        .collect();
    expired
        .into_iter()
        .filter_map(|id| destroy_container(node, id).ok())
        .collect()
}

/// Node memory with `task_count` executors of `task_memory` MB each:
/// base memory plus, per executor, the task memory and the mode's overhead
/// (library install for containers, guest OS image for VMs).
pub fn memory_footprint(profile: &ExecutorProfile, task_count: usize, task_memory: f64, mode: ExecutorMode) -> f64 {
    let (overhead, _) = profile.overhead(mode);
    profile.base_memory_mb + task_count as f64 * (task_memory + overhead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::{Capacity, NodeId};
    use approx::assert_relative_eq;

    fn node(cpu: f64, memory: f64, lib: f64, granularity: f64) -> WorkerNode {
        let profile = ExecutorProfile {
            lib_overhead_mb: lib,
            cpu_granularity: granularity,
            ..ExecutorProfile::default()
        };
        WorkerNode::new(
            NodeId(0),
            Capacity { cpu, memory, power: 100.0 },
            1.0,
            1.0,
            ExecutorMode::Container,
            profile,
        )
        .unwrap()
    }

    fn task(cycles: f64, memory: f64, td_max: f64) -> Task {
        let mut t = Task::with_demand(0, cycles, memory, 1.0);
        t.td_max = td_max;
        t
    }

    fn add_free(n: &mut WorkerNode, memory: f64, compute: f64) -> ContainerId {
        let id = provision(n, memory, compute, 0.0, 0.0).unwrap();
        release_container(n, id, 0.0).unwrap();
        id
    }

    #[test]
    fn best_fit_skips_container_short_on_memory() {
        let mut n = node(100.0, 100.0, 0.0, 1.0);
        let _a = add_free(&mut n, 1.0, 3.0);
        let b = add_free(&mut n, 4.0, 4.0);
        let d = select_container(&n, &task(10.0, 2.0, 5.0));
        assert_eq!(d.action, ContainerAction::Reuse);
        assert_eq!(d.container_id, Some(b));
        assert_relative_eq!(d.predicted_time, 2.5);
    }

    #[test]
    fn creates_when_no_free_container() {
        let n = node(10.0, 8.0, 0.0, 1.0);
        let d = select_container(&n, &task(10.0, 2.0, 5.0));
        assert_eq!(d.action, ContainerAction::Create);
        assert!(d.predicted_time < 5.0);
    }

    #[test]
    fn requeues_when_node_lacks_memory() {
        let n = node(10.0, 1.0, 0.0, 1.0);
        let d = select_container(&n, &task(10.0, 2.0, 5.0));
        assert_eq!(d.action, ContainerAction::Requeue);
        assert!(d.container_id.is_none());
    }

    #[test]
    fn boundary_cases_fail_strict_tests() {
        let mut n = node(100.0, 100.0, 0.0, 1.0);
        // memory equal to demand and time exactly td_max both fail.
        add_free(&mut n, 2.0, 10.0);
        add_free(&mut n, 10.0, 2.0);
        let d = select_container(&n, &task(10.0, 2.0, 5.0));
        assert_eq!(d.action, ContainerAction::Create);
    }

    #[test]
    fn busy_containers_are_not_candidates() {
        let mut n = node(100.0, 100.0, 0.0, 1.0);
        provision(&mut n, 50.0, 50.0, 0.0, 0.0).unwrap();
        assert_eq!(select_container(&n, &task(10.0, 2.0, 5.0)).action, ContainerAction::Create);
    }

    #[test]
    fn create_reserves_memory_with_library_overhead() {
        let mut n = node(100.0, 8.0, 0.5, 1.0);
        let id = create_container(&mut n, &task(10.0, 2.0, 5.0)).unwrap();
        let c = n.container(id).unwrap();
        assert_relative_eq!(c.memory, 2.5);
        assert_relative_eq!(n.free_memory, 5.5);
        assert_eq!(c.state, ContainerState::Busy);
        assert!(n.memory_conserved());
    }

    #[test]
    fn slice_is_smallest_granule_meeting_bound() {
        let mut n = node(100.0, 8.0, 0.0, 1.0);
        let id = create_container(&mut n, &task(10.0, 2.0, 5.0)).unwrap();
        assert_relative_eq!(n.container(id).unwrap().compute, 3.0);
        assert_relative_eq!(n.container(id).unwrap().memory, 2.0);
        assert_relative_eq!(n.free_cpu, 97.0);
    }

    #[test]
    fn slice_is_capped_by_unreserved_compute() {
        let n = node(2.5, 8.0, 0.0, 1.0);
        // needs > 2 cycles/s, granule rounding gives 3, only 2.5 available
        assert_eq!(compute_slice(&n, &task(10.0, 2.0, 5.0)), Some(2.5));
        let n = node(2.0, 8.0, 0.0, 1.0);
        assert_eq!(compute_slice(&n, &task(10.0, 2.0, 5.0)), None);
    }

    #[test]
    fn commit_without_room_signals_requeue() {
        let mut n = node(100.0, 2.0, 0.5, 1.0);
        assert!(matches!(
            create_container(&mut n, &task(10.0, 2.0, 5.0)),
            Err(ContainerError::Insufficient { .. })
        ));
        assert!(n.containers.is_empty());
    }

    #[test]
    fn release_then_reselect_reuses_same_container() {
        let mut n = node(100.0, 8.0, 0.5, 1.0);
        let t = task(10.0, 2.0, 5.0);
        let id = create_container(&mut n, &t).unwrap();
        let free_before = n.containers.iter().filter(|c| c.state == ContainerState::Free).count();
        release_container(&mut n, id, 1.0).unwrap();
        let free_after = n.containers.iter().filter(|c| c.state == ContainerState::Free).count();
        assert_eq!(free_after, free_before + 1);
        let d = select_container(&n, &t);
        assert_eq!((d.action, d.container_id), (ContainerAction::Reuse, Some(id)));
        acquire_container(&mut n, id).unwrap();
        assert_eq!(n.container(id).unwrap().state, ContainerState::Busy);
    }

    #[test]
    fn invalid_transitions_are_errors() {
        let mut n = node(100.0, 8.0, 0.0, 1.0);
        assert!(matches!(
            release_container(&mut n, ContainerId(9), 0.0),
            Err(ContainerError::UnknownContainer { .. })
        ));
        let id = add_free(&mut n, 1.0, 1.0);
        assert!(matches!(release_container(&mut n, id, 0.0), Err(ContainerError::WrongState { .. })));
        acquire_container(&mut n, id).unwrap();
        assert!(matches!(acquire_container(&mut n, id), Err(ContainerError::WrongState { .. })));
    }

    #[test]
    fn idle_containers_expire_after_ttl() {
        let mut n = node(100.0, 100.0, 0.0, 1.0);
        n.executor.idle_ttl_s = 10.0;
        let id = add_free(&mut n, 5.0, 5.0);
        assert!(reap_idle(&mut n, 9.0).is_empty());
        let gone = reap_idle(&mut n, 10.0);
        assert_eq!(gone.len(), 1);
        assert_eq!(gone[0].id, id);
        assert_eq!(n.free_memory, 100.0);
        assert_eq!(n.free_cpu, 100.0);
    }

    #[test]
    fn footprint_model() {
        let p = ExecutorProfile::default();
        assert_eq!(memory_footprint(&p, 0, 300.0, ExecutorMode::Container), p.base_memory_mb);
        assert_eq!(memory_footprint(&p, 0, 300.0, ExecutorMode::Vm), p.base_memory_mb);
        for k in 1..20 {
            assert!(memory_footprint(&p, k, 300.0, ExecutorMode::Vm) > memory_footprint(&p, k, 300.0, ExecutorMode::Container));
        }
        let one = memory_footprint(&p, 1, 300.0, ExecutorMode::Container) - p.base_memory_mb;
        let two = memory_footprint(&p, 2, 300.0, ExecutorMode::Container) - p.base_memory_mb;
        assert_relative_eq!(two, 2.0 * one);
    }
}
