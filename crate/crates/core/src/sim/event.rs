use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::types::{ContainerId, NodeId, TaskId};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    TaskArrival,
    AuctionRound,
    ExecStart,
    ExecFinish,
    ContainerRelease,
}

impl EventKind {
    /// Processing order among events at the same instant: work that frees
    /// resources runs before work that claims them.
    pub fn rank(self) -> u8 {
        match self {
            Self::ExecFinish => 0,
            Self::ContainerRelease => 1,
            Self::TaskArrival => 2,
            Self::AuctionRound => 3,
            Self::ExecStart => 4,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Self::TaskArrival => "task_arrival",
            Self::AuctionRound => "auction_round",
            Self::ExecStart => "exec_start",
            Self::ExecFinish => "exec_finish",
            Self::ContainerRelease => "container_release",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EventKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        [
            Self::TaskArrival,
            Self::AuctionRound,
            Self::ExecStart,
            Self::ExecFinish,
            Self::ContainerRelease,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| format!("unknown event kind {s:?}"))
    }
}

/// A scheduled event. Ordered by `(time, kind rank, task id, insertion seq)`.
#[derive(Clone, Debug, PartialEq)]
pub struct SimEvent {
    pub time: f64,
    pub kind: EventKind,
    pub task: Option<TaskId>,
    pub node: Option<NodeId>,
    pub container: Option<ContainerId>,
    pub(crate) seq: u64,
}

impl Eq for SimEvent {}

impl Ord for SimEvent {
    fn cmp(&self, other: &Self) -> Ordering {
        self.time
            .total_cmp(&other.time)
            .then(self.kind.rank().cmp(&other.kind.rank()))
            .then(self.task.cmp(&other.task))
            .then(self.seq.cmp(&other.seq))
    }
}

impl PartialOrd for SimEvent {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// One line of the event log: `time,kind,task_id,node_id,container_id,detail`.
///
/// `detail` is a `;`-separated list of tags and `key+=value` / `key-=value`
/// resource deltas (`mem` in MB, `cpu` in cycles per second) that let the
/// node utilization be replayed from the log alone.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EventRecord {
    pub time: f64,
    pub kind: EventKind,
    pub task_id: Option<TaskId>,
    pub node_id: Option<NodeId>,
    pub container_id: Option<ContainerId>,
    pub detail: String,
}

impl EventRecord {
    /// Signed resource delta for `key` carried in `detail`.
    pub fn delta(&self, key: &str) -> f64 {
        self.detail
            .split(';')
            .filter_map(|tok| {
                let rest = tok.strip_prefix(key)?;
                if let Some(v) = rest.strip_prefix("+=") {
                    v.parse::<f64>().ok()
                } else {
                    rest.strip_prefix("-=").and_then(|v| v.parse::<f64>().ok()).map(|v| -v)
                }
            })
            .sum()
    }

    pub fn has_tag(&self, tag: &str) -> bool {
        self.detail.split(';').any(|t| t == tag)
    }
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map(ToString::to_string).unwrap_or_default()
}

impl fmt::Display for EventRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:.6},{},{},{},{},{}",
            self.time,
            self.kind,
            opt(&self.task_id),
            opt(&self.node_id),
            opt(&self.container_id),
            self.detail
        )
    }
}

impl FromStr for EventRecord {
    type Err = String;

    fn from_str(line: &str) -> Result<Self, Self::Err> {
        let mut parts = line.splitn(6, ',');
        let mut next = |name: &str| parts.next().ok_or_else(|| format!("missing {name} in {line:?}"));
        let time = next("time")?.parse::<f64>().map_err(|e| e.to_string())?;
        let kind = next("kind")?.parse()?;
        fn id<T>(s: &str, wrap: impl Fn(u64) -> T) -> Result<Option<T>, String> {
            if s.is_empty() {
                Ok(None)
            } else {
                s.parse::<u64>().map(|v| Some(wrap(v))).map_err(|e| e.to_string())
            }
        }
        let task_id = id(next("task_id")?, TaskId)?;
        let node_id = id(next("node_id")?, |v| NodeId(v as u32))?;
        let container_id = id(next("container_id")?, ContainerId)?;
        let detail = next("detail")?.to_string();
        Ok(Self {
            time,
            kind,
            task_id,
            node_id,
            container_id,
            detail,
        })
    }
}

/// Renders a log as newline-terminated lines.
pub fn format_log(log: &[EventRecord]) -> String {
    let mut out = String::with_capacity(log.len() * 48);
    for r in log {
        out.push_str(&r.to_string());
        out.push('\n');
    }
    out
}

pub fn parse_log(text: &str) -> Result<Vec<EventRecord>, String> {
    text.lines().filter(|l| !l.trim().is_empty()).map(str::parse).collect()
}
