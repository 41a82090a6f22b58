//! Auction-based task offloading with container-level resource allocation:
//! cost model, bid optimization, sealed-bid auctions, best-fit container
//! placement and a discrete-event simulator with baseline schedulers.

// Negated float comparisons are used on purpose so NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod auction;
pub mod bidopt;
pub mod config;
pub mod containers;
pub mod costmodel;
pub mod error;
pub mod rng;
pub mod sim;
pub mod types;
pub mod workload;

pub use auction::{AuctionConfig, AuctionError, AuctionMode, WinRule};
pub use config::{ExecutorProfile, NodeTemplate, SimConfig, StrategyKind, WorkloadConfig};
pub use error::{ConfigError, Error};
pub use sim::{run, run_tasks, RunReport};
pub use types::*;
