//! Discrete-time simulation of a computational grid scheduled by a
//! cost-driven auction, with failure-aware job placement.
//!
//! Layout:
//! - [`domain`]: entities and the grid information state
//! - [`cost`]: the effective-cost model
//! - [`auction`]: capacitated assignment by ε-scaling auction
//! - [`scheduler`]: global and local scheduling rounds
//! - [`engine`]: the tick loop, failures and run metrics
//! - [`properties`], [`generate`], [`report`]: scenario input and report output
//! - [`sweep`]: parameter sweeps over seeds

pub mod auction;
pub mod cost;
pub mod domain;
pub mod engine;
pub mod generate;
pub mod properties;
pub mod report;
pub mod scheduler;
pub mod sweep;

pub use auction::{solve, AssignmentInstance, AuctionResult};
pub use cost::StrategyParams;
pub use domain::{GridState, JobId, MachineId, ResourceId, Scenario, UserId};
pub use engine::{run, FailureModel, RunLimit, RunMetrics, RunReport, Simulation};
