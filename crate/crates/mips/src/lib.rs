//! Two-stage instance placement for stream-processing clusters.
//!
//! Stage one maps application instances onto containers (minimizing a
//! weighted blend of cross-container traffic and container count); stage two
//! maps containers onto servers (minimizing hop-weighted cross-server
//! traffic). Both stages are solved as sequential decision processes by
//! Monte Carlo tree search, and benchmarked against classic packing
//! heuristics on Fat-Tree and Jellyfish clusters.

pub mod baselines;
pub mod error;
pub mod files;
pub mod harness;
pub mod mcts;
pub mod model;
pub mod objectives;
pub mod topology;
pub mod workload;

pub use error::{Error, Result, StageId};
pub use model::{
    commit, instance_traffic_rate, validate_csmp, validate_icmp, AppRequest, ClusterState,
    Component, Container, CsmpAssignment, IcmpAssignment, Instance, ResourceVector, Server,
    StreamEdge, Verdict, Violation,
};
