//! Learned communication topologies for cooperative agent teams.
//!
//! Each agent picks one of six discrete communication actions per round; the
//! joint choice induces a directed round graph. A topology-aware recurrent
//! Q-network (GNN over the round graph, GRU across rounds, per-action head)
//! is trained with QMIX monotonic value mixing under centralized training
//! with decentralized execution, against the deterministic ClueRelay
//! environment. The crate also ships the exhaustive open-loop sequence
//! oracle and the property-check suite used to validate the mixer.

pub mod analysis;
pub mod cli;
pub mod config;
pub mod domain;
pub mod env;
pub mod error;
pub mod metrics;
pub mod mixer;
pub mod numerics;
pub mod qnet;
pub mod topology;
pub mod trainer;

pub use config::{EnvConfig, FileConfig, RunConfig, NUM_ACTIONS};
pub use domain::{
    active_agents, encode_global_state, encode_observation, CommAction, CommGraph, Episode,
    GlobalState, JointAction, Observation, RoundRecord, ALL_ACTIONS,
};
pub use error::{Error, Result};
pub use topology::{action_to_adjacency, execution_order, ExecutionOrder};
