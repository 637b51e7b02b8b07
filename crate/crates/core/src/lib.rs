//! Reward-driven agent selection over task dependency graphs.
//!
//! A composite question is split into a DAG of subtasks. Each subtask is
//! assigned an agent by a two-stage search over a database of agent
//! profiles, and agent statistics are updated online from reward signals.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent_db;
pub mod backends;
#[cfg(feature = "cli")]
pub mod cli;
pub mod keyed;
pub mod orchestrator;
pub mod reward;
pub mod selection;
pub mod simenv;
pub mod synthesis;
pub mod task_graph;
