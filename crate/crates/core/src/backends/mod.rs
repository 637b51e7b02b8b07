//! Agent execution backends, prompt assembly, embeddings and decomposition.

pub mod decompose;
pub mod embed;
#[cfg(feature = "http")]
pub mod http;
#[cfg(feature = "http")]
pub mod llm;
pub mod prompt;
pub mod sim;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_db::StaticProfile;
use crate::task_graph::{GraphError, NodeId, SubtaskNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BackendError {
    #[error("request timed out")]
    Timeout,
    #[error("HTTP status {0}")]
    HttpStatus(u16),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("malformed response: {0}")]
    MalformedResponse(String),
    #[error("endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("not configured: {0}")]
    NotConfigured(String),
    #[error("cannot embed empty text")]
    EmptyText,
    #[error("agent {agent} has no skill entry for domain {domain:?}")]
    UnknownDomain { agent: String, domain: Option<String> },
    #[error("node {node}: placeholder {placeholder} is not defined by any incoming relation")]
    UnresolvedPlaceholder { node: NodeId, placeholder: String },
    #[error("node {node}: upstream answer for node {upstream} is missing")]
    MissingUpstream { node: NodeId, upstream: NodeId },
    #[error("node {0} is not in the graph")]
    UnknownNode(NodeId),
    #[error("invalid simulated agent: {0}")]
    InvalidSpec(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
}

/// Outcome of running one agent on one subtask.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExecutionResult {
    pub answer_text: String,
    pub tokens: u64,
    /// Wall-clock seconds; zero for simulated agents.
    pub latency: f64,
    pub ok: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl ExecutionResult {
    pub fn failed(error: impl ToString, tokens: u64, latency: f64) -> Self {
        Self { answer_text: String::new(), tokens, latency, ok: false, error: Some(error.to_string()) }
    }
}

/// Ground truth handed to simulated agents. `inputs_consistent` is false
/// when some upstream answer the node depends on was graded wrong.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimReference {
    pub truth: f64,
    pub inputs_consistent: bool,
}

pub struct ExecutionRequest<'a> {
    pub task_id: u64,
    pub agent: &'a StaticProfile,
    pub node: &'a SubtaskNode,
    pub prompt: &'a prompt::AssembledPrompt,
    pub reference: Option<SimReference>,
}

pub trait AgentBackend: Send + Sync {
    fn execute(&self, request: &ExecutionRequest<'_>) -> ExecutionResult;

    /// Whether this backend needs [`ExecutionRequest::reference`].
    fn needs_reference(&self) -> bool {
        false
    }
}

/// Shortest round-trip rendering of a float, switching to exponent form
/// outside `[1e-4, 1e15)`.
pub fn format_number(x: f64) -> String {
    let a = x.abs();
    if x == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{x}")
    } else {
        format!("{x:e}")
    }
}
