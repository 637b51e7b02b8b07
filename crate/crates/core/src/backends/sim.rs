//! Deterministic simulated agents.
//!
//! Each agent has a per-domain success probability. A successful call
//! returns the boxed ground truth; a failed one returns it perturbed by a
//! relative error of at least half the agent's noise scale. Specs whose
//! noise scale is below ten times the grading tolerance are rejected.

use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{format_number, AgentBackend, BackendError, ExecutionRequest, ExecutionResult, SimReference};
use crate::keyed::keyed_rng;
use crate::reward::DEFAULT_REL_TOLERANCE;
use crate::task_graph::SubtaskNode;

pub const WILDCARD_DOMAIN: &str = "*";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulatedAgentSpec {
    pub agent_id: String,
    /// Domain label -> success probability; the key `*` covers every
    /// domain without its own entry.
    pub skill: BTreeMap<String, f64>,
    pub cost_tokens: f64,
    pub noise_scale: f64,
}

impl SimulatedAgentSpec {
    pub fn validate(&self, rel_tolerance: f64) -> Result<(), BackendError> {
        if let Some((d, p)) = self.skill.iter().find(|(_, p)| !(0.0..=1.0).contains(*p)) {
            return Err(BackendError::InvalidSpec(format!("{}: skill {p} for {d} is outside [0, 1]", self.agent_id)));
        }
        if !(self.cost_tokens.is_finite() && self.cost_tokens >= 0.0) {
            return Err(BackendError::InvalidSpec(format!("{}: cost_tokens must be >= 0", self.agent_id)));
        }
        if !(self.noise_scale >= 10.0 * rel_tolerance) || !self.noise_scale.is_finite() {
            return Err(BackendError::InvalidSpec(format!(
                "{}: noise_scale {} must be at least 10x the grading tolerance {rel_tolerance}",
                self.agent_id, self.noise_scale
            )));
        }
        Ok(())
    }
}

/// One simulated call keyed by `(seed, task, node, agent)`.
pub fn execute_simulated(
    spec: &SimulatedAgentSpec,
    node: &SubtaskNode,
    reference: SimReference,
    seed: u64,
    task_id: u64,
) -> Result<ExecutionResult, BackendError> {
    let p = node
        .domain
        .as_ref()
        .and_then(|d| spec.skill.get(d))
        .or_else(|| spec.skill.get(WILDCARD_DOMAIN))
        .copied()
        .ok_or_else(|| BackendError::UnknownDomain { agent: spec.agent_id.clone(), domain: node.domain.clone() })?;
    let mut rng = keyed_rng(seed, "sim-exec", &[&task_id.to_string(), &node.id.to_string(), &spec.agent_id]);
    let draw: f64 = rng.random();
    let magnitude: f64 = rng.random_range(0.5..=1.5);
    let negative: bool = rng.random();
    let token_jitter: f64 = rng.random();

    let success = draw < p && reference.inputs_consistent;
    let value = if success {
        reference.truth
    } else {
        let rel = if negative { -magnitude } else { magnitude } * spec.noise_scale;
        if reference.truth == 0.0 {
            rel
        } else {
            reference.truth * (1.0 + rel)
        }
    };
    let tokens = (spec.cost_tokens * (0.75 + 0.5 * token_jitter)).round() as u64;
    Ok(ExecutionResult {
        answer_text: format!(
            "Using the data given, I worked through subtask {}. The answer is therefore \\boxed{{{}}}.",
            node.id,
            format_number(value)
        ),
        tokens,
        latency: 0.0,
        ok: true,
        error: None,
    })
}

/// Backend that runs [`execute_simulated`] for registered agents.
#[derive(Debug, Clone)]
pub struct SimulatedBackend {
    specs: BTreeMap<String, SimulatedAgentSpec>,
    seed: u64,
}

impl SimulatedBackend {
    pub fn new(specs: impl IntoIterator<Item = SimulatedAgentSpec>, seed: u64) -> Result<Self, BackendError> {
        let specs: BTreeMap<_, _> = specs.into_iter().map(|s| (s.agent_id.clone(), s)).collect();
        for s in specs.values() {
            s.validate(DEFAULT_REL_TOLERANCE)?;
        }
        Ok(Self { specs, seed })
    }

    pub fn spec(&self, agent_id: &str) -> Option<&SimulatedAgentSpec> {
        self.specs.get(agent_id)
    }
}

impl AgentBackend for SimulatedBackend {
    fn execute(&self, req: &ExecutionRequest<'_>) -> ExecutionResult {
        let Some(spec) = self.specs.get(&req.agent.agent_id) else {
            return ExecutionResult::failed(format!("no simulated spec for {}", req.agent.agent_id), 0, 0.0);
        };
        let Some(reference) = req.reference else {
            return ExecutionResult::failed("simulated execution needs ground truth", 0, 0.0);
        };
        execute_simulated(spec, req.node, reference, self.seed, req.task_id)
            .unwrap_or_else(|e| ExecutionResult::failed(e, 0, 0.0))
    }

    fn needs_reference(&self) -> bool {
        true
    }
}
