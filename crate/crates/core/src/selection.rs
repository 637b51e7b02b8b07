//! Two-stage agent search for one subtask.
//!
//! Coarse: rank every agent by `UCB = Q + c·sqrt(N / (n + ε))` and keep the
//! top `k`. Fine, training: run every candidate, score each answer with the
//! reward model and assign the best. Fine, inference: run only the
//! highest-quality candidate, falling back down the list on backend failure.

use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_db::{quality_score, AgentDb, AgentProfile, DbError, SelectionParams};
use crate::backends::prompt::assemble_prompt;
use crate::backends::{AgentBackend, BackendError, ExecutionRequest, ExecutionResult, SimReference};
use crate::keyed::keyed_rng;
use crate::reward::{extract_answer, ContextPair, ExtractedAnswer, RewardModel, RewardRequest};
use crate::task_graph::{NodeAnswer, NodeId, SubtaskNode, TaskGraph};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SelectionError {
    #[error("agent database is empty")]
    EmptyDatabase,
    #[error("all candidates failed on node {node}")]
    AllCandidatesFailed { node: NodeId, per_candidate: Vec<CandidateResult> },
    #[error(transparent)]
    Db(#[from] DbError),
    #[error(transparent)]
    Backend(#[from] BackendError),
}

/// How candidates are chosen; the non-default variants are ablations.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum SelectionStrategy {
    /// UCB coarse search during training, quality argmax at inference.
    #[default]
    Ucb,
    /// Quality argmax everywhere, no exploration bonus.
    Greedy,
    /// Uniformly random candidates.
    Random,
}

impl std::str::FromStr for SelectionStrategy {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "ucb" => Ok(Self::Ucb),
            "greedy" => Ok(Self::Greedy),
            "random" => Ok(Self::Random),
            other => Err(format!("unknown strategy {other:?} (expected ucb, greedy or random)")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub agent_id: String,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    pub node_id: NodeId,
    pub candidates: Vec<Candidate>,
    pub k: usize,
}

impl CandidateSet {
    pub fn ids(&self) -> impl Iterator<Item = &str> {
        self.candidates.iter().map(|c| c.agent_id.as_str())
    }
}

/// What one candidate did on a node. `reward` is `None` at inference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResult {
    pub agent_id: String,
    pub reward: Option<f64>,
    pub cost: f64,
    pub tokens: u64,
    pub ok: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionOutcome {
    pub node_id: NodeId,
    pub chosen_agent: String,
    pub chosen_answer: NodeAnswer,
    pub per_candidate: Vec<CandidateResult>,
    /// Inference only: the top-ranked agent failed and a lower one answered.
    pub fallback: bool,
}

impl SelectionOutcome {
    pub fn executions(&self) -> usize {
        self.per_candidate.len()
    }

    pub fn tokens(&self) -> u64 {
        self.per_candidate.iter().map(|c| c.tokens).sum()
    }
}

/// Exploration-bonus UCB value from its parts.
pub fn ucb_value(quality: f64, c_explore: f64, total_selections: u64, count: u64, epsilon: f64) -> f64 {
    quality + c_explore * (total_selections as f64 / (count as f64 + epsilon)).sqrt()
}

pub fn ucb_score(
    agent: &AgentProfile,
    task_embedding: &[f64],
    params: &SelectionParams,
    total_selections: u64,
) -> Result<f64, DbError> {
    let q = quality_score(agent, task_embedding, params)?;
    Ok(ucb_value(q, params.c_explore, total_selections, agent.dynamic.count, params.epsilon))
}

/// Top-`k` agents by UCB, ties broken by ascending agent id. With
/// `params.c_explore == 0` this ranks by quality alone.
pub fn coarse_select(
    db: &AgentDb,
    node: &SubtaskNode,
    task_embedding: &[f64],
    params: &SelectionParams,
) -> Result<CandidateSet, SelectionError> {
    if db.is_empty() {
        return Err(SelectionError::EmptyDatabase);
    }
    let n_total = db.selections(params.exploration_scope, node.domain.as_deref());
    let mut scored = db
        .agents()
        .iter()
        .map(|a| Ok(Candidate { agent_id: a.id().to_string(), score: ucb_score(a, task_embedding, params, n_total)? }))
        .collect::<Result<Vec<_>, DbError>>()?;
    scored.sort_by(|a, b| b.score.total_cmp(&a.score).then_with(|| a.agent_id.cmp(&b.agent_id)));
    scored.truncate(params.top_k);
    Ok(CandidateSet { node_id: node.id, candidates: scored, k: params.top_k })
}

/// `k` agents in a keyed random order (scores are zero).
pub fn random_candidates(db: &AgentDb, node: &SubtaskNode, k: usize, seed: u64, task_id: u64) -> CandidateSet {
    let mut ids: Vec<&str> = db.agents().iter().map(|a| a.id()).collect();
    ids.sort_unstable();
    let mut rng = keyed_rng(seed, "random-candidates", &[&task_id.to_string(), &node.id.to_string()]);
    ids.shuffle(&mut rng);
    CandidateSet {
        node_id: node.id,
        candidates: ids.into_iter().take(k).map(|id| Candidate { agent_id: id.to_string(), score: 0.0 }).collect(),
        k,
    }
}

/// Everything fine selection needs to know about the node being solved.
pub struct NodeJob<'a> {
    pub task_id: u64,
    pub graph: &'a TaskGraph,
    pub node: &'a SubtaskNode,
    /// Answers of already-solved nodes.
    pub answers: &'a BTreeMap<NodeId, NodeAnswer>,
    /// Ground truths per node, when known.
    pub truths: Option<&'a BTreeMap<NodeId, f64>>,
    pub reference: Option<SimReference>,
}

impl NodeJob<'_> {
    fn context_pairs(&self) -> Vec<ContextPair> {
        let ancestors = self.graph.ancestors(self.node.id);
        ancestors
            .iter()
            .filter_map(|id| {
                let q = self.graph.node(*id)?;
                let a = self.answers.get(id)?;
                Some(ContextPair { question: q.text.clone(), answer: a.text.clone() })
            })
            .collect()
    }
}

fn run_agent(
    agent: &AgentProfile,
    job: &NodeJob<'_>,
    backend: &dyn AgentBackend,
) -> Result<ExecutionResult, SelectionError> {
    let prompt = assemble_prompt(&agent.static_profile, job.graph, job.node.id, job.answers)?;
    Ok(backend.execute(&ExecutionRequest {
        task_id: job.task_id,
        agent: &agent.static_profile,
        node: job.node,
        prompt: &prompt,
        reference: job.reference,
    }))
}

fn node_answer(node_id: NodeId, agent_id: &str, result: &ExecutionResult) -> NodeAnswer {
    let value = match extract_answer(&result.answer_text) {
        Ok(ExtractedAnswer::Numeric(v)) => Some(v),
        _ => None,
    };
    NodeAnswer {
        node_id,
        value,
        text: result.answer_text.clone(),
        agent_id: agent_id.to_string(),
        tokens: result.tokens,
    }
}

fn agent<'d>(db: &'d AgentDb, id: &str) -> Result<&'d AgentProfile, SelectionError> {
    db.get(id).ok_or_else(|| SelectionError::Db(DbError::UnknownAgent(id.to_string())))
}

/// Training-mode fine selection. Every candidate runs and is scored; the
/// returned `per_candidate` list is the set of DADB updates to apply.
/// Failed executions get reward 0 and never win unless every candidate failed.
pub fn fine_select_training(
    db: &AgentDb,
    cands: &CandidateSet,
    job: &NodeJob<'_>,
    backend: &dyn AgentBackend,
    crm: &dyn RewardModel,
    params: &SelectionParams,
) -> Result<SelectionOutcome, SelectionError> {
    let context = job.context_pairs();
    let mut per_candidate = Vec::with_capacity(cands.candidates.len());
    let mut answers = Vec::with_capacity(cands.candidates.len());
    for id in cands.ids() {
        let a = agent(db, id)?;
        let result = run_agent(a, job, backend)?;
        let reward = if result.ok {
            match crm.score(&RewardRequest {
                agent: &a.static_profile,
                node: job.node,
                context: &context,
                answer_text: &result.answer_text,
                truths: job.truths,
            }) {
                Ok(s) => s.value,
                Err(e) => {
                    log::warn!("reward model failed for {id} on node {}: {e}; scoring 0", job.node.id);
                    0.0
                }
            }
        } else {
            0.0
        };
        per_candidate.push(CandidateResult {
            agent_id: id.to_string(),
            reward: Some(reward),
            cost: params.normalized_cost(result.tokens),
            tokens: result.tokens,
            ok: result.ok,
        });
        answers.push(result);
    }

    let best = per_candidate
        .iter()
        .enumerate()
        .filter(|(_, c)| c.ok)
        .max_by(|(_, a), (_, b)| {
            let (ra, rb) = (a.reward.unwrap_or(0.0), b.reward.unwrap_or(0.0));
            ra.total_cmp(&rb).then_with(|| b.agent_id.cmp(&a.agent_id))
        })
        .map(|(i, _)| i);
    let Some(best) = best else {
        return Err(SelectionError::AllCandidatesFailed { node: job.node.id, per_candidate });
    };
    let chosen = per_candidate[best].agent_id.clone();
    Ok(SelectionOutcome {
        node_id: job.node.id,
        chosen_answer: node_answer(job.node.id, &chosen, &answers[best]),
        chosen_agent: chosen,
        per_candidate,
        fallback: false,
    })
}

/// Runs agents in `order` until one succeeds.
pub fn execute_in_order(
    db: &AgentDb,
    order: &[&str],
    job: &NodeJob<'_>,
    backend: &dyn AgentBackend,
    params: &SelectionParams,
) -> Result<SelectionOutcome, SelectionError> {
    let mut per_candidate = Vec::new();
    for (rank, id) in order.iter().enumerate() {
        let result = run_agent(agent(db, id)?, job, backend)?;
        per_candidate.push(CandidateResult {
            agent_id: id.to_string(),
            reward: None,
            cost: params.normalized_cost(result.tokens),
            tokens: result.tokens,
            ok: result.ok,
        });
        if result.ok {
            return Ok(SelectionOutcome {
                node_id: job.node.id,
                chosen_agent: id.to_string(),
                chosen_answer: node_answer(job.node.id, id, &result),
                per_candidate,
                fallback: rank > 0,
            });
        }
    }
    Err(SelectionError::AllCandidatesFailed { node: job.node.id, per_candidate })
}

/// Inference-mode fine selection: quality argmax among candidates (no
/// exploration term), one execution unless the backend fails.
pub fn fine_select_inference(
    db: &AgentDb,
    cands: &CandidateSet,
    job: &NodeJob<'_>,
    task_embedding: &[f64],
    backend: &dyn AgentBackend,
    params: &SelectionParams,
) -> Result<SelectionOutcome, SelectionError> {
    let mut ranked = cands
        .ids()
        .map(|id| Ok((id, quality_score(agent(db, id)?, task_embedding, params)?)))
        .collect::<Result<Vec<_>, SelectionError>>()?;
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    let order: Vec<&str> = ranked.into_iter().map(|(id, _)| id).collect();
    execute_in_order(db, &order, job, backend, params)
}
