//! The dynamic agent database.
//!
//! Each agent carries a static profile (model, role, prompt, tools and a
//! unit-norm profile embedding) and a dynamic profile learned from rewards:
//! running mean reward `R`, running mean normalized cost `C`, and selection
//! count `n`. The preliminary quality of an agent for a subtask is
//! `Q = sim · perform`, where `perform = R − β·C`.

use std::collections::{BTreeMap, BTreeSet};

use ini::{Ini, ParseOption};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backends::embed::{dot, Embedder};
use crate::backends::sim::SimulatedAgentSpec;
use crate::backends::BackendError;

pub const SNAPSHOT_VERSION: &str = "agent-db/1";
pub const INITIAL_REWARD: f64 = 0.5;
pub const INITIAL_COST: f64 = 0.0;
pub const DEFAULT_TOKEN_SCALE: f64 = 10_000.0;
/// INI section reserved for run configuration.
pub const RUN_SECTION: &str = "run";

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DbError {
    #[error("duplicate agent id {0:?}")]
    DuplicateAgentId(String),
    #[error("agent {agent:?} is missing field {field:?}")]
    MissingField { agent: String, field: &'static str },
    #[error("agent database is empty")]
    EmptyDatabase,
    #[error("embedding dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("embedding of {0:?} is not unit norm")]
    NotUnitNorm(String),
    #[error("reward {0} is outside [0, 1]")]
    RewardOutOfRange(f64),
    #[error("cost {0} is negative or not finite")]
    NegativeCost(f64),
    #[error("unknown agent {0:?}")]
    UnknownAgent(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("unsupported snapshot version {0:?}")]
    VersionMismatch(String),
    #[error("invalid selection parameters: {0}")]
    InvalidParams(String),
    #[error("embedding failed: {0}")]
    Embedding(#[from] BackendError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StaticProfile {
    pub agent_id: String,
    pub base_model: String,
    pub role: String,
    pub prompt: String,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default)]
    pub profile_embedding: Vec<f64>,
    /// Endpoint provider name; `None` uses the run default.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
}

impl StaticProfile {
    /// Text whose embedding represents the agent.
    pub fn profile_text(&self) -> String {
        format!("{}\n{}", self.role, self.prompt)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DynamicProfile {
    pub avg_reward: f64,
    pub avg_cost: f64,
    pub count: u64,
}

impl Default for DynamicProfile {
    fn default() -> Self {
        Self { avg_reward: INITIAL_REWARD, avg_cost: INITIAL_COST, count: 0 }
    }
}

/// Folds one reward into the running mean and bumps the count.
pub fn update_reward(agent: DynamicProfile, r: f64) -> Result<DynamicProfile, DbError> {
    if !(0.0..=1.0).contains(&r) {
        return Err(DbError::RewardOutOfRange(r));
    }
    let n = agent.count as f64;
    Ok(DynamicProfile { avg_reward: (n * agent.avg_reward + r) / (n + 1.0), count: agent.count + 1, ..agent })
}

/// Folds one cost into the running mean using the pre-update count; the
/// count itself is left to [`update_reward`].
pub fn update_cost(agent: DynamicProfile, cost: f64) -> Result<DynamicProfile, DbError> {
    if !(cost.is_finite() && cost >= 0.0) {
        return Err(DbError::NegativeCost(cost));
    }
    let n = agent.count as f64;
    Ok(DynamicProfile { avg_cost: (n * agent.avg_cost + cost) / (n + 1.0), ..agent })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentProfile {
    #[serde(rename = "static")]
    pub static_profile: StaticProfile,
    pub dynamic: DynamicProfile,
}

impl AgentProfile {
    pub fn id(&self) -> &str {
        &self.static_profile.agent_id
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum SimilarityMode {
    /// `1` when `⟨q, a⟩ ≥ v_th`, else `0`.
    #[default]
    Heaviside,
    /// `similarity_weight · max(0, ⟨q, a⟩)`.
    Weighted,
}

/// What `N` in the exploration term counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum ExplorationScope {
    /// All selections across every node and task.
    #[default]
    Global,
    /// Selections made on nodes sharing the current node's domain label.
    PerDomain,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SelectionParams {
    pub v_th: f64,
    pub beta: f64,
    pub c_explore: f64,
    pub epsilon: f64,
    pub top_k: usize,
    pub similarity_weight: f64,
    pub reputation_weight: f64,
    pub cost_weight: f64,
    pub similarity_mode: SimilarityMode,
    pub exploration_scope: ExplorationScope,
    /// Tokens per unit of normalized cost.
    pub token_scale: f64,
}

impl Default for SelectionParams {
    fn default() -> Self {
        Self {
            v_th: 0.6,
            beta: 1.0,
            c_explore: 0.3,
            epsilon: 1e-6,
            top_k: 3,
            similarity_weight: 0.6,
            reputation_weight: 1.0,
            cost_weight: 1.0,
            similarity_mode: SimilarityMode::Heaviside,
            exploration_scope: ExplorationScope::Global,
            token_scale: DEFAULT_TOKEN_SCALE,
        }
    }
}

impl SelectionParams {
    pub fn validate(&self) -> Result<(), DbError> {
        let bad = |m: &str| Err(DbError::InvalidParams(m.to_string()));
        if !(-1.0..=1.0).contains(&self.v_th) {
            return bad("v_th must lie in [-1, 1]");
        }
        if self.top_k < 1 {
            return bad("top_k must be at least 1");
        }
        if !(self.epsilon > 0.0) {
            return bad("epsilon must be positive");
        }
        if !(self.token_scale > 0.0) {
            return bad("token_scale must be positive");
        }
        if !(self.c_explore >= 0.0) {
            return bad("c_explore must be non-negative");
        }
        Ok(())
    }

    pub fn normalized_cost(&self, tokens: u64) -> f64 {
        tokens as f64 / self.token_scale
    }
}

pub fn similarity(task_embedding: &[f64], agent: &StaticProfile, params: &SelectionParams) -> Result<f64, DbError> {
    if task_embedding.len() != agent.profile_embedding.len() {
        return Err(DbError::DimensionMismatch { expected: agent.profile_embedding.len(), got: task_embedding.len() });
    }
    let cos = dot(task_embedding, &agent.profile_embedding);
    Ok(similarity_from_cosine(cos, params))
}

pub fn similarity_from_cosine(cos: f64, params: &SelectionParams) -> f64 {
    match params.similarity_mode {
        SimilarityMode::Heaviside => {
            if cos >= params.v_th {
                1.0
            } else {
                0.0
            }
        }
        SimilarityMode::Weighted => params.similarity_weight * cos.max(0.0),
    }
}

pub fn perform(agent: &DynamicProfile, params: &SelectionParams) -> f64 {
    params.reputation_weight * agent.avg_reward - params.beta * params.cost_weight * agent.avg_cost
}

pub fn quality_score(agent: &AgentProfile, task_embedding: &[f64], params: &SelectionParams) -> Result<f64, DbError> {
    Ok(similarity(task_embedding, &agent.static_profile, params)? * perform(&agent.dynamic, params))
}

/// In-memory agent database plus the selection counters feeding exploration.
#[derive(Debug, Clone, PartialEq)]
pub struct AgentDb {
    dimension: usize,
    agents: Vec<AgentProfile>,
    total_selections: u64,
    domain_selections: BTreeMap<String, u64>,
}

impl AgentDb {
    pub fn new(dimension: usize, statics: Vec<StaticProfile>) -> Result<Self, DbError> {
        if statics.is_empty() {
            return Err(DbError::EmptyDatabase);
        }
        let mut seen = BTreeSet::new();
        for s in &statics {
            if !seen.insert(s.agent_id.clone()) {
                return Err(DbError::DuplicateAgentId(s.agent_id.clone()));
            }
            check_embedding(dimension, s)?;
        }
        Ok(Self {
            dimension,
            agents: statics
                .into_iter()
                .map(|s| AgentProfile { static_profile: s, dynamic: DynamicProfile::default() })
                .collect(),
            total_selections: 0,
            domain_selections: BTreeMap::new(),
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn len(&self) -> usize {
        self.agents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.agents.is_empty()
    }

    pub fn agents(&self) -> &[AgentProfile] {
        &self.agents
    }

    pub fn get(&self, agent_id: &str) -> Option<&AgentProfile> {
        self.agents.iter().find(|a| a.id() == agent_id)
    }

    pub fn total_selections(&self) -> u64 {
        self.total_selections
    }

    /// `N` for the exploration term under `scope`.
    pub fn selections(&self, scope: ExplorationScope, domain: Option<&str>) -> u64 {
        match (scope, domain) {
            (ExplorationScope::PerDomain, Some(d)) => self.domain_selections.get(d).copied().unwrap_or(0),
            _ => self.total_selections,
        }
    }

    /// Applies one (reward, cost) observation atomically: both means move
    /// together and the selection counters advance by one.
    pub fn record(&mut self, agent_id: &str, reward: f64, cost: f64, domain: Option<&str>) -> Result<(), DbError> {
        let agent = self
            .agents
            .iter_mut()
            .find(|a| a.static_profile.agent_id == agent_id)
            .ok_or_else(|| DbError::UnknownAgent(agent_id.to_string()))?;
        let with_cost = update_cost(agent.dynamic, cost)?;
        let updated = update_reward(with_cost, reward)?;
        agent.dynamic = updated;
        self.total_selections += 1;
        if let Some(d) = domain {
            *self.domain_selections.entry(d.to_string()).or_default() += 1;
        }
        Ok(())
    }

    pub fn snapshot(&self) -> String {
        let snap = Snapshot {
            version: SNAPSHOT_VERSION.to_string(),
            embedding_dim: self.dimension,
            total_selections: self.total_selections,
            domain_selections: self.domain_selections.clone(),
            static_profiles: self.agents.iter().map(|a| a.static_profile.clone()).collect(),
            dynamic: self.agents.iter().map(|a| (a.id().to_string(), a.dynamic)).collect(),
        };
        serde_json::to_string_pretty(&snap).expect("snapshot serializes")
    }

    pub fn restore(document: &str) -> Result<Self, DbError> {
        let raw: serde_json::Value = serde_json::from_str(document).map_err(|e| DbError::Parse(e.to_string()))?;
        match raw.get("version").and_then(|v| v.as_str()) {
            Some(SNAPSHOT_VERSION) => {}
            Some(other) => return Err(DbError::VersionMismatch(other.to_string())),
            None => return Err(DbError::Parse("missing version tag".into())),
        }
        let snap: Snapshot = serde_json::from_value(raw).map_err(|e| DbError::Parse(e.to_string()))?;
        let mut db = AgentDb::new(snap.embedding_dim, snap.static_profiles)?;
        for a in &mut db.agents {
            let d = snap
                .dynamic
                .get(&a.static_profile.agent_id)
                .ok_or_else(|| DbError::Parse(format!("no dynamic profile for {}", a.static_profile.agent_id)))?;
            if !(0.0..=1.0).contains(&d.avg_reward) || !(d.avg_cost >= 0.0) {
                return Err(DbError::Parse(format!("dynamic profile of {} out of range", a.static_profile.agent_id)));
            }
            a.dynamic = *d;
        }
        db.total_selections = snap.total_selections;
        db.domain_selections = snap.domain_selections;
        Ok(db)
    }
}

fn check_embedding(dimension: usize, s: &StaticProfile) -> Result<(), DbError> {
    if s.profile_embedding.len() != dimension {
        return Err(DbError::DimensionMismatch { expected: dimension, got: s.profile_embedding.len() });
    }
    let norm = dot(&s.profile_embedding, &s.profile_embedding).sqrt();
    if (norm - 1.0).abs() > 1e-6 {
        return Err(DbError::NotUnitNorm(s.agent_id.clone()));
    }
    Ok(())
}

#[derive(Serialize, Deserialize)]
struct Snapshot {
    version: String,
    embedding_dim: usize,
    total_selections: u64,
    #[serde(default)]
    domain_selections: BTreeMap<String, u64>,
    #[serde(rename = "static")]
    static_profiles: Vec<StaticProfile>,
    dynamic: BTreeMap<String, DynamicProfile>,
}

/// One agent as written in a pool configuration file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEntry {
    pub agent_id: String,
    pub base_model: String,
    pub role: String,
    pub prompt: String,
    #[serde(default)]
    pub tools: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub profile_embedding: Option<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub provider: Option<String>,
    /// Present when the agent can be simulated.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub simulation: Option<SimulationKeys>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationKeys {
    pub skill: BTreeMap<String, f64>,
    #[serde(default = "default_cost_tokens")]
    pub cost_tokens: f64,
    #[serde(default = "default_noise_scale")]
    pub noise_scale: f64,
}

fn default_cost_tokens() -> f64 {
    1000.0
}

fn default_noise_scale() -> f64 {
    0.5
}

impl AgentEntry {
    pub fn simulated_spec(&self) -> Option<SimulatedAgentSpec> {
        self.simulation.as_ref().map(|s| SimulatedAgentSpec {
            agent_id: self.agent_id.clone(),
            skill: s.skill.clone(),
            cost_tokens: s.cost_tokens,
            noise_scale: s.noise_scale,
        })
    }
}

/// Parses an agent pool in JSON (array of objects) or INI form. The
/// `[run]` INI section is skipped.
///
/// INI sections look like
///
/// ```ini
/// [mech-1]
/// model = small-chat
/// role = Mechanics solver
/// prompt = Work out forces, motion and energy; state units.
/// ```
///
/// with optional `tools = a, b`, `provider = NAME`, and, for simulation,
/// `skills = mechanics:0.9, optics:0.5`, `cost_tokens = 800`, `noise_scale = 0.5`.
pub fn parse_agent_config(document: &str) -> Result<Vec<AgentEntry>, DbError> {
    let entries = if document.trim_start().starts_with('[') && looks_like_json(document) {
        serde_json::from_str::<Vec<AgentEntry>>(document).map_err(|e| DbError::Parse(e.to_string()))?
    } else {
        parse_ini_agents(document)?
    };
    let mut seen = BTreeSet::new();
    for e in &entries {
        if !seen.insert(e.agent_id.as_str()) {
            return Err(DbError::DuplicateAgentId(e.agent_id.clone()));
        }
        for (field, value) in [("model", &e.base_model), ("role", &e.role), ("prompt", &e.prompt)] {
            if value.trim().is_empty() {
                return Err(DbError::MissingField { agent: e.agent_id.clone(), field });
            }
        }
    }
    if entries.is_empty() {
        return Err(DbError::EmptyDatabase);
    }
    Ok(entries)
}

fn looks_like_json(document: &str) -> bool {
    // INI section headers never follow '[' with '{', ']' or whitespace-then-'{'
    let rest = document.trim_start()[1..].trim_start();
    rest.starts_with('{') || rest.starts_with(']')
}

fn ini_options() -> ParseOption {
    ParseOption { enabled_quote: false, enabled_escape: false, ..ParseOption::default() }
}

/// Loads an INI document; shared with the CLI's `[run]` section reader.
pub fn load_ini(document: &str) -> Result<Ini, DbError> {
    Ini::load_from_str_opt(document, ini_options()).map_err(|e| DbError::Parse(e.to_string()))
}

fn parse_ini_agents(document: &str) -> Result<Vec<AgentEntry>, DbError> {
    let ini = load_ini(document)?;
    let mut out = Vec::new();
    for (section, props) in ini.iter() {
        let Some(id) = section else { continue };
        if id == RUN_SECTION {
            continue;
        }
        let get = |k: &str| props.get(k).map(str::trim).unwrap_or("").to_string();
        let list = |k: &str| -> Vec<String> {
            props
                .get(k)
                .map(|v| v.split(',').map(str::trim).filter(|s| !s.is_empty()).map(String::from).collect())
                .unwrap_or_default()
        };
        let simulation = match props.get("skills") {
            Some(raw) => {
                let mut skill = BTreeMap::new();
                for pair in raw.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let (d, p) = pair
                        .rsplit_once(':')
                        .ok_or_else(|| DbError::Parse(format!("[{id}] skills entry {pair:?} is not domain:prob")))?;
                    let p: f64 =
                        p.trim().parse().map_err(|_| DbError::Parse(format!("[{id}] bad probability in {pair:?}")))?;
                    skill.insert(d.trim().to_string(), p);
                }
                let num = |k: &str, default: f64| -> Result<f64, DbError> {
                    match props.get(k) {
                        Some(v) => v.trim().parse().map_err(|_| DbError::Parse(format!("[{id}] bad {k}"))),
                        None => Ok(default),
                    }
                };
                Some(SimulationKeys {
                    skill,
                    cost_tokens: num("cost_tokens", default_cost_tokens())?,
                    noise_scale: num("noise_scale", default_noise_scale())?,
                })
            }
            None => None,
        };
        out.push(AgentEntry {
            agent_id: id.to_string(),
            base_model: get("model"),
            role: get("role"),
            prompt: get("prompt"),
            tools: list("tools"),
            profile_embedding: None,
            provider: props.get("provider").map(|p| p.trim().to_string()),
            simulation,
        });
    }
    Ok(out)
}

/// Builds a fresh database from a pool configuration. Profiles without a
/// stored embedding are embedded from their role and prompt.
pub fn load_agents(document: &str, embedder: &dyn Embedder) -> Result<AgentDb, DbError> {
    let entries = parse_agent_config(document)?;
    db_from_entries(&entries, embedder)
}

pub fn db_from_entries(entries: &[AgentEntry], embedder: &dyn Embedder) -> Result<AgentDb, DbError> {
    let mut statics = Vec::with_capacity(entries.len());
    for e in entries {
        let mut s = StaticProfile {
            agent_id: e.agent_id.clone(),
            base_model: e.base_model.clone(),
            role: e.role.clone(),
            prompt: e.prompt.clone(),
            tools: e.tools.clone(),
            profile_embedding: Vec::new(),
            provider: e.provider.clone(),
        };
        s.profile_embedding = match &e.profile_embedding {
            Some(v) => v.clone(),
            None => embedder.embed(&s.profile_text())?,
        };
        statics.push(s);
    }
    AgentDb::new(embedder.dimension(), statics)
}

#[cfg(test)]
pub(crate) mod tests {
    use proptest::prelude::*;

    use super::*;
    use crate::backends::embed::LocalHashEmbedder;

    pub(crate) fn profile(id: &str) -> StaticProfile {
        StaticProfile {
            agent_id: id.to_string(),
            base_model: "gpt-4o".into(),
            role: "Expert".into(),
            prompt: format!("You are agent {id}."),
            tools: vec![],
            profile_embedding: vec![1.0, 0.0],
            provider: None,
        }
    }

    fn with_dynamic(r: f64, c: f64, n: u64) -> DynamicProfile {
        DynamicProfile { avg_reward: r, avg_cost: c, count: n }
    }

    /// Unit vector at angle acos(cos) from (1, 0).
    fn task(cos: f64) -> Vec<f64> {
        vec![cos, (1.0 - cos * cos).sqrt()]
    }

    #[test]
    fn similarity_modes() {
        let a = profile("a");
        let p = SelectionParams::default();
        assert_eq!(similarity(&task(0.7), &a, &p).unwrap(), 1.0);
        assert_eq!(similarity(&task(0.5), &a, &p).unwrap(), 0.0);
        let w = SelectionParams { similarity_mode: SimilarityMode::Weighted, ..p };
        assert!((similarity(&task(0.5), &a, &w).unwrap() - 0.30).abs() < 1e-12);
        assert!(matches!(similarity(&[1.0, 0.0, 0.0], &a, &p), Err(DbError::DimensionMismatch { .. })));
    }

    #[test]
    fn perform_values() {
        let p = SelectionParams::default();
        assert!((perform(&with_dynamic(0.8, 0.1, 3), &p) - 0.7).abs() < 1e-12);
        assert_eq!(perform(&with_dynamic(0.0, 0.0, 0), &p), 0.0);
        assert!((perform(&with_dynamic(0.5, 1.0, 3), &p) + 0.5).abs() < 1e-12);
    }

    #[test]
    fn quality_values() {
        let p = SelectionParams::default();
        let mut a = AgentProfile { static_profile: profile("a"), dynamic: with_dynamic(0.8, 0.1, 3) };
        assert!((quality_score(&a, &task(0.9), &p).unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(quality_score(&a, &task(0.1), &p).unwrap(), 0.0);
        a.dynamic = with_dynamic(0.5, 1.0, 3);
        assert!((quality_score(&a, &task(0.9), &p).unwrap() + 0.5).abs() < 1e-12);
    }

    #[test]
    fn reward_and_cost_updates() {
        let d = update_reward(with_dynamic(0.5, 0.0, 2), 1.0).unwrap();
        assert!((d.avg_reward - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(d.count, 3);
        let d = update_reward(DynamicProfile::default(), 0.7).unwrap();
        assert_eq!((d.avg_reward, d.count), (0.7, 1));
        let d = update_reward(with_dynamic(0.25, 0.0, 9), 0.25).unwrap();
        assert_eq!(d.avg_reward, 0.25);
        assert_eq!(update_reward(DynamicProfile::default(), 1.5), Err(DbError::RewardOutOfRange(1.5)));

        let d = update_cost(with_dynamic(0.5, 0.2, 1), 0.4).unwrap();
        assert!((d.avg_cost - 0.3).abs() < 1e-15);
        assert_eq!(d.count, 1);
        assert_eq!(update_cost(DynamicProfile::default(), 0.9).unwrap().avg_cost, 0.9);
        assert_eq!(update_cost(with_dynamic(0.5, 0.125, 5), 0.125).unwrap().avg_cost, 0.125);
        assert_eq!(update_cost(DynamicProfile::default(), -1.0), Err(DbError::NegativeCost(-1.0)));
    }

    proptest! {
        #[test]
        fn running_mean_matches_arithmetic_mean(rewards in prop::collection::vec(0.0f64..=1.0, 1..200)) {
            let d = rewards.iter().fold(DynamicProfile::default(), |d, &r| update_reward(d, r).unwrap());
            let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
            prop_assert!((d.avg_reward - mean).abs() <= 1e-9);
            let mut rev = rewards.clone();
            rev.reverse();
            let d2 = rev.iter().fold(DynamicProfile::default(), |d, &r| update_reward(d, r).unwrap());
            prop_assert!((d.avg_reward - d2.avg_reward).abs() <= 1e-9);
        }

        #[test]
        fn gate_zeroes_quality(r in 0.0f64..=1.0, c in 0.0f64..5.0, cos in -1.0f64..0.599) {
            let a = AgentProfile { static_profile: profile("a"), dynamic: with_dynamic(r, c, 4) };
            prop_assert_eq!(quality_score(&a, &task(cos), &SelectionParams::default()).unwrap(), 0.0);
        }

        #[test]
        fn ranking_is_scale_invariant(
            perf in prop::collection::vec((0.0f64..=1.0, 0.0f64..1.0), 2..8),
            scale in 0.1f64..10.0,
        ) {
            let p = SelectionParams::default();
            let scaled = SelectionParams { reputation_weight: scale, cost_weight: 1.0, beta: scale, ..p };
            let q = |params: &SelectionParams| -> Vec<f64> {
                perf.iter().map(|&(r, c)| perform(&with_dynamic(r, c, 1), params)).collect()
            };
            let (base, big) = (q(&p), q(&scaled));
            for i in 0..base.len() {
                for j in 0..base.len() {
                    if (base[i] - base[j]).abs() > 1e-9 {
                        prop_assert_eq!(base[i] > base[j], big[i] > big[j]);
                    }
                }
            }
        }
    }

    const SAMPLE_POOL: &str = "\
[mech-1]
model = small-chat
role = Mechanics solver
prompt = Work out forces, motion and energy; state units; then apply Newton's laws.

[em-1]
model = small-chat
role = Circuits solver
prompt = Solve resistor, capacitor and field problems step by step.

[thermo-1]
model = large-chat
role = Heat and optics solver
prompt = Handle heat flow, gas laws, lenses and mirrors.

[inorg-1]
model = large-chat
role = Inorganic chemistry solver
prompt = Balance reactions and compute amounts of substance.

[org-1]
model = large-chat
role = Organic chemistry solver
prompt = Reason about functional groups and reaction yields.
";

    #[test]
    fn loads_ini_pool() {
        let db = load_agents(SAMPLE_POOL, &LocalHashEmbedder::default()).unwrap();
        assert_eq!(db.len(), 5);
        assert!(db.agents().iter().all(|a| a.dynamic == DynamicProfile::default()));
        let a1 = db.get("mech-1").unwrap();
        assert_eq!(a1.static_profile.role, "Mechanics solver");
        assert!(a1.static_profile.prompt.ends_with("then apply Newton's laws."));
    }

    #[test]
    fn config_errors() {
        let e = LocalHashEmbedder::default();
        assert_eq!(load_agents("", &e), Err(DbError::EmptyDatabase));
        let dup = "[a]\nmodel=m\nrole=r\nprompt=p\n[a]\nmodel=m\nrole=r\nprompt=p\n";
        assert_eq!(load_agents(dup, &e), Err(DbError::DuplicateAgentId("a".into())));
        let missing = "[a]\nmodel=m\nprompt=p\n";
        assert_eq!(load_agents(missing, &e), Err(DbError::MissingField { agent: "a".into(), field: "role" }));
        let with_run = "[run]\nseed = 3\n[a]\nmodel=m\nrole=r\nprompt=p\nskills = optics:0.9, chemistry:0.5\n";
        let entries = parse_agent_config(with_run).unwrap();
        assert_eq!(entries.len(), 1);
        assert_eq!(entries[0].simulated_spec().unwrap().skill["optics"], 0.9);
    }

    #[test]
    fn loads_json_pool() {
        let doc = r#"[{"agent_id":"x","base_model":"m","role":"r","prompt":"p","tools":["calc"]},
                      {"agent_id":"y","base_model":"m","role":"r","prompt":"q","profile_embedding":[0.6,0.8]}]"#;
        let entries = parse_agent_config(doc).unwrap();
        assert_eq!(entries[0].tools, vec!["calc"]);
        // stored embedding with wrong dimension is rejected
        assert!(matches!(load_agents(doc, &LocalHashEmbedder::default()), Err(DbError::DimensionMismatch { .. })));
    }

    #[test]
    fn snapshot_round_trip() {
        let mut db = AgentDb::new(2, vec![profile("a"), profile("b")]).unwrap();
        assert_eq!(AgentDb::restore(&db.snapshot()).unwrap(), db);
        for i in 0..100u32 {
            let r = f64::from(i % 7) / 7.0;
            db.record(if i % 3 == 0 { "a" } else { "b" }, r, 0.013 * f64::from(i), Some("optics")).unwrap();
        }
        let restored = AgentDb::restore(&db.snapshot()).unwrap();
        assert_eq!(restored, db);
        assert_eq!(restored.get("b").unwrap().dynamic, db.get("b").unwrap().dynamic);
        assert_eq!(restored.total_selections(), 100);

        let bumped = db.snapshot().replace(SNAPSHOT_VERSION, "agent-db/99");
        assert_eq!(AgentDb::restore(&bumped), Err(DbError::VersionMismatch("agent-db/99".into())));
        assert!(matches!(AgentDb::restore("{not json"), Err(DbError::Parse(_))));
    }

    #[test]
    fn record_moves_reward_and_cost_together() {
        let mut db = AgentDb::new(2, vec![profile("a")]).unwrap();
        db.record("a", 1.0, 0.2, None).unwrap();
        db.record("a", 0.0, 0.4, None).unwrap();
        let d = db.get("a").unwrap().dynamic;
        assert_eq!(d.count, 2);
        assert!((d.avg_reward - 0.5).abs() < 1e-15);
        assert!((d.avg_cost - 0.3).abs() < 1e-15);
        // a rejected reward leaves the profile untouched
        assert!(db.record("a", 2.0, 0.1, None).is_err());
        assert_eq!(db.get("a").unwrap().dynamic, d);
        assert_eq!(db.record("zz", 1.0, 0.0, None), Err(DbError::UnknownAgent("zz".into())));
    }
}
