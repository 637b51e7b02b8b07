//! Reward signals for subtask answers. Grading is either rule-based against
//! ground truth or delegated to an external scoring model.

use std::collections::BTreeMap;
use std::sync::LazyLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_db::StaticProfile;
use crate::task_graph::{NodeId, SubtaskNode};

pub const DEFAULT_REL_TOLERANCE: f64 = 1e-2;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("scoring endpoint unreachable: {0}")]
    EndpointUnreachable(String),
    #[error("scoring endpoint returned malformed score: {0}")]
    MalformedScore(String),
    #[error("no ground truth for node {0}")]
    MissingGroundTruth(NodeId),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardKind {
    Rule,
    Model,
    Oracle,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSignal {
    pub value: f64,
    pub kind: RewardKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Expected {
    Numeric(f64),
    Option(char),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub node_id: NodeId,
    pub expected: Expected,
    pub rel_tolerance: f64,
}

impl GroundTruth {
    pub fn numeric(node_id: NodeId, value: f64) -> Self {
        Self { node_id, expected: Expected::Numeric(value), rel_tolerance: DEFAULT_REL_TOLERANCE }
    }

    pub fn with_tolerance(mut self, rel_tolerance: f64) -> Self {
        assert!(rel_tolerance > 0.0, "tolerance must be positive");
        self.rel_tolerance = rel_tolerance;
        self
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExtractedAnswer {
    Numeric(f64),
    Option(char),
}

#[derive(Debug, Error, Clone, Copy, PartialEq, Eq)]
#[error("no answer found")]
pub struct NoAnswerFound;

static NUMBER: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"[-+]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][-+]?\d+)?").unwrap());
static SCI_LATEX: LazyLock<Regex> = LazyLock::new(|| {
    Regex::new(r"([-+]?(?:\d+(?:\.\d*)?|\.\d+))\s*\\(?:times|cdot)\s*10\^\{?\s*([-+]?\d+)\s*\}?").unwrap()
});
static OPTION_LABEL: LazyLock<Regex> = LazyLock::new(|| Regex::new(r"^\(?([A-E])\)?$").unwrap());
static OPTION_PHRASE: LazyLock<Regex> =
    LazyLock::new(|| Regex::new(r"(?i)answer is\s*:?\s*\(?([A-E])\)?(?:[^A-Za-z]|$)").unwrap());

/// Contents of the last `\boxed{...}` in `text`, honoring nested braces.
fn last_boxed(text: &str) -> Option<&str> {
    let start = text.rfind("\\boxed{")? + "\\boxed{".len();
    let mut depth = 1usize;
    for (i, ch) in text[start..].char_indices() {
        match ch {
            '{' => depth += 1,
            '}' => {
                depth -= 1;
                if depth == 0 {
                    return Some(&text[start..start + i]);
                }
            }
            _ => {}
        }
    }
    None
}

fn numeric_in(fragment: &str) -> Option<f64> {
    let cleaned = fragment.replace("{,}", "").replace(',', "");
    if let Some(c) = SCI_LATEX.captures(&cleaned) {
        let mantissa: f64 = c[1].parse().ok()?;
        let exp: i32 = c[2].parse().ok()?;
        return Some(mantissa * 10f64.powi(exp));
    }
    NUMBER.find(&cleaned).and_then(|m| m.as_str().parse().ok()).filter(|v: &f64| v.is_finite())
}

/// Final answer of an agent reply: the last boxed expression when present,
/// otherwise the last number (or a stated option letter A to E).
pub fn extract_answer(text: &str) -> Result<ExtractedAnswer, NoAnswerFound> {
    if let Some(boxed) = last_boxed(text) {
        let b = boxed.trim();
        if let Some(c) = OPTION_LABEL.captures(b) {
            return Ok(ExtractedAnswer::Option(c[1].chars().next().unwrap()));
        }
        if let Some(v) = numeric_in(b) {
            return Ok(ExtractedAnswer::Numeric(v));
        }
    }
    if let Some(m) = NUMBER.find_iter(text).last() {
        if let Ok(v) = m.as_str().parse::<f64>() {
            if v.is_finite() {
                return Ok(ExtractedAnswer::Numeric(v));
            }
        }
    }
    if let Some(c) = OPTION_PHRASE.captures_iter(text).last() {
        return Ok(ExtractedAnswer::Option(c[1].chars().next().unwrap()));
    }
    Err(NoAnswerFound)
}

/// Whether `answer` is within `rel_tolerance` of `expected` (inclusive).
pub fn within_tolerance(answer: f64, expected: f64, rel_tolerance: f64) -> bool {
    (answer - expected).abs() <= rel_tolerance * expected.abs().max(1e-12)
}

/// Binary correctness reward.
pub fn rule_reward(answer: &Result<ExtractedAnswer, NoAnswerFound>, truth: &GroundTruth) -> RewardSignal {
    let (value, detail) = match (answer, &truth.expected) {
        (Err(_), _) => (0.0, Some("no answer found".to_string())),
        (Ok(ExtractedAnswer::Numeric(a)), Expected::Numeric(e)) => {
            if within_tolerance(*a, *e, truth.rel_tolerance) {
                (1.0, None)
            } else {
                (0.0, Some(format!("{a} vs expected {e}")))
            }
        }
        (Ok(ExtractedAnswer::Option(a)), Expected::Option(e)) => {
            if a.eq_ignore_ascii_case(e) {
                (1.0, None)
            } else {
                (0.0, Some(format!("option {a} vs expected {e}")))
            }
        }
        (Ok(_), _) => (0.0, Some("answer type does not match ground truth".to_string())),
    };
    RewardSignal { value, kind: RewardKind::Rule, detail }
}

/// Grades against synthesis ground truth keyed by node id.
pub fn oracle_reward(
    truths: &BTreeMap<NodeId, f64>,
    node: &SubtaskNode,
    answer_text: &str,
    rel_tolerance: f64,
) -> Result<RewardSignal, RewardError> {
    let expected = *truths.get(&node.id).ok_or(RewardError::MissingGroundTruth(node.id))?;
    let truth = GroundTruth { node_id: node.id, expected: Expected::Numeric(expected), rel_tolerance };
    let mut s = rule_reward(&extract_answer(answer_text), &truth);
    s.kind = RewardKind::Oracle;
    Ok(s)
}

/// A previous (question, answer) pair given to the scoring model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ContextPair {
    pub question: String,
    pub answer: String,
}

/// Everything a reward model may look at for one candidate answer.
pub struct RewardRequest<'a> {
    pub agent: &'a StaticProfile,
    pub node: &'a SubtaskNode,
    pub context: &'a [ContextPair],
    pub answer_text: &'a str,
    /// Node ground truths, when the dataset carries them.
    pub truths: Option<&'a BTreeMap<NodeId, f64>>,
}

pub trait RewardModel: Send + Sync {
    fn kind(&self) -> RewardKind;
    fn score(&self, request: &RewardRequest<'_>) -> Result<RewardSignal, RewardError>;
}

/// Rule-based binary grading against dataset ground truth.
#[derive(Debug, Clone, Copy)]
pub struct RuleCrm {
    pub rel_tolerance: f64,
}

impl Default for RuleCrm {
    fn default() -> Self {
        Self { rel_tolerance: DEFAULT_REL_TOLERANCE }
    }
}

impl RewardModel for RuleCrm {
    fn kind(&self) -> RewardKind {
        RewardKind::Rule
    }

    fn score(&self, req: &RewardRequest<'_>) -> Result<RewardSignal, RewardError> {
        let expected = req
            .truths
            .and_then(|t| t.get(&req.node.id))
            .copied()
            .ok_or(RewardError::MissingGroundTruth(req.node.id))?;
        let truth = GroundTruth::numeric(req.node.id, expected).with_tolerance(self.rel_tolerance);
        Ok(rule_reward(&extract_answer(req.answer_text), &truth))
    }
}

/// Oracle grading for simulated environments.
#[derive(Debug, Clone, Copy)]
pub struct OracleCrm {
    pub rel_tolerance: f64,
}

impl Default for OracleCrm {
    fn default() -> Self {
        Self { rel_tolerance: DEFAULT_REL_TOLERANCE }
    }
}

impl RewardModel for OracleCrm {
    fn kind(&self) -> RewardKind {
        RewardKind::Oracle
    }

    fn score(&self, req: &RewardRequest<'_>) -> Result<RewardSignal, RewardError> {
        let truths = req.truths.ok_or(RewardError::MissingGroundTruth(req.node.id))?;
        oracle_reward(truths, req.node, req.answer_text, self.rel_tolerance)
    }
}

#[cfg(feature = "http")]
pub use model::{model_reward, ModelCrm};

#[cfg(feature = "http")]
mod model {
    use serde::{Deserialize, Serialize};

    use super::{ContextPair, RewardError, RewardKind, RewardModel, RewardRequest, RewardSignal};
    use crate::agent_db::StaticProfile;
    use crate::backends::http::{post_json, Endpoint};
    use crate::task_graph::SubtaskNode;

    /// Client for an external scoring service: POST JSON
    /// `{agent_profile, question, context, answer}` -> `{score}`.
    #[derive(Debug, Clone)]
    pub struct ModelCrm {
        pub endpoint: Endpoint,
    }

    #[derive(Serialize)]
    struct ScoreRequest<'a> {
        agent_profile: String,
        question: &'a str,
        context: &'a [ContextPair],
        answer: &'a str,
    }

    #[derive(Deserialize)]
    struct ScoreResponse {
        score: f64,
    }

    pub fn model_reward(
        endpoint: &Endpoint,
        agent: &StaticProfile,
        node: &SubtaskNode,
        context: &[ContextPair],
        answer_text: &str,
    ) -> Result<RewardSignal, RewardError> {
        let body = ScoreRequest {
            agent_profile: format!("{} ({}): {}", agent.role, agent.base_model, agent.prompt),
            question: &node.text,
            context,
            answer: answer_text,
        };
        let body = serde_json::to_value(&body).expect("score request serializes");
        let value = post_json(endpoint, "", &body).map_err(|e| match e {
            crate::backends::BackendError::MalformedResponse(m) => RewardError::MalformedScore(m),
            other => RewardError::EndpointUnreachable(other.to_string()),
        })?;
        let resp: ScoreResponse =
            serde_json::from_value(value).map_err(|e| RewardError::MalformedScore(e.to_string()))?;
        if !(0.0..=1.0).contains(&resp.score) {
            return Err(RewardError::MalformedScore(format!("score {} outside [0, 1]", resp.score)));
        }
        Ok(RewardSignal { value: resp.score, kind: RewardKind::Model, detail: None })
    }

    impl RewardModel for ModelCrm {
        fn kind(&self) -> RewardKind {
            RewardKind::Model
        }

        fn score(&self, req: &RewardRequest<'_>) -> Result<RewardSignal, RewardError> {
            model_reward(&self.endpoint, req.agent, req.node, req.context, req.answer_text)
        }
    }
}
