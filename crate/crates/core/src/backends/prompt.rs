//! Collaborative prompt assembly: an agent sees its own system prompt, the
//! upstream questions with the answers other agents produced, and the
//! current subtask with the relations that define its unknowns.

use std::collections::BTreeMap;
use std::fmt;

use super::{format_number, BackendError};
use crate::agent_db::StaticProfile;
use crate::task_graph::{placeholders, NodeAnswer, NodeId, TaskGraph};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AssembledPrompt {
    pub system: String,
    pub user: String,
}

impl fmt::Display for AssembledPrompt {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}\n\n{}", self.system, self.user)
    }
}

fn render_answer(a: &NodeAnswer) -> String {
    match a.value {
        Some(v) => format_number(v),
        None => a.text.trim().to_string(),
    }
}

/// Builds the prompt for `node_id`. Upstream context covers every ancestor,
/// in topological order.
pub fn assemble_prompt(
    agent: &StaticProfile,
    graph: &TaskGraph,
    node_id: NodeId,
    answers: &BTreeMap<NodeId, NodeAnswer>,
) -> Result<AssembledPrompt, BackendError> {
    let node = graph.node(node_id).ok_or(BackendError::UnknownNode(node_id))?;
    let incoming = graph.incoming(node_id);
    for ph in placeholders(&node.text) {
        let defined = incoming.iter().any(|e| placeholders(&e.relation_text).contains(&ph));
        if !defined {
            return Err(BackendError::UnresolvedPlaceholder { node: node_id, placeholder: ph.to_string() });
        }
    }

    let ancestors = graph.ancestors(node_id);
    let mut user = String::new();
    if !ancestors.is_empty() {
        user.push_str("Previous questions and answers:\n");
        for id in graph.topological_order()?.into_iter().filter(|id| ancestors.contains(id)) {
            let answer = answers.get(&id).ok_or(BackendError::MissingUpstream { node: node_id, upstream: id })?;
            let question = &graph.node(id).expect("ancestor exists").text;
            user.push_str(&format!("Question {id}: {question}\nAnswer[{id}] = {}\n", render_answer(answer)));
        }
        user.push_str("\nCurrent question:\n");
    }
    user.push_str(&node.text);
    let relations: Vec<&str> = incoming.iter().map(|e| e.relation_text.trim()).filter(|t| !t.is_empty()).collect();
    if !relations.is_empty() {
        user.push_str("\nWhere: ");
        user.push_str(&relations.join("; "));
    }
    Ok(AssembledPrompt { system: agent.prompt.clone(), user })
}
