//! Question -> task graph decomposition.

use super::BackendError;
use crate::task_graph::TaskGraph;

pub trait Decomposer: Send + Sync {
    /// `stored` is the dataset's own graph, when it carries one.
    fn decompose(&self, question: &str, stored: Option<&TaskGraph>) -> Result<TaskGraph, BackendError>;
}

/// Returns the dataset's ground-truth graph verbatim.
#[derive(Debug, Clone, Copy, Default)]
pub struct StoredGraphDecomposer;

impl Decomposer for StoredGraphDecomposer {
    fn decompose(&self, _question: &str, stored: Option<&TaskGraph>) -> Result<TaskGraph, BackendError> {
        let graph = stored
            .cloned()
            .ok_or_else(|| BackendError::EndpointUnreachable("no decomposer endpoint and no stored graph".into()))?;
        graph.validate()?;
        Ok(graph)
    }
}

/// Instruction sent to a decomposer model.
pub const PLAN_PROMPT: &str = r#"You split a composite question into smaller subtasks for a team of expert agents.

Return a single JSON object and nothing else, with this shape:
{"nodes": [{"id": 1, "text": "...", "target_profile": "...", "unknowns": ["UNK_0"]}],
 "edges": [{"from": 1, "to": 2, "relation_text": "in this question, UNK_0 = Answer[1] + 3"}],
 "final_node": 3}

Rules:
- Every subtask is self-contained except for placeholders named UNK_<n>; list each placeholder a subtask uses in its "unknowns".
- An edge from -> to means the answer of "from" is needed by "to"; its relation_text states how a placeholder is computed from that answer.
- The graph must be acyclic and end in exactly one final subtask that combines the results and asks for the answer in \boxed{}.
- "target_profile" is one sentence naming the specialist field and the techniques the subtask calls for, e.g. "Specialist in DC circuits: Ohm's law, series and parallel resistance.""#;

/// Pulls the outermost `{...}` object out of a model reply (which may wrap
/// it in prose or a code fence).
pub fn extract_json_object(text: &str) -> Option<&str> {
    let start = text.find('{')?;
    let end = text.rfind('}')?;
    (end > start).then(|| &text[start..=end])
}

#[cfg(feature = "http")]
pub use chat::ChatDecomposer;

#[cfg(feature = "http")]
mod chat {
    use super::{extract_json_object, Decomposer, PLAN_PROMPT};
    use crate::backends::llm::ChatClient;
    use crate::backends::BackendError;
    use crate::task_graph::{parse_task_graph, GraphError, TaskGraph};

    #[derive(Debug, Clone)]
    pub struct ChatDecomposer {
        pub client: ChatClient,
        pub model: String,
    }

    impl Decomposer for ChatDecomposer {
        fn decompose(&self, question: &str, _stored: Option<&TaskGraph>) -> Result<TaskGraph, BackendError> {
            let reply = self.client.chat(&self.model, PLAN_PROMPT, question).map_err(|e| match e {
                BackendError::MalformedResponse(_) => e,
                other => BackendError::EndpointUnreachable(other.to_string()),
            })?;
            let doc = extract_json_object(&reply.content)
                .ok_or_else(|| GraphError::Parse("reply contains no JSON object".into()))?;
            Ok(parse_task_graph(doc)?)
        }
    }
}
