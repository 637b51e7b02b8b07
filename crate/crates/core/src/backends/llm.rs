//! Chat-completion client with bounded retries and token accounting.

use std::collections::BTreeMap;
use std::time::{Duration, Instant};

use serde::Deserialize;
use serde_json::json;

use super::http::{post_json, Endpoint};
use super::prompt::AssembledPrompt;
use super::{AgentBackend, BackendError, ExecutionRequest, ExecutionResult};
use crate::agent_db::StaticProfile;

pub const DEFAULT_MAX_RETRIES: u32 = 2;

#[derive(Debug, Clone)]
pub struct ChatClient {
    pub endpoint: Endpoint,
    pub temperature: f64,
    pub max_retries: u32,
    pub backoff: Duration,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChatReply {
    pub content: String,
    pub tokens: u64,
}

#[derive(Deserialize)]
struct ChatResponse {
    choices: Vec<Choice>,
    #[serde(default)]
    usage: Option<Usage>,
}

#[derive(Deserialize)]
struct Choice {
    message: Message,
}

#[derive(Deserialize)]
struct Message {
    #[serde(default)]
    content: Option<String>,
}

#[derive(Deserialize)]
struct Usage {
    #[serde(default)]
    prompt_tokens: u64,
    #[serde(default)]
    completion_tokens: u64,
}

fn retryable(e: &BackendError) -> bool {
    match e {
        BackendError::Timeout | BackendError::Transport(_) => true,
        BackendError::HttpStatus(s) => *s == 429 || *s >= 500,
        _ => false,
    }
}

impl ChatClient {
    pub fn new(endpoint: Endpoint) -> Self {
        Self { endpoint, temperature: 0.0, max_retries: DEFAULT_MAX_RETRIES, backoff: Duration::from_millis(500) }
    }

    fn chat_once(&self, model: &str, system: &str, user: &str) -> Result<ChatReply, BackendError> {
        let body = json!({
            "model": model,
            "messages": [
                { "role": "system", "content": system },
                { "role": "user", "content": user },
            ],
            "temperature": self.temperature,
        });
        let value = post_json(&self.endpoint, "chat/completions", &body)?;
        let resp: ChatResponse =
            serde_json::from_value(value).map_err(|e| BackendError::MalformedResponse(e.to_string()))?;
        let content = resp
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or_else(|| BackendError::MalformedResponse("no message content".into()))?;
        let tokens = resp.usage.map(|u| u.prompt_tokens + u.completion_tokens).unwrap_or(0);
        Ok(ChatReply { content, tokens })
    }

    /// Sends one chat request, retrying transient failures up to
    /// `max_retries` times with exponential backoff.
    pub fn chat(&self, model: &str, system: &str, user: &str) -> Result<ChatReply, BackendError> {
        let mut attempt = 0;
        loop {
            match self.chat_once(model, system, user) {
                Ok(r) => return Ok(r),
                Err(e) if retryable(&e) && attempt < self.max_retries => {
                    log::warn!("chat attempt {} failed: {e}; retrying", attempt + 1);
                    std::thread::sleep(self.backoff * 2u32.pow(attempt));
                    attempt += 1;
                }
                Err(e) => return Err(e),
            }
        }
    }
}

/// Runs `agent` on `prompt`: system message is the agent's prompt, user
/// message carries the context and subtask. Exhausted retries yield `ok = false`.
pub fn execute_llm(client: &ChatClient, agent: &StaticProfile, prompt: &AssembledPrompt) -> ExecutionResult {
    let start = Instant::now();
    match client.chat(&agent.base_model, &agent.prompt, &prompt.user) {
        Ok(reply) => ExecutionResult {
            answer_text: reply.content,
            tokens: reply.tokens,
            latency: start.elapsed().as_secs_f64(),
            ok: true,
            error: None,
        },
        Err(e) => ExecutionResult::failed(e, 0, start.elapsed().as_secs_f64()),
    }
}

/// Routes each agent to the endpoint of its provider.
#[derive(Debug, Clone, Default)]
pub struct LlmBackend {
    pub clients: BTreeMap<String, ChatClient>,
    pub default_provider: String,
}

impl LlmBackend {
    /// Builds clients from `<PROVIDER>_BASE_URL` / `<PROVIDER>_API_KEY` for
    /// every provider named by `agents` (agents without one use `default_provider`).
    pub fn from_env<'a>(
        agents: impl IntoIterator<Item = &'a StaticProfile>,
        default_provider: &str,
    ) -> Result<Self, BackendError> {
        let mut clients = BTreeMap::new();
        for a in agents {
            let provider = a.provider.clone().unwrap_or_else(|| default_provider.to_string());
            if let std::collections::btree_map::Entry::Vacant(slot) = clients.entry(provider) {
                let ep = Endpoint::from_env(slot.key())?;
                slot.insert(ChatClient::new(ep));
            }
        }
        Ok(Self { clients, default_provider: default_provider.to_string() })
    }
}

impl AgentBackend for LlmBackend {
    fn execute(&self, req: &ExecutionRequest<'_>) -> ExecutionResult {
        let provider = req.agent.provider.as_deref().unwrap_or(&self.default_provider);
        match self.clients.get(provider) {
            Some(client) => execute_llm(client, req.agent, req.prompt),
            None => ExecutionResult::failed(format!("no endpoint for provider {provider}"), 0, 0.0),
        }
    }
}
