//! Minimal blocking JSON-over-HTTP plumbing shared by the chat, embedding,
//! scoring and decomposer clients.

use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde_json::Value;

use super::BackendError;

pub const DEFAULT_IN_FLIGHT: usize = 8;
pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(60);

/// Counting semaphore bounding concurrent requests to one endpoint.
#[derive(Debug)]
pub struct InFlightLimit {
    permits: Mutex<usize>,
    freed: Condvar,
}

impl InFlightLimit {
    pub fn new(permits: usize) -> Self {
        Self { permits: Mutex::new(permits.max(1)), freed: Condvar::new() }
    }

    pub fn acquire(&self) -> Permit<'_> {
        let mut n = self.permits.lock().unwrap();
        while *n == 0 {
            n = self.freed.wait(n).unwrap();
        }
        *n -= 1;
        Permit(self)
    }
}

pub struct Permit<'a>(&'a InFlightLimit);

impl Drop for Permit<'_> {
    fn drop(&mut self) {
        *self.0.permits.lock().unwrap() += 1;
        self.0.freed.notify_one();
    }
}

#[derive(Debug, Clone)]
pub struct Endpoint {
    pub base_url: String,
    pub api_key: Option<String>,
    pub timeout: Duration,
    pub limit: Arc<InFlightLimit>,
}

impl Endpoint {
    pub fn new(base_url: impl Into<String>) -> Self {
        Self {
            base_url: base_url.into().trim_end_matches('/').to_string(),
            api_key: None,
            timeout: DEFAULT_TIMEOUT,
            limit: Arc::new(InFlightLimit::new(DEFAULT_IN_FLIGHT)),
        }
    }

    pub fn with_api_key(mut self, key: Option<String>) -> Self {
        self.api_key = key;
        self
    }

    pub fn with_timeout(mut self, timeout: Duration) -> Self {
        self.timeout = timeout;
        self
    }

    pub fn with_in_flight(mut self, permits: usize) -> Self {
        self.limit = Arc::new(InFlightLimit::new(permits));
        self
    }

    /// Reads `<PROVIDER>_BASE_URL` and `<PROVIDER>_API_KEY`.
    pub fn from_env(provider: &str) -> Result<Self, BackendError> {
        let prefix = env_prefix(provider);
        let url = std::env::var(format!("{prefix}_BASE_URL"))
            .map_err(|_| BackendError::NotConfigured(format!("{prefix}_BASE_URL is not set")))?;
        Ok(Self::new(url).with_api_key(std::env::var(format!("{prefix}_API_KEY")).ok()))
    }

    pub fn url(&self, path: &str) -> String {
        if path.is_empty() {
            self.base_url.clone()
        } else {
            format!("{}/{}", self.base_url, path.trim_start_matches('/'))
        }
    }
}

/// Upper-cased provider name with non-alphanumerics mapped to `_`.
pub fn env_prefix(provider: &str) -> String {
    provider.chars().map(|c| if c.is_ascii_alphanumeric() { c.to_ascii_uppercase() } else { '_' }).collect()
}

/// One POST attempt; non-2xx statuses surface as [`BackendError::HttpStatus`].
pub fn post_json(endpoint: &Endpoint, path: &str, body: &Value) -> Result<Value, BackendError> {
    let _permit = endpoint.limit.acquire();
    let agent: ureq::Agent =
        ureq::Agent::config_builder().timeout_global(Some(endpoint.timeout)).http_status_as_error(false).build().into();
    let mut req = agent.post(&endpoint.url(path));
    if let Some(key) = &endpoint.api_key {
        req = req.header("Authorization", &format!("Bearer {key}"));
    }
    let mut resp = req.send_json(body).map_err(map_transport)?;
    let status = resp.status().as_u16();
    if !(200..300).contains(&status) {
        return Err(BackendError::HttpStatus(status));
    }
    resp.body_mut().read_json::<Value>().map_err(|e| BackendError::MalformedResponse(e.to_string()))
}

fn map_transport(e: ureq::Error) -> BackendError {
    match e {
        ureq::Error::Timeout(_) => BackendError::Timeout,
        ureq::Error::Io(io) if io.kind() == std::io::ErrorKind::TimedOut => BackendError::Timeout,
        ureq::Error::StatusCode(s) => BackendError::HttpStatus(s),
        other => BackendError::Transport(other.to_string()),
    }
}
