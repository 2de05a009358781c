//! HTTP clients for the external generator and scorer services.

use std::time::Duration;

use oversight_core::checkpoints::{ScorerPort, ScorerRequest};
use oversight_core::generation::{GeneratorPort, GeneratorRequest, PortError};
use serde::Serialize;
use ureq::Agent;

pub const DEFAULT_TIMEOUT: Duration = Duration::from_secs(30);

/// POSTs JSON to a fixed URL and returns the body of a 2xx response.
#[derive(Debug, Clone)]
pub struct HttpPort {
    url: String,
    agent: Agent,
}

impl HttpPort {
    pub fn new(url: impl Into<String>, timeout: Duration) -> Self {
        let agent: Agent = Agent::config_builder().timeout_global(Some(timeout)).build().into();
        HttpPort { url: url.into(), agent }
    }

    fn post<T: Serialize>(&self, body: &T) -> Result<String, PortError> {
        let payload = serde_json::to_string(body).map_err(|e| PortError::Transport(e.to_string()))?;
        let mut response = self
            .agent
            .post(&self.url)
            .header("content-type", "application/json")
            .send(payload)
            .map_err(|e| match e {
                ureq::Error::Timeout(_) => PortError::Timeout,
                other => PortError::Transport(other.to_string()),
            })?;
        response
            .body_mut()
            .read_to_string()
            .map_err(|e| PortError::Transport(e.to_string()))
    }
}

impl GeneratorPort for HttpPort {
    fn generate(&self, request: &GeneratorRequest) -> Result<String, PortError> {
        self.post(request)
    }
}

impl ScorerPort for HttpPort {
    fn call(&self, request: &ScorerRequest) -> Result<String, PortError> {
        self.post(request)
    }
}
