//! Blocking client for the session endpoints.

use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::Serialize;

use crate::error::CliError;
use crate::server::{ChainInput, ConfirmRequest, ErrorBody, EventsResponse, SessionView, SubmitRequest};

pub struct Client {
    base: String,
    agent: ureq::Agent,
}

impl Client {
    pub fn new(base: &str) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(120)))
            .http_status_as_error(false)
            .build()
            .into();
        Self { base: base.trim_end_matches('/').to_string(), agent }
    }

    fn decode<T: DeserializeOwned>(mut resp: ureq::http::Response<ureq::Body>) -> Result<T, CliError> {
        let status = resp.status();
        let body = resp.body_mut().read_to_string().map_err(|e| CliError::Server(e.to_string()))?;
        if !status.is_success() {
            let message = serde_json::from_str::<ErrorBody>(&body).map_or(body, |e| e.error);
            return Err(CliError::Server(format!("{status}: {message}")));
        }
        serde_json::from_str(&body).map_err(|e| CliError::Server(format!("bad response: {e}")))
    }

    fn post<B: Serialize, T: DeserializeOwned>(&self, path: &str, body: &B) -> Result<T, CliError> {
        let resp = self.agent.post(&format!("{}{path}", self.base)).send_json(body).map_err(|e| CliError::Server(e.to_string()))?;
        Self::decode(resp)
    }

    fn get<T: DeserializeOwned>(&self, path: &str) -> Result<T, CliError> {
        let resp = self.agent.get(&format!("{}{path}", self.base)).call().map_err(|e| CliError::Server(e.to_string()))?;
        Self::decode(resp)
    }

    pub fn submit(&self, question: &str, graph_document: &str) -> Result<SessionView, CliError> {
        self.post("/sessions", &SubmitRequest { question: question.into(), graph_document: graph_document.into() })
    }

    pub fn confirm(&self, id: &str, chain: Option<&str>) -> Result<SessionView, CliError> {
        let req = ConfirmRequest { chain: chain.map(|c| ChainInput::Text(c.to_string())) };
        self.post(&format!("/sessions/{id}/confirm"), &req)
    }

    pub fn execute(&self, id: &str) -> Result<SessionView, CliError> {
        self.post(&format!("/sessions/{id}/execute"), &serde_json::json!({}))
    }

    pub fn session(&self, id: &str) -> Result<SessionView, CliError> {
        self.get(&format!("/sessions/{id}"))
    }

    pub fn events(&self, id: &str, since: u64) -> Result<EventsResponse, CliError> {
        self.get(&format!("/sessions/{id}/events?since={since}"))
    }
}
