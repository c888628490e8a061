use std::collections::BTreeMap;
use std::time::Duration;

use async_trait::async_trait;
use serde_json::Value;
use thiserror::Error;

use super::Role;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TransportError {
    /// Connection failure or 5xx; worth retrying.
    #[error("unavailable: {0}")]
    Unavailable(String),
    /// 4xx; the request itself was refused.
    #[error("rejected: {0}")]
    Rejected(String),
    /// The body was not JSON.
    #[error("malformed body: {0}")]
    Malformed(String),
}

/// Moves one JSON request to a role's backend and returns its JSON reply.
#[async_trait]
pub trait Transport: Send + Sync {
    async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError>;

    /// Identifier recorded in sample provenance.
    fn backend_id(&self, role: Role) -> String;
}

/// `POST {base_url}/v1/{role}` over HTTP.
pub struct HttpTransport {
    client: reqwest::Client,
    base_urls: BTreeMap<Role, String>,
    bearer: Option<String>,
}

impl HttpTransport {
    pub fn new(base_urls: BTreeMap<Role, String>, bearer: Option<String>) -> Self {
        let client = reqwest::Client::builder()
            .connect_timeout(Duration::from_secs(10))
            .build()
            .expect("http client");
        let base_urls = base_urls
            .into_iter()
            .map(|(r, u)| (r, u.trim_end_matches('/').to_string()))
            .collect();
        Self {
            client,
            base_urls,
            bearer,
        }
    }

    /// Same base URL for every role, as when one server hosts them all.
    pub fn single(base_url: &str, bearer: Option<String>) -> Self {
        Self::new(
            Role::ALL.into_iter().map(|r| (r, base_url.to_string())).collect(),
            bearer,
        )
    }
}

#[async_trait]
impl Transport for HttpTransport {
    async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError> {
        let base = self
            .base_urls
            .get(&role)
            .ok_or_else(|| TransportError::Unavailable(format!("no endpoint configured for {role}")))?;
        let mut req = self.client.post(format!("{base}/v1/{role}")).json(&body);
        if let Some(token) = &self.bearer {
            req = req.bearer_auth(token);
        }
        let resp = req
            .send()
            .await
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        let status = resp.status();
        let text = resp
            .text()
            .await
            .map_err(|e| TransportError::Unavailable(e.to_string()))?;
        if status.is_server_error() {
            return Err(TransportError::Unavailable(format!("{status}: {text}")));
        }
        if !status.is_success() {
            return Err(TransportError::Rejected(format!("{status}: {text}")));
        }
        serde_json::from_str(&text).map_err(|e| TransportError::Malformed(e.to_string()))
    }

    fn backend_id(&self, role: Role) -> String {
        self.base_urls.get(&role).cloned().unwrap_or_default()
    }
}
