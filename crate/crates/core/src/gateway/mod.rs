//! Uniform clients for the six model roles used by the pipeline and curation
//! stages, speaking JSON over `POST /v1/{role}`.
//!
//! A [`Gateway`] wraps any [`Transport`] with per-role in-flight bounds,
//! timeouts, retries with exponential backoff, and strict response
//! validation. [`StubBackend`] is a deterministic in-process transport and
//! [`server::serve_stub`] exposes it over HTTP with the same protocol.

mod client;
mod coords;
pub mod protocol;
pub mod server;
mod stub;
mod template;
mod transport;

pub use client::{Backoff, EndpointSettings, Gateway, GatewayConfig, GroundedBox, GroundedPhrase, Verdict};
pub use coords::{detect_normalized, normalize_boxes, snap_to_pixels};
pub use protocol::ImageRef;
pub use stub::{stable_hash, StubBackend, StubOptions};
pub use template::{PromptTemplate, TemplateError, TemplateKind, TemplateSet};
pub use transport::{HttpTransport, Transport, TransportError};

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    Captioner,
    Grounder,
    Segmenter,
    Referrer,
    Classifier,
    Matter,
}

impl Role {
    pub const ALL: [Role; 6] = [
        Role::Captioner,
        Role::Grounder,
        Role::Segmenter,
        Role::Referrer,
        Role::Classifier,
        Role::Matter,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Role::Captioner => "captioner",
            Role::Grounder => "grounder",
            Role::Segmenter => "segmenter",
            Role::Referrer => "referrer",
            Role::Classifier => "classifier",
            Role::Matter => "matter",
        }
    }

    /// `GF_ENDPOINT_{ROLE}` environment variable name.
    pub fn env_var(self) -> String {
        format!("GF_ENDPOINT_{}", self.as_str().to_ascii_uppercase())
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Role {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Role::ALL
            .into_iter()
            .find(|r| r.as_str() == s)
            .ok_or_else(|| format!("unknown role {s:?}"))
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GatewayError {
    #[error("{role} backend unavailable after {attempts} attempt(s): {detail}")]
    BackendUnavailable { role: Role, attempts: u32, detail: String },
    #[error("{role} request timed out after {attempts} attempt(s)")]
    Timeout { role: Role, attempts: u32 },
    #[error("{role} returned a malformed response: {detail}")]
    MalformedResponse { role: Role, detail: String },
    #[error("{role} rejected the request: {detail}")]
    Rejected { role: Role, detail: String },
    #[error("invalid prompt: {0}")]
    InvalidPrompt(String),
    #[error("precondition violated: {0}")]
    Precondition(String),
    #[error("unparseable classifier verdict {0:?}")]
    UnparseableVerdict(String),
    #[error("backend generated an empty text")]
    EmptyGeneration,
}

impl GatewayError {
    pub fn malformed(role: Role, detail: impl fmt::Display) -> Self {
        GatewayError::MalformedResponse {
            role,
            detail: detail.to_string(),
        }
    }
}
