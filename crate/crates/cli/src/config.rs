use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use async_trait::async_trait;
use groundforge::curation::{AssembleOptions, Quotas, RefineConfig};
use groundforge::datastore::StatsConfig;
use groundforge::gateway::{
    Backoff, EndpointSettings, Gateway, GatewayConfig, HttpTransport, Role, StubBackend, StubOptions, TemplateSet,
    Transport, TransportError,
};
use groundforge::pipeline::PipelineConfig;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::Failure;

pub const ENV_STUB_SEED: &str = "GF_STUB_SEED";

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub pipeline: PipelineConfig,
    pub gateway: GatewaySection,
    pub refine: RefineConfig,
    pub curate: CurateSection,
    pub stats: StatsConfig,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GatewaySection {
    /// Base URL per role. Roles without one use the in-process stub.
    pub urls: BTreeMap<Role, String>,
    pub endpoints: BTreeMap<Role, EndpointSettings>,
    pub backoff: Backoff,
    /// TOML prompt template file; the built-in set when unset.
    pub templates: Option<PathBuf>,
    pub stub: StubSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StubSection {
    pub seed: u64,
    pub boxes_per_phrase: u32,
    pub normalized_coords: bool,
}

impl Default for StubSection {
    fn default() -> Self {
        let d = StubOptions::default();
        Self {
            seed: d.seed,
            boxes_per_phrase: d.boxes_per_phrase,
            normalized_coords: d.normalized_coords,
        }
    }
}

impl StubSection {
    pub fn options(&self) -> StubOptions {
        StubOptions {
            seed: self.seed,
            boxes_per_phrase: self.boxes_per_phrase,
            normalized_coords: self.normalized_coords,
            ..Default::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CurateSection {
    pub name: String,
    pub quotas: Quotas,
    pub allow_short: bool,
    /// Seeded candidate order instead of sample id order.
    pub selection_seed: Option<u64>,
    pub refine: bool,
    pub concurrency: usize,
}

impl Default for CurateSection {
    fn default() -> Self {
        Self {
            name: "benchmark".into(),
            quotas: Quotas::default(),
            allow_short: false,
            selection_seed: None,
            refine: true,
            concurrency: 8,
        }
    }
}

impl CurateSection {
    pub fn assemble_options(&self) -> AssembleOptions {
        AssembleOptions {
            allow_short: self.allow_short,
            seed: self.selection_seed,
        }
    }
}

fn usage(msg: impl Into<String>) -> Failure {
    Failure::Usage(msg.into())
}

/// Parse the right-hand side of `key=value` as a TOML value, falling back
/// to a bare string.
fn parse_value(raw: &str) -> toml::Value {
    toml::from_str::<toml::Table>(&format!("v = {raw}"))
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), Failure> {
    let parts: Vec<&str> = key.split('.').collect();
    if parts.iter().any(|p| p.is_empty()) {
        return Err(usage(format!("bad config key `{key}`")));
    }
    let mut table = root;
    for part in &parts[..parts.len() - 1] {
        let entry = table
            .entry(part.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| usage(format!("config key `{key}`: `{part}` is not a table")))?;
    }
    table.insert(parts[parts.len() - 1].to_string(), value);
    Ok(())
}

fn decode(table: toml::Table) -> Result<Config, toml::de::Error> {
    Config::deserialize(toml::Value::Table(table))
}

/// Effective configuration: defaults, then the file, then `GF_*`
/// environment variables, then `key=value` overrides.
pub fn load(path: Option<&Path>, overrides: &[String]) -> Result<Config, Failure> {
    let mut table = match path {
        Some(p) => {
            let raw = std::fs::read_to_string(p).map_err(|e| usage(format!("config {}: {e}", p.display())))?;
            toml::from_str::<toml::Table>(&raw).map_err(|e| usage(format!("config {}: {e}", p.display())))?
        }
        None => toml::Table::new(),
    };
    decode(table.clone()).map_err(|e| usage(format!("config {}: {e}", path.unwrap().display())))?;

    for role in Role::ALL {
        if let Ok(url) = std::env::var(role.env_var()) {
            if !url.is_empty() {
                set_path(&mut table, &format!("gateway.urls.{role}"), toml::Value::String(url))?;
            }
        }
    }
    if let Ok(seed) = std::env::var(ENV_STUB_SEED) {
        let seed: i64 = seed
            .parse()
            .map_err(|_| usage(format!("{ENV_STUB_SEED} must be an integer, got {seed:?}")))?;
        set_path(&mut table, "gateway.stub.seed", toml::Value::Integer(seed))?;
    }

    for o in overrides {
        let (key, raw) = o
            .split_once('=')
            .ok_or_else(|| usage(format!("override {o:?} is not key=value")))?;
        let key = key.trim();
        let value = parse_value(raw.trim());
        let mut alone = toml::Table::new();
        set_path(&mut alone, key, value.clone())?;
        decode(alone).map_err(|e| usage(format!("config key `{key}`: {}", e.message())))?;
        set_path(&mut table, key, value)?;
    }
    let config = decode(table).map_err(|e| usage(format!("config: {e}")))?;
    config.pipeline.validate().map_err(|e| usage(e.to_string()))?;
    Ok(config)
}

/// Sends each role to its configured URL or to the in-process stub.
struct Routed {
    routes: BTreeMap<Role, Arc<dyn Transport>>,
}

#[async_trait]
impl Transport for Routed {
    async fn post(&self, role: Role, body: Value) -> Result<Value, TransportError> {
        self.routes[&role].post(role, body).await
    }

    fn backend_id(&self, role: Role) -> String {
        self.routes[&role].backend_id(role)
    }
}

pub fn build_gateway(section: &GatewaySection) -> Result<Gateway, Failure> {
    let templates = match &section.templates {
        Some(p) => TemplateSet::load(p).map_err(|e| usage(e.to_string()))?,
        None => TemplateSet::default(),
    };
    let stub: Arc<dyn Transport> = Arc::new(StubBackend::new(section.stub.options()));
    let http: Arc<dyn Transport> = Arc::new(HttpTransport::new(section.urls.clone(), None));
    let routes = Role::ALL
        .into_iter()
        .map(|r| {
            (
                r,
                if section.urls.contains_key(&r) {
                    http.clone()
                } else {
                    stub.clone()
                },
            )
        })
        .collect();
    let config = GatewayConfig {
        endpoints: section.endpoints.clone(),
        backoff: section.backoff,
        templates,
    };
    Ok(Gateway::new(Arc::new(Routed { routes }), config))
}
