//! Capability documents (one TOML file per MCP server) and the
//! orchestrator configuration.
//!
//! The capability files under `capabilities/` are compiled in as defaults;
//! every binary also accepts a path to load a different document.

use std::path::{Path, PathBuf};

use mcpfab_core::mcp::ServerInfo;
use mcpfab_core::registry::{CapabilityDecl, Registry, RegistryError};
use serde::{Deserialize, Serialize};

pub const SPINDLE_TOML: &str = include_str!("../capabilities/spindle.toml");
pub const DRILL_TOML: &str = include_str!("../capabilities/drill.toml");
pub const ROBOT_TOML: &str = include_str!("../capabilities/robot.toml");

pub const DEFAULT_STEP_BUDGET: usize = 20;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid TOML: {0}")]
    Toml(#[from] toml::de::Error),
    #[error(transparent)]
    Registry(#[from] RegistryError),
    #[error("{0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerMeta {
    pub name: String,
    #[serde(default = "default_version")]
    pub version: String,
}

fn default_version() -> String {
    env!("CARGO_PKG_VERSION").to_string()
}

/// One capability document: the server it belongs to and the capabilities
/// that server exposes.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerDoc {
    pub server: ServerMeta,
    pub capabilities: Vec<CapabilityDecl>,
}

impl ServerDoc {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = read(path)?;
        Self::parse(&text)
    }

    pub fn registry(&self) -> Result<Registry, ConfigError> {
        let mut reg = Registry::new();
        for cap in &self.capabilities {
            reg.register(cap.clone())?;
        }
        Ok(reg)
    }

    pub fn server_info(&self) -> ServerInfo {
        ServerInfo {
            name: self.server.name.clone(),
            version: self.server.version.clone(),
        }
    }
}

fn read(path: &Path) -> Result<String, ConfigError> {
    std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Loads `path` when given, otherwise the compiled-in document.
pub fn server_doc(path: Option<&Path>, builtin: &str) -> Result<ServerDoc, ConfigError> {
    match path {
        Some(p) => ServerDoc::load(p),
        None => ServerDoc::parse(builtin),
    }
}

/// How the orchestrator reaches one MCP server.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "transport", rename_all = "snake_case")]
pub enum EndpointConfig {
    Http {
        url: String,
    },
    Stdio {
        command: PathBuf,
        #[serde(default)]
        args: Vec<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerEntry {
    pub name: String,
    #[serde(flatten)]
    pub endpoint: EndpointConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum PlannerKind {
    Deterministic,
    Llm,
}

impl std::str::FromStr for PlannerKind {
    type Err = ConfigError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "deterministic" => Ok(PlannerKind::Deterministic),
            "llm" => Ok(PlannerKind::Llm),
            other => Err(ConfigError::Invalid(format!("unknown planner `{other}`"))),
        }
    }
}

/// Connection settings for an OpenAI-compatible chat-completions endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LlmSettings {
    pub base_url: String,
    pub api_key: String,
    pub model: String,
}

impl LlmSettings {
    /// Reads `LLM_BASE_URL`, `LLM_API_KEY` and `LLM_MODEL`. Returns `None`
    /// unless both URL and key are set.
    pub fn from_env() -> Option<Self> {
        let base_url = std::env::var("LLM_BASE_URL").ok().filter(|s| !s.is_empty())?;
        let api_key = std::env::var("LLM_API_KEY").ok().filter(|s| !s.is_empty())?;
        let model = std::env::var("LLM_MODEL").unwrap_or_else(|_| "default".to_string());
        Some(Self {
            base_url,
            api_key,
            model,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrchestratorConfig {
    #[serde(default)]
    pub servers: Vec<ServerEntry>,
    #[serde(default = "default_planner")]
    pub planner: PlannerKind,
    #[serde(default = "default_budget")]
    pub step_budget: usize,
    /// Device bus to read plant snapshots from, for `GET /plant`.
    #[serde(default)]
    pub bus: Option<String>,
}

fn default_planner() -> PlannerKind {
    PlannerKind::Deterministic
}

fn default_budget() -> usize {
    DEFAULT_STEP_BUDGET
}

impl Default for OrchestratorConfig {
    fn default() -> Self {
        Self {
            servers: Vec::new(),
            planner: default_planner(),
            step_budget: DEFAULT_STEP_BUDGET,
            bus: None,
        }
    }
}

impl OrchestratorConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        Self::parse(&read(path)?)
    }

    /// Applies `PLANNER`, `STEP_BUDGET` and `PLANT_BUS_ADDR` when set.
    pub fn apply_env(&mut self) -> Result<(), ConfigError> {
        if let Ok(p) = std::env::var("PLANNER") {
            self.planner = p.parse()?;
        }
        if let Ok(b) = std::env::var("STEP_BUDGET") {
            self.step_budget = b
                .parse()
                .map_err(|_| ConfigError::Invalid(format!("STEP_BUDGET `{b}` is not a number")))?;
        }
        if let Ok(bus) = std::env::var("PLANT_BUS_ADDR") {
            self.bus = Some(bus);
        }
        Ok(())
    }
}
