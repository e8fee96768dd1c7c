//! Scenario scripts: one TOML file per scenario.

use std::path::{Path, PathBuf};

use mcpfab_core::plant::PlantLayout;
use mcpfab_core::trace::TaskSpec;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::config::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpectedVerdict {
    Pass,
    Fail,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScriptedAnswer {
    /// Error category of the question; `*` answers any question.
    pub category: String,
    pub answer: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioScript {
    pub name: String,
    #[serde(default)]
    pub description: String,
    #[serde(default)]
    pub layout: PlantLayout,
    pub task: TaskSpec,
    /// Servers that are not started; they show up as degraded.
    #[serde(default)]
    pub disabled_servers: Vec<String>,
    #[serde(default)]
    pub answers: Vec<ScriptedAnswer>,
    #[serde(default)]
    pub expect: Expect,
    #[serde(default = "pass")]
    pub expect_verdict: ExpectedVerdict,
    /// For expected failures: the reason the session must fail with.
    #[serde(default)]
    pub expect_fail_reason: Option<String>,
    /// Recorded model responses for the LLM planner, relative to the file.
    #[serde(default)]
    pub playback: Option<PathBuf>,
    #[serde(skip)]
    pub source: Option<PathBuf>,
}

fn pass() -> ExpectedVerdict {
    ExpectedVerdict::Pass
}

/// Matches a tool call by name, a subset of its arguments and optionally
/// whether it succeeded.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallMatch {
    pub name: String,
    #[serde(default)]
    pub arguments: Map<String, Value>,
    #[serde(default)]
    pub success: Option<bool>,
}

/// The first call matching `after` has an earlier call matching `before`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Precedence {
    pub before: CallMatch,
    pub after: CallMatch,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CallCount {
    pub call: CallMatch,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HoleExpect {
    pub diameter_mm: f64,
    pub rpm_used: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlantExpect {
    pub workpiece: String,
    #[serde(default)]
    pub location: Option<String>,
    #[serde(default)]
    pub holes: Option<usize>,
    #[serde(default)]
    pub last_hole: Option<HoleExpect>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Terminal {
    Done,
    Failed,
}

/// Assertions over the trace and the final plant. Every field is optional.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expect {
    #[serde(default)]
    pub terminal: Option<Terminal>,
    #[serde(default)]
    pub fail_reason: Option<String>,
    /// Exact sequence of called tool names.
    #[serde(default)]
    pub tool_order: Option<Vec<String>>,
    #[serde(default)]
    pub tool_calls: Option<usize>,
    #[serde(default)]
    pub clarifications: Option<usize>,
    /// Exact sequence of error categories returned by tools.
    #[serde(default)]
    pub error_categories: Option<Vec<String>>,
    #[serde(default)]
    pub first_call: Option<CallMatch>,
    #[serde(default)]
    pub last_call: Option<CallMatch>,
    #[serde(default)]
    pub precedes: Vec<Precedence>,
    #[serde(default)]
    pub counts: Vec<CallCount>,
    #[serde(default)]
    pub plant: Vec<PlantExpect>,
}

impl ScenarioScript {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut script = Self::parse(&text).map_err(|e| ConfigError::Invalid(format!("{}: {e}", path.display())))?;
        script.source = Some(path.to_path_buf());
        Ok(script)
    }

    /// Playback file resolved against the scenario file's directory.
    pub fn playback_path(&self) -> Option<PathBuf> {
        let p = self.playback.as_ref()?;
        if p.is_absolute() {
            return Some(p.clone());
        }
        let base = self.source.as_ref().and_then(|s| s.parent()).unwrap_or(Path::new("."));
        Some(base.join(p))
    }
}

/// All `*.toml` scenarios directly inside `dir`, sorted by file name.
pub fn load_dir(dir: &Path) -> Result<Vec<ScenarioScript>, ConfigError> {
    let entries = std::fs::read_dir(dir).map_err(|source| ConfigError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let mut paths: Vec<PathBuf> = entries
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.is_file() && p.extension().is_some_and(|x| x == "toml"))
        .collect();
    paths.sort();
    paths.iter().map(|p| ScenarioScript::load(p)).collect()
}

/// Resolves `--scenario`: `all` (the main set), `controls` (negative
/// controls), a scenario name from either set, or a path to a file.
pub fn select(dir: &Path, which: &str) -> Result<Vec<ScenarioScript>, ConfigError> {
    let controls = dir.join("controls");
    match which {
        "all" => load_dir(dir),
        "controls" => load_dir(&controls),
        name => {
            let as_path = Path::new(name);
            if as_path.extension().is_some_and(|x| x == "toml") && as_path.is_file() {
                return Ok(vec![ScenarioScript::load(as_path)?]);
            }
            let mut pool = load_dir(dir)?;
            if controls.is_dir() {
                pool.extend(load_dir(&controls)?);
            }
            let found: Vec<ScenarioScript> = pool.into_iter().filter(|s| s.name == name).collect();
            if found.is_empty() {
                Err(ConfigError::Invalid(format!("no scenario named `{name}` in {}", dir.display())))
            } else {
                Ok(found)
            }
        }
    }
}
