//! Boots the whole cell, runs scenario scripts against it and writes
//! transcripts.
//!
//! For each scenario `<name>` the output directory receives:
//! - `<name>.ndjson`: the session trace, one event per line
//! - `<name>.plant.json`: the final plant state
//! - `<name>.bus.log`: every device-bus line, `> ` requests and `< ` replies
//!
//! `summary.txt` and `summary.json` list all scenarios of a run.

pub mod assertions;
pub mod scenario;

use std::net::SocketAddr;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use mcpfab_core::plant::PlantState;
use mcpfab_core::trace::EventKind;
use serde::{Deserialize, Serialize};

use crate::config::{EndpointConfig, LlmSettings, ServerDoc, ServerEntry};
use crate::devicebus::{bus_serve, BusClient, BusHandle};
use crate::orchestrator::llm::{HttpBackend, LlmPlanner, PlaybackBackend};
use crate::orchestrator::{
    discover, run_session, DeterministicPlanner, Planner, ScriptedClarifier, SessionLog, SessionOptions,
};
use crate::server::ServerHandle;
use crate::tools::{PollPolicy, ServerKind};
pub use scenario::{select, ExpectedVerdict, ScenarioScript};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("stack failed to start: {0}")]
    Boot(String),
    #[error("cannot write output: {0}")]
    Output(#[from] std::io::Error),
}

/// How the three MCP servers are started.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum StackMode {
    /// In this process, each on its own HTTP port.
    InProcess,
    /// As child processes over stdio, using the binaries in `bin_dir`.
    Spawn { bin_dir: PathBuf },
}

/// Plant bus plus the three servers, all on ephemeral local ports.
pub struct Stack {
    bus: BusHandle,
    servers: Vec<ServerHandle>,
    entries: Vec<ServerEntry>,
}

/// A local port nothing listens on.
fn dead_port() -> std::io::Result<SocketAddr> {
    let l = std::net::TcpListener::bind("127.0.0.1:0")?;
    l.local_addr()
}

impl Stack {
    pub async fn boot(
        layout: &mcpfab_core::plant::PlantLayout,
        disabled: &[String],
        mode: &StackMode,
    ) -> Result<Stack, HarnessError> {
        let local: SocketAddr = ([127, 0, 0, 1], 0).into();
        let bus = bus_serve(layout, local).await.map_err(|e| HarnessError::Boot(format!("device bus: {e}")))?;
        let mut servers = Vec::new();
        let mut entries = Vec::new();
        for kind in ServerKind::ALL {
            let name = kind.server_name().to_string();
            if disabled.contains(&name) {
                let addr = dead_port().map_err(|e| HarnessError::Boot(e.to_string()))?;
                entries.push(ServerEntry {
                    name,
                    endpoint: EndpointConfig::Http {
                        url: format!("http://{addr}/mcp"),
                    },
                });
                continue;
            }
            let endpoint = match mode {
                StackMode::InProcess => {
                    let doc = ServerDoc::parse(kind.builtin_doc()).map_err(|e| HarnessError::Boot(e.to_string()))?;
                    let client = kind.is_gateway().then(|| Arc::new(BusClient::new(bus.addr().to_string())));
                    let server = kind
                        .build(&doc, client, PollPolicy::default())
                        .map_err(|e| HarnessError::Boot(e.to_string()))?;
                    let handle = Arc::new(server)
                        .serve_http(local)
                        .await
                        .map_err(|e| HarnessError::Boot(format!("{name}: {e}")))?;
                    let url = handle.url();
                    servers.push(handle);
                    EndpointConfig::Http { url }
                }
                StackMode::Spawn { bin_dir } => {
                    let args = if kind.is_gateway() {
                        vec!["--bus".to_string(), bus.addr().to_string()]
                    } else {
                        Vec::new()
                    };
                    EndpointConfig::Stdio {
                        command: bin_dir.join(&name),
                        args,
                    }
                }
            };
            entries.push(ServerEntry { name, endpoint });
        }
        Ok(Stack { bus, servers, entries })
    }

    pub fn entries(&self) -> &[ServerEntry] {
        &self.entries
    }

    pub fn bus(&self) -> &BusHandle {
        &self.bus
    }

    pub async fn shutdown(self) {
        for s in self.servers {
            s.stop().await;
        }
        self.bus.shutdown();
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum PlannerChoice {
    Deterministic,
    /// Recorded responses from `playback` when given; otherwise a live
    /// endpoint from the environment, falling back to the scenario's own
    /// playback file.
    Llm { playback: Option<PathBuf> },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunOptions {
    pub planner: PlannerChoice,
    pub mode: StackMode,
    pub out_dir: PathBuf,
    pub session: SessionOptions,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Pass,
    Fail,
    SkippedNoLlm,
    InfraError,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Pass => "pass",
            Verdict::Fail => "fail",
            Verdict::SkippedNoLlm => "skipped_no_llm",
            Verdict::InfraError => "infra_error",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioReport {
    pub scenario: String,
    pub verdict: Verdict,
    pub expected: ExpectedVerdict,
    pub as_expected: bool,
    pub steps: usize,
    pub tool_calls: usize,
    pub clarifications: usize,
    /// `done`, `failed: <reason>`, or empty when no session ran.
    pub terminal: String,
    pub failures: Vec<String>,
    /// Transcript file name inside the output directory.
    pub transcript: Option<String>,
}

impl ScenarioReport {
    fn without_session(script: &ScenarioScript, verdict: Verdict, failures: Vec<String>) -> Self {
        Self {
            scenario: script.name.clone(),
            verdict,
            expected: script.expect_verdict,
            as_expected: false,
            steps: 0,
            tool_calls: 0,
            clarifications: 0,
            terminal: String::new(),
            failures,
            transcript: None,
        }
    }
}

enum PlannerSetup {
    Ready(Arc<dyn Planner>),
    Skip(String),
}

fn planner_for(script: &ScenarioScript, choice: &PlannerChoice) -> Result<PlannerSetup, String> {
    match choice {
        PlannerChoice::Deterministic => Ok(PlannerSetup::Ready(Arc::new(DeterministicPlanner))),
        PlannerChoice::Llm { playback } => {
            let playback_file = match playback {
                Some(p) if p.is_dir() => Some(p.join(format!("{}.json", script.name))).filter(|f| f.is_file()),
                Some(p) => Some(p.clone()),
                None => None,
            };
            if let Some(file) = playback_file {
                let backend = PlaybackBackend::load(&file).map_err(|e| e.to_string())?;
                return Ok(PlannerSetup::Ready(Arc::new(LlmPlanner::new(backend, "playback"))));
            }
            if playback.is_none() {
                if let Some(settings) = LlmSettings::from_env() {
                    let model = settings.model.clone();
                    let backend = HttpBackend::new(settings).map_err(|e| e.to_string())?;
                    return Ok(PlannerSetup::Ready(Arc::new(LlmPlanner::new(backend, model))));
                }
                if let Some(file) = script.playback_path() {
                    let backend = PlaybackBackend::load(&file).map_err(|e| e.to_string())?;
                    return Ok(PlannerSetup::Ready(Arc::new(LlmPlanner::new(backend, "playback"))));
                }
            }
            Ok(PlannerSetup::Skip(
                "no LLM credentials (LLM_BASE_URL, LLM_API_KEY) and no recorded responses".into(),
            ))
        }
    }
}

/// Outcome of one scenario together with the final plant, for callers
/// that want to inspect more than the report.
pub struct ScenarioRun {
    pub report: ScenarioReport,
    pub plant: Option<PlantState>,
}

/// Runs one scenario from a cold stack and writes its transcript files.
pub async fn run_scenario(script: &ScenarioScript, opts: &RunOptions) -> ScenarioRun {
    let planner = match planner_for(script, &opts.planner) {
        Ok(PlannerSetup::Ready(p)) => p,
        Ok(PlannerSetup::Skip(why)) => {
            return ScenarioRun {
                report: ScenarioReport::without_session(script, Verdict::SkippedNoLlm, vec![why]),
                plant: None,
            }
        }
        Err(e) => {
            return ScenarioRun {
                report: ScenarioReport::without_session(script, Verdict::InfraError, vec![e]),
                plant: None,
            }
        }
    };
    let stack = match Stack::boot(&script.layout, &script.disabled_servers, &opts.mode).await {
        Ok(s) => s,
        Err(e) => {
            return ScenarioRun {
                report: ScenarioReport::without_session(script, Verdict::InfraError, vec![e.to_string()]),
                plant: None,
            }
        }
    };

    let discovery = discover(stack.entries()).await;
    let clarifier = ScriptedClarifier::new(script.answers.iter().map(|a| (a.category.clone(), a.answer.clone())));
    let log = SessionLog::new(script.name.clone());
    let outcome = run_session(
        &log,
        script.task.clone(),
        &discovery,
        planner.as_ref(),
        &clarifier,
        opts.session,
    )
    .await;
    drop(discovery);
    let plant = stack.bus().snapshot().await;
    let bus_lines = stack.bus().transcript().await;
    stack.shutdown().await;

    let trace = outcome.trace;
    let mut failures = assertions::structural_failures(&trace, opts.session.step_budget);
    failures.extend(assertions::expectation_failures(&script.expect, &trace, plant.as_ref()));
    let verdict = if failures.is_empty() { Verdict::Pass } else { Verdict::Fail };
    let fail_reason = match trace.terminal() {
        Some(EventKind::Failed { reason, .. }) => Some(reason.clone()),
        _ => None,
    };
    let terminal = match trace.terminal() {
        Some(EventKind::Done { .. }) => "done".to_string(),
        Some(EventKind::Failed { reason, .. }) => format!("failed: {reason}"),
        _ => String::new(),
    };
    let as_expected = match script.expect_verdict {
        ExpectedVerdict::Pass => verdict == Verdict::Pass,
        ExpectedVerdict::Fail => {
            verdict == Verdict::Fail
                && script
                    .expect_fail_reason
                    .as_ref()
                    .is_none_or(|want| fail_reason.as_ref() == Some(want))
        }
    };

    let transcript = format!("{}.ndjson", script.name);
    let written = write_outputs(&opts.out_dir, &script.name, &trace.to_ndjson(), plant.as_ref(), &bus_lines);
    let mut report = ScenarioReport {
        scenario: script.name.clone(),
        verdict,
        expected: script.expect_verdict,
        as_expected,
        steps: outcome.steps,
        tool_calls: trace.tool_call_count(),
        clarifications: trace.clarification_requests().len(),
        terminal,
        failures,
        transcript: Some(transcript),
    };
    if let Err(e) = written {
        report.verdict = Verdict::InfraError;
        report.as_expected = false;
        report.failures.push(format!("cannot write transcript: {e}"));
    }
    ScenarioRun { report, plant }
}

fn write_outputs(
    dir: &Path,
    name: &str,
    ndjson: &str,
    plant: Option<&PlantState>,
    bus_lines: &[String],
) -> std::io::Result<()> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join(format!("{name}.ndjson")), ndjson)?;
    if let Some(p) = plant {
        let mut json = serde_json::to_string_pretty(p).map_err(std::io::Error::other)?;
        json.push('\n');
        std::fs::write(dir.join(format!("{name}.plant.json")), json)?;
    }
    let mut bus = bus_lines.join("\n");
    if !bus.is_empty() {
        bus.push('\n');
    }
    std::fs::write(dir.join(format!("{name}.bus.log")), bus)
}

/// Runs every script, sequentially or concurrently on separate stacks,
/// and writes `summary.txt` / `summary.json`. Reports keep input order.
pub async fn run_all(scripts: &[ScenarioScript], opts: &RunOptions, parallel: bool) -> Result<Summary, HarnessError> {
    let reports = if parallel {
        let runs = scripts.iter().map(|s| run_scenario(s, opts));
        futures::future::join_all(runs).await.into_iter().map(|r| r.report).collect()
    } else {
        let mut reports = Vec::new();
        for s in scripts {
            reports.push(run_scenario(s, opts).await.report);
        }
        reports
    };
    let summary = Summary { reports };
    std::fs::create_dir_all(&opts.out_dir)?;
    std::fs::write(opts.out_dir.join("summary.txt"), summary.table())?;
    let mut json = serde_json::to_string_pretty(&summary).map_err(std::io::Error::other)?;
    json.push('\n');
    std::fs::write(opts.out_dir.join("summary.json"), json)?;
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub reports: Vec<ScenarioReport>,
}

impl Summary {
    pub fn table(&self) -> String {
        let width = self.reports.iter().map(|r| r.scenario.len()).max().unwrap_or(0).max(8);
        let mut out = format!(
            "{:<width$}  {:>5}  {:>5}  {:>5}  {:<26}  {:<14}  {:<8}\n",
            "scenario", "steps", "calls", "clar", "terminal", "verdict", "expected"
        );
        for r in &self.reports {
            let expected = match r.expected {
                ExpectedVerdict::Pass => "pass",
                ExpectedVerdict::Fail => "fail",
            };
            out.push_str(&format!(
                "{:<width$}  {:>5}  {:>5}  {:>5}  {:<26}  {:<14}  {:<8}\n",
                r.scenario,
                r.steps,
                r.tool_calls,
                r.clarifications,
                r.terminal,
                r.verdict.as_str(),
                expected
            ));
        }
        let ok = self.reports.iter().filter(|r| r.as_expected).count();
        out.push_str(&format!("{ok}/{} as expected\n", self.reports.len()));
        out
    }

    /// 0 when every scenario met its expectation, 2 when the only misses
    /// are skipped scenarios, 1 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.reports.iter().all(|r| r.as_expected) {
            0
        } else if self
            .reports
            .iter()
            .all(|r| r.as_expected || r.verdict == Verdict::SkippedNoLlm)
        {
            2
        } else {
            1
        }
    }
}
