//! The MCP-client side: discovery, the planner loop and session logs.

pub mod api;
pub mod llm;

use std::collections::{BTreeMap, HashMap};
use std::sync::{Arc, Mutex};

use async_trait::async_trait;
use futures::future::{self, BoxFuture, FutureExt};
use mcpfab_core::mcp::ToolCallResult;
use mcpfab_core::planner::{deterministic_plan, reasons, PlannerDecision};
use mcpfab_core::trace::{
    Catalog, DegradedServer, EventKind, ServerTools, SessionEvent, SessionTrace, TaskSpec, ToolRef,
};
use serde::{Deserialize, Serialize};
use serde_json::Value;
use tokio::sync::watch;

use crate::client::{Endpoint, McpClient};
use crate::config::{EndpointConfig, ServerEntry};

/// Reason recorded for a server that could not be initialized or listed.
pub const UNREACHABLE: &str = "unreachable";
/// Error category for a call that failed below the tool level.
pub const TRANSPORT_ERROR: &str = "transport_error";

impl From<&EndpointConfig> for Endpoint {
    fn from(cfg: &EndpointConfig) -> Self {
        match cfg {
            EndpointConfig::Http { url } => Endpoint::Http(url.clone()),
            EndpointConfig::Stdio { command, args } => Endpoint::Stdio {
                program: command.clone(),
                args: args.clone(),
            },
        }
    }
}

/// Result of discovery: the catalog the planner sees and the live
/// connections used to execute its calls.
pub struct Discovery {
    pub catalog: Catalog,
    clients: HashMap<String, Arc<McpClient>>,
}

impl Discovery {
    pub fn client(&self, server: &str) -> Option<&Arc<McpClient>> {
        self.clients.get(server)
    }
}

/// Connects to every server in order, runs the handshake and lists its
/// tools. Servers that fail are recorded as degraded and skipped.
pub async fn discover(servers: &[ServerEntry]) -> Discovery {
    let mut catalog = Catalog::default();
    let mut clients = HashMap::new();
    for entry in servers {
        let endpoint = Endpoint::from(&entry.endpoint);
        match connect(&endpoint).await {
            Ok((client, tools)) => {
                catalog.servers.push(ServerTools {
                    server: entry.name.clone(),
                    tools,
                });
                clients.insert(entry.name.clone(), Arc::new(client));
            }
            Err(e) => {
                tracing::warn!(server = %entry.name, %endpoint, error = %e, "server degraded");
                // the reason stays free of addresses so transcripts are stable
                catalog.degraded.push(DegradedServer {
                    server: entry.name.clone(),
                    reason: UNREACHABLE.to_string(),
                });
            }
        }
    }
    Discovery { catalog, clients }
}

async fn connect(
    endpoint: &Endpoint,
) -> Result<(McpClient, Vec<mcpfab_core::mcp::ToolDescriptor>), crate::client::ClientError> {
    let client = McpClient::connect(endpoint).await?;
    client.initialize().await?;
    let tools = client.list_tools().await?;
    Ok((client, tools))
}

#[async_trait]
pub trait Planner: Send + Sync {
    async fn plan(&self, trace: &SessionTrace, catalog: &Catalog, task: &TaskSpec) -> PlannerDecision;
}

/// The rule-based planner.
pub struct DeterministicPlanner;

#[async_trait]
impl Planner for DeterministicPlanner {
    async fn plan(&self, trace: &SessionTrace, catalog: &Catalog, task: &TaskSpec) -> PlannerDecision {
        deterministic_plan(trace, catalog, task)
    }
}

/// A question put to the user while the session waits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Question {
    pub question: String,
    pub options: Vec<Value>,
    pub category: Option<String>,
    pub parameter: Option<String>,
}

/// Answers clarification requests. `None` means nobody can answer.
///
/// `ask` registers the question before returning; the session publishes
/// the request event only afterwards, so an answer can never arrive ahead
/// of the slot that receives it.
pub trait Clarifier: Send + Sync {
    fn ask(&self, question: &Question) -> BoxFuture<'static, Option<String>>;
}

/// Never answers.
pub struct NoClarifier;

impl Clarifier for NoClarifier {
    fn ask(&self, _question: &Question) -> BoxFuture<'static, Option<String>> {
        future::ready(None).boxed()
    }
}

/// Answers by error category; each scripted answer is used once.
#[derive(Debug, Default)]
pub struct ScriptedClarifier {
    answers: Mutex<BTreeMap<String, Vec<String>>>,
}

impl ScriptedClarifier {
    pub fn new(pairs: impl IntoIterator<Item = (String, String)>) -> Self {
        let mut answers: BTreeMap<String, Vec<String>> = BTreeMap::new();
        for (category, answer) in pairs {
            answers.entry(category).or_default().push(answer);
        }
        for list in answers.values_mut() {
            list.reverse();
        }
        Self {
            answers: Mutex::new(answers),
        }
    }
}

impl ScriptedClarifier {
    fn next(&self, question: &Question) -> Option<String> {
        let mut answers = self.answers.lock().ok()?;
        let key = question.category.clone().unwrap_or_default();
        answers.get_mut(&key).and_then(Vec::pop).or_else(|| answers.get_mut("*").and_then(Vec::pop))
    }
}

impl Clarifier for ScriptedClarifier {
    fn ask(&self, question: &Question) -> BoxFuture<'static, Option<String>> {
        future::ready(self.next(question)).boxed()
    }
}

/// Append-only session log that any number of readers can follow.
pub struct SessionLog {
    trace: Mutex<SessionTrace>,
    len: watch::Sender<usize>,
}

impl SessionLog {
    pub fn new(session: impl Into<String>) -> Arc<Self> {
        let (len, _) = watch::channel(0);
        Arc::new(Self {
            trace: Mutex::new(SessionTrace::new(session)),
            len,
        })
    }

    pub fn push(&self, kind: EventKind) -> SessionEvent {
        let (event, n) = {
            let mut trace = self.trace.lock().expect("session log poisoned");
            let event = trace.push(kind).clone();
            (event, trace.events.len())
        };
        self.len.send_replace(n);
        event
    }

    pub fn snapshot(&self) -> SessionTrace {
        self.trace.lock().expect("session log poisoned").clone()
    }

    pub fn events_from(&self, from: usize) -> Vec<SessionEvent> {
        let trace = self.trace.lock().expect("session log poisoned");
        trace.events.get(from..).map(<[SessionEvent]>::to_vec).unwrap_or_default()
    }

    pub fn is_finished(&self) -> bool {
        self.trace.lock().expect("session log poisoned").terminal().is_some()
    }

    /// Waits until the log holds more than `seen` events.
    pub async fn wait_beyond(&self, seen: usize) {
        let mut rx = self.len.subscribe();
        let _ = rx.wait_for(|n| *n > seen).await;
    }
}

/// Limits and settings for one run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SessionOptions {
    pub step_budget: usize,
}

impl Default for SessionOptions {
    fn default() -> Self {
        Self {
            step_budget: crate::config::DEFAULT_STEP_BUDGET,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionOutcome {
    pub trace: SessionTrace,
    /// Planner decisions taken, including the terminal one.
    pub steps: usize,
}

/// Runs one session to completion, appending every event to `log`.
pub async fn run_session(
    log: &SessionLog,
    task: TaskSpec,
    discovery: &Discovery,
    planner: &dyn Planner,
    clarifier: &dyn Clarifier,
    options: SessionOptions,
) -> SessionOutcome {
    log.push(EventKind::TaskReceived { task: task.clone() });
    log.push(EventKind::ToolsDiscovered {
        tools: discovery
            .catalog
            .tools()
            .map(|(server, t)| ToolRef {
                server: server.to_string(),
                name: t.name.clone(),
            })
            .collect(),
        degraded: discovery.catalog.degraded.clone(),
    });

    let mut next_call = 1u64;
    let mut steps = 0;
    loop {
        if steps == options.step_budget {
            log.push(EventKind::Failed {
                reason: reasons::BUDGET.to_string(),
                detail: format!("no result after {} planner steps", options.step_budget),
            });
            break;
        }
        steps += 1;
        let trace = log.snapshot();
        let decision = planner.plan(&trace, &discovery.catalog, &task).await;
        tracing::debug!(session = %trace.session, ?decision, "planner decision");
        match decision {
            PlannerDecision::CallTool { server, name, arguments } => {
                execute(log, discovery, next_call, &server, &name, arguments).await;
                next_call += 1;
            }
            PlannerDecision::Retry {
                server,
                name,
                corrected_arguments,
                reason,
            } => {
                log.push(EventKind::PlanNote { note: reason });
                execute(log, discovery, next_call, &server, &name, corrected_arguments).await;
                next_call += 1;
            }
            PlannerDecision::Clarify {
                question,
                options,
                category,
                parameter,
            } => {
                let q = Question {
                    question,
                    options,
                    category,
                    parameter,
                };
                let answer = clarifier.ask(&q);
                log.push(EventKind::ClarificationRequest {
                    question: q.question.clone(),
                    options: q.options.clone(),
                    category: q.category.clone(),
                    parameter: q.parameter.clone(),
                });
                match answer.await {
                    Some(answer) => {
                        log.push(EventKind::ClarificationAnswer { answer });
                    }
                    None => {
                        log.push(EventKind::Failed {
                            reason: reasons::NEEDS_USER.to_string(),
                            detail: format!("no answer to: {}", q.question),
                        });
                        break;
                    }
                }
            }
            PlannerDecision::Done { summary } => {
                log.push(EventKind::Done { summary });
                break;
            }
            PlannerDecision::Fail { reason, detail } => {
                log.push(EventKind::Failed { reason, detail });
                break;
            }
        }
    }
    SessionOutcome {
        trace: log.snapshot(),
        steps,
    }
}

async fn execute(log: &SessionLog, discovery: &Discovery, call_id: u64, server: &str, name: &str, arguments: Value) {
    log.push(EventKind::ToolCall {
        call_id,
        server: server.to_string(),
        name: name.to_string(),
        arguments: arguments.clone(),
    });
    let result = match discovery.client(server) {
        Some(client) => match client.call_tool(name, &arguments).await {
            Ok(r) => r,
            Err(e) => ToolCallResult::error(TRANSPORT_ERROR, &e.to_string(), None),
        },
        None => ToolCallResult::error(
            mcpfab_core::mcp::UNKNOWN_TOOL,
            &format!("server `{server}` is not connected"),
            None,
        ),
    };
    if let Some(items) = result
        .meta
        .as_ref()
        .and_then(|m| m.get("feedback"))
        .and_then(Value::as_array)
    {
        for feedback in items {
            log.push(EventKind::ToolFeedback {
                call_id,
                feedback: feedback.clone(),
            });
        }
    }
    log.push(EventKind::ToolResult {
        call_id,
        name: name.to_string(),
        is_error: result.is_error,
        text: result.text(),
        structured: result.structured,
    });
}
