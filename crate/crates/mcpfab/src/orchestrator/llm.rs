//! Planner backed by an OpenAI-compatible chat-completions endpoint.
//!
//! The conversation is rebuilt from the session trace on every step, so the
//! planner itself holds no state. Playback serves recorded responses in
//! order and is what CI uses.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Mutex;

use async_trait::async_trait;
use mcpfab_core::planner::{reasons, PlannerDecision};
use mcpfab_core::trace::{Catalog, EventKind, SessionTrace, TaskSpec};
use serde_json::{json, Value};

use super::Planner;
use crate::config::LlmSettings;

/// The only instruction given to the model besides the tool descriptions.
pub const SYSTEM_PREAMBLE: &str = "You operate a manufacturing cell through the tools provided. \
Plan and execute the user's request by calling tools. Read each tool description carefully and \
respect the usage constraints it states. If a tool returns an error, use the information in the \
error to recover. If you need a decision from the user, ask a single question that ends with a \
question mark. When the request is complete, reply with a short summary.";

const REPROMPT: &str = "Your last tool call could not be used: {reason}. \
Call one of the available tools by name with a JSON object as arguments.";

#[derive(Debug, thiserror::Error)]
pub enum LlmError {
    #[error("endpoint request failed: {0}")]
    Endpoint(String),
    #[error("endpoint returned status {status}: {body}")]
    Status { status: u16, body: String },
    #[error("playback exhausted after {0} responses")]
    PlaybackExhausted(usize),
    #[error("cannot load playback: {0}")]
    Playback(String),
}

#[async_trait]
pub trait ChatBackend: Send + Sync {
    async fn complete(&self, request: &Value) -> Result<Value, LlmError>;
}

pub struct HttpBackend {
    http: reqwest::Client,
    settings: LlmSettings,
}

impl HttpBackend {
    pub fn new(settings: LlmSettings) -> Result<Self, LlmError> {
        let http = reqwest::Client::builder()
            .timeout(std::time::Duration::from_secs(120))
            .build()
            .map_err(|e| LlmError::Endpoint(e.to_string()))?;
        Ok(Self { http, settings })
    }
}

#[async_trait]
impl ChatBackend for HttpBackend {
    async fn complete(&self, request: &Value) -> Result<Value, LlmError> {
        let url = format!("{}/chat/completions", self.settings.base_url.trim_end_matches('/'));
        let resp = self
            .http
            .post(url)
            .bearer_auth(&self.settings.api_key)
            .json(request)
            .send()
            .await
            .map_err(|e| LlmError::Endpoint(e.to_string()))?;
        let status = resp.status();
        if !status.is_success() {
            let body = resp.text().await.unwrap_or_default();
            return Err(LlmError::Status {
                status: status.as_u16(),
                body,
            });
        }
        resp.json().await.map_err(|e| LlmError::Endpoint(e.to_string()))
    }
}

/// Replays recorded responses in order and keeps the requests it saw.
pub struct PlaybackBackend {
    responses: Mutex<VecDeque<Value>>,
    total: usize,
    requests: Mutex<Vec<Value>>,
}

impl PlaybackBackend {
    pub fn new(responses: Vec<Value>) -> Self {
        Self {
            total: responses.len(),
            responses: Mutex::new(responses.into()),
            requests: Mutex::new(Vec::new()),
        }
    }

    /// Reads `{"responses": [...]}` or a bare array of responses.
    pub fn load(path: &Path) -> Result<Self, LlmError> {
        let text = std::fs::read_to_string(path).map_err(|e| LlmError::Playback(format!("{}: {e}", path.display())))?;
        let doc: Value = serde_json::from_str(&text).map_err(|e| LlmError::Playback(e.to_string()))?;
        let list = match doc {
            Value::Array(list) => list,
            Value::Object(mut obj) => match obj.remove("responses") {
                Some(Value::Array(list)) => list,
                _ => return Err(LlmError::Playback("missing `responses` array".into())),
            },
            _ => return Err(LlmError::Playback("expected an array or object".into())),
        };
        Ok(Self::new(list))
    }

    pub fn requests(&self) -> Vec<Value> {
        self.requests.lock().map(|r| r.clone()).unwrap_or_default()
    }
}

#[async_trait]
impl ChatBackend for PlaybackBackend {
    async fn complete(&self, request: &Value) -> Result<Value, LlmError> {
        if let Ok(mut r) = self.requests.lock() {
            r.push(request.clone());
        }
        let mut responses = self.responses.lock().map_err(|_| LlmError::PlaybackExhausted(self.total))?;
        responses.pop_front().ok_or(LlmError::PlaybackExhausted(self.total))
    }
}

pub struct LlmPlanner<B> {
    backend: B,
    model: String,
}

impl<B: ChatBackend> LlmPlanner<B> {
    pub fn new(backend: B, model: impl Into<String>) -> Self {
        Self {
            backend,
            model: model.into(),
        }
    }

    pub fn backend(&self) -> &B {
        &self.backend
    }
}

/// Tool definitions in chat-completions format, one per catalog entry.
pub fn tool_definitions(catalog: &Catalog) -> Vec<Value> {
    catalog
        .tools()
        .map(|(_, t)| {
            json!({
                "type": "function",
                "function": {
                    "name": t.name,
                    "description": t.description,
                    "parameters": t.input_schema,
                }
            })
        })
        .collect()
}

fn call_ref(call_id: u64) -> String {
    format!("call_{call_id}")
}

/// Rebuilds the chat history from the trace.
pub fn conversation(trace: &SessionTrace, task: &TaskSpec) -> Vec<Value> {
    let mut messages = vec![
        json!({"role": "system", "content": SYSTEM_PREAMBLE}),
        json!({"role": "user", "content": task.prompt()}),
    ];
    for e in &trace.events {
        match &e.kind {
            EventKind::ToolCall {
                call_id,
                name,
                arguments,
                ..
            } => messages.push(json!({
                "role": "assistant",
                "content": null,
                "tool_calls": [{
                    "id": call_ref(*call_id),
                    "type": "function",
                    "function": { "name": name, "arguments": arguments.to_string() }
                }]
            })),
            EventKind::ToolResult { call_id, text, .. } => messages.push(json!({
                "role": "tool",
                "tool_call_id": call_ref(*call_id),
                "content": text,
            })),
            EventKind::ClarificationRequest { question, .. } => {
                messages.push(json!({"role": "assistant", "content": question}))
            }
            EventKind::ClarificationAnswer { answer } => messages.push(json!({"role": "user", "content": answer})),
            _ => {}
        }
    }
    messages
}

/// Supported values and category of the most recent failed tool call.
fn last_error(trace: &SessionTrace) -> (Vec<Value>, Option<String>) {
    trace
        .calls()
        .iter()
        .rev()
        .find_map(|c| c.result.as_ref().filter(|r| r.is_error))
        .map(|r| {
            let supported = r
                .structured
                .and_then(|s| s.get("supported"))
                .and_then(Value::as_array)
                .cloned()
                .unwrap_or_default();
            (supported, r.category().map(str::to_string))
        })
        .unwrap_or_default()
}

enum Parsed {
    Decision(PlannerDecision),
    Malformed { reason: String, message: Value },
}

fn parse_response(response: &Value, trace: &SessionTrace, catalog: &Catalog) -> Parsed {
    let Some(message) = response.pointer("/choices/0/message") else {
        return Parsed::Decision(PlannerDecision::fail(
            reasons::LLM_UNAVAILABLE,
            "response has no choices[0].message",
        ));
    };
    if let Some(call) = message
        .get("tool_calls")
        .and_then(Value::as_array)
        .and_then(|calls| calls.first())
    {
        let malformed = |reason: String| Parsed::Malformed {
            reason,
            message: message.clone(),
        };
        let Some(name) = call.pointer("/function/name").and_then(Value::as_str) else {
            return malformed("the tool call has no function name".into());
        };
        let Some((server, _)) = catalog.find(name) else {
            return malformed(format!("there is no tool named `{name}`"));
        };
        let arguments = match call.pointer("/function/arguments") {
            Some(Value::String(s)) if s.trim().is_empty() => json!({}),
            Some(Value::String(s)) => match serde_json::from_str::<Value>(s) {
                Ok(v @ Value::Object(_)) => v,
                _ => return malformed("the arguments are not a JSON object".into()),
            },
            Some(v @ Value::Object(_)) => v.clone(),
            None | Some(Value::Null) => json!({}),
            Some(_) => return malformed("the arguments are not a JSON object".into()),
        };
        return Parsed::Decision(PlannerDecision::CallTool {
            server: server.to_string(),
            name: name.to_string(),
            arguments,
        });
    }
    let text = message.get("content").and_then(Value::as_str).unwrap_or_default().trim();
    if text.ends_with('?') {
        let (options, category) = last_error(trace);
        Parsed::Decision(PlannerDecision::Clarify {
            question: text.to_string(),
            options,
            category,
            parameter: None,
        })
    } else {
        Parsed::Decision(PlannerDecision::Done {
            summary: text.to_string(),
        })
    }
}

#[async_trait]
impl<B: ChatBackend> Planner for LlmPlanner<B> {
    async fn plan(&self, trace: &SessionTrace, catalog: &Catalog, task: &TaskSpec) -> PlannerDecision {
        if catalog.is_empty() {
            return PlannerDecision::fail(reasons::NO_TOOLS, "no tools were discovered");
        }
        let mut messages = conversation(trace, task);
        let tools = tool_definitions(catalog);
        for attempt in 0..2 {
            let request = json!({
                "model": self.model,
                "messages": messages,
                "tools": tools,
                "tool_choice": "auto",
                "temperature": 0,
            });
            let response = match self.backend.complete(&request).await {
                Ok(r) => r,
                Err(e) => return PlannerDecision::fail(reasons::LLM_UNAVAILABLE, e.to_string()),
            };
            match parse_response(&response, trace, catalog) {
                Parsed::Decision(d) => return d,
                Parsed::Malformed { reason, message } if attempt == 0 => {
                    tracing::warn!(%reason, "malformed tool call, reprompting");
                    let mut echoed = message;
                    // keep the assistant turn but drop the unusable call
                    if let Some(obj) = echoed.as_object_mut() {
                        obj.remove("tool_calls");
                        obj.insert("content".into(), Value::String(String::new()));
                    }
                    messages.push(echoed);
                    messages.push(json!({"role": "user", "content": REPROMPT.replace("{reason}", &reason)}));
                }
                Parsed::Malformed { reason, .. } => {
                    return PlannerDecision::fail(reasons::MALFORMED_TOOL_CALL, reason);
                }
            }
        }
        unreachable!("the loop returns on its second attempt")
    }
}
