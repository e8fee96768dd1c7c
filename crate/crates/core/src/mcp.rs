//! MCP payloads (tool descriptors, call results, handshake) and the pure
//! method router used by every server.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::jsonrpc::{Id, Message, ProtocolError};

pub const PROTOCOL_VERSION: &str = "desk-1";

pub const METHOD_INITIALIZE: &str = "initialize";
pub const METHOD_INITIALIZED: &str = "notifications/initialized";
pub const METHOD_PING: &str = "ping";
pub const METHOD_TOOLS_LIST: &str = "tools/list";
pub const METHOD_TOOLS_CALL: &str = "tools/call";

/// Error category reported for a `tools/call` naming a tool the server
/// does not have.
pub const UNKNOWN_TOOL: &str = "unknown_tool";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolDescriptor {
    pub name: String,
    pub description: String,
    #[serde(rename = "inputSchema")]
    pub input_schema: Value,
}

/// Tool names must match `[a-z][a-z0-9_]*`.
pub fn is_valid_tool_name(name: &str) -> bool {
    let mut chars = name.chars();
    match chars.next() {
        Some(c) if c.is_ascii_lowercase() => {}
        _ => return false,
    }
    chars.all(|c| c.is_ascii_lowercase() || c.is_ascii_digit() || c == '_')
}

impl ToolDescriptor {
    pub fn is_valid(&self) -> bool {
        is_valid_tool_name(&self.name) && !self.description.trim().is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum ContentBlock {
    Text { text: String },
}

impl ContentBlock {
    pub fn text(&self) -> &str {
        match self {
            ContentBlock::Text { text } => text,
        }
    }
}

/// Result of `tools/call`. Tool-level failures travel here with
/// `is_error = true`; protocol errors never do.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCallResult {
    #[serde(rename = "isError", default)]
    pub is_error: bool,
    pub content: Vec<ContentBlock>,
    #[serde(rename = "structuredContent", default, skip_serializing_if = "Option::is_none")]
    pub structured: Option<Value>,
    #[serde(rename = "_meta", default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Value>,
}

impl ToolCallResult {
    pub fn success(text: impl Into<String>, structured: Value) -> Self {
        Self {
            is_error: false,
            content: vec![ContentBlock::Text { text: text.into() }],
            structured: Some(structured),
            meta: None,
        }
    }

    /// Builds an error result. The first text block always starts with the
    /// category so that plain-text consumers can classify it.
    pub fn error(category: &str, message: &str, supported: Option<Vec<Value>>) -> Self {
        let mut structured = Map::new();
        structured.insert("category".into(), Value::String(category.to_string()));
        structured.insert("message".into(), Value::String(message.to_string()));
        let mut text = alloc::format!("{category}: {message}");
        if let Some(list) = supported {
            let rendered: Vec<String> = list.iter().map(render_scalar).collect();
            text.push_str(&alloc::format!(". Supported values: {}.", rendered.join(", ")));
            structured.insert("supported".into(), Value::Array(list));
        }
        Self {
            is_error: true,
            content: vec![ContentBlock::Text { text }],
            structured: Some(Value::Object(structured)),
            meta: None,
        }
    }

    pub fn with_meta(mut self, meta: Value) -> Self {
        self.meta = Some(meta);
        self
    }

    pub fn category(&self) -> Option<&str> {
        if !self.is_error {
            return None;
        }
        self.structured.as_ref()?.get("category")?.as_str()
    }

    pub fn supported(&self) -> Option<&Vec<Value>> {
        self.structured.as_ref()?.get("supported")?.as_array()
    }

    pub fn text(&self) -> String {
        let parts: Vec<&str> = self.content.iter().map(ContentBlock::text).collect();
        parts.join("\n")
    }

    /// Checks that an error result names its category in a text block.
    pub fn is_well_formed(&self) -> bool {
        if !self.is_error {
            return true;
        }
        match self.category() {
            Some(cat) => self.content.iter().any(|b| b.text().contains(cat)),
            None => false,
        }
    }
}

/// Renders numbers without a trailing `.0` and strings without quotes.
pub fn render_scalar(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        Value::Number(n) => match n.as_f64() {
            Some(f) if n.is_f64() && f == (f as i64) as f64 => alloc::format!("{}", f as i64),
            _ => n.to_string(),
        },
        other => other.to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerInfo {
    pub name: String,
    pub version: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InitializeResult {
    #[serde(rename = "protocolVersion")]
    pub protocol_version: String,
    #[serde(rename = "serverInfo")]
    pub server_info: ServerInfo,
    pub capabilities: Value,
}

impl InitializeResult {
    pub fn new(server_info: ServerInfo) -> Self {
        Self {
            protocol_version: PROTOCOL_VERSION.to_string(),
            server_info,
            capabilities: json!({ "tools": {} }),
        }
    }
}

pub fn initialize_params(client_name: &str, client_version: &str) -> Value {
    json!({
        "protocolVersion": PROTOCOL_VERSION,
        "capabilities": {},
        "clientInfo": { "name": client_name, "version": client_version },
    })
}

pub fn call_params(name: &str, arguments: &Value) -> Value {
    json!({ "name": name, "arguments": arguments })
}

pub fn list_result(tools: &[ToolDescriptor]) -> Value {
    json!({ "tools": tools })
}

/// What a server has to do with one inbound message.
#[derive(Debug, Clone, PartialEq)]
pub enum Inbound {
    Initialize { id: Id },
    Ping { id: Id },
    ListTools { id: Id },
    CallTool { id: Id, name: String, arguments: Value },
    /// A notification; servers never answer these.
    Notification { method: String },
    /// The request is already answered (unknown method, bad params).
    Reject(Message),
    /// Responses sent to a server are dropped.
    Ignore,
}

pub fn route(msg: Message) -> Inbound {
    match msg {
        Message::Notification { method, .. } => Inbound::Notification { method },
        Message::Response { .. } => Inbound::Ignore,
        Message::Request { id, method, params } => match method.as_str() {
            METHOD_INITIALIZE => Inbound::Initialize { id },
            METHOD_PING => Inbound::Ping { id },
            METHOD_TOOLS_LIST => Inbound::ListTools { id },
            METHOD_TOOLS_CALL => match parse_call(params) {
                Ok((name, arguments)) => Inbound::CallTool { id, name, arguments },
                Err(detail) => Inbound::Reject(Message::failure(Some(id), ProtocolError::invalid_params(detail))),
            },
            other => Inbound::Reject(Message::failure(Some(id), ProtocolError::method_not_found(other))),
        },
    }
}

fn parse_call(params: Option<Value>) -> Result<(String, Value), &'static str> {
    let mut obj = match params {
        Some(Value::Object(obj)) => obj,
        _ => return Err("tools/call params must be an object"),
    };
    let name = match obj.remove("name") {
        Some(Value::String(name)) => name,
        _ => return Err("tools/call params.name must be a string"),
    };
    let arguments = match obj.remove("arguments") {
        None | Some(Value::Null) => Value::Object(Map::new()),
        Some(args @ Value::Object(_)) => args,
        Some(_) => return Err("tools/call params.arguments must be an object"),
    };
    Ok((name, arguments))
}
