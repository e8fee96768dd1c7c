//! JSON-RPC 2.0 envelope: message model, serialization and validation.
//!
//! Decoding goes through [`serde_json::Value`] first so that a message which
//! parses as JSON but breaks an envelope rule can still be classified as an
//! invalid request, with its id recovered when possible.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::{Map, Value};

pub const JSONRPC_VERSION: &str = "2.0";

pub const PARSE_ERROR: i64 = -32700;
pub const INVALID_REQUEST: i64 = -32600;
pub const METHOD_NOT_FOUND: i64 = -32601;
pub const INVALID_PARAMS: i64 = -32602;
pub const INTERNAL_ERROR: i64 = -32603;

/// Request identifier. JSON-RPC allows integers and strings.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Id {
    Num(i64),
    Str(String),
}

impl Id {
    fn to_value(&self) -> Value {
        match self {
            Id::Num(n) => Value::from(*n),
            Id::Str(s) => Value::String(s.clone()),
        }
    }
}

impl From<i64> for Id {
    fn from(n: i64) -> Self {
        Id::Num(n)
    }
}

impl From<&str> for Id {
    fn from(s: &str) -> Self {
        Id::Str(s.to_string())
    }
}

impl fmt::Display for Id {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Id::Num(n) => write!(f, "{n}"),
            Id::Str(s) => write!(f, "{s:?}"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolError {
    pub code: i64,
    pub message: String,
    pub data: Option<Value>,
}

impl ProtocolError {
    pub fn new(code: i64, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
            data: None,
        }
    }

    pub fn with_data(mut self, data: Value) -> Self {
        self.data = Some(data);
        self
    }

    pub fn parse_error() -> Self {
        Self::new(PARSE_ERROR, "Parse error")
    }

    pub fn invalid_request(detail: impl Into<String>) -> Self {
        Self::new(INVALID_REQUEST, detail)
    }

    pub fn method_not_found(method: &str) -> Self {
        Self::new(METHOD_NOT_FOUND, alloc::format!("Method not found: {method}"))
    }

    pub fn invalid_params(detail: impl Into<String>) -> Self {
        Self::new(INVALID_PARAMS, detail)
    }

    fn to_value(&self) -> Value {
        let mut obj = Map::new();
        obj.insert("code".into(), Value::from(self.code));
        obj.insert("message".into(), Value::String(self.message.clone()));
        if let Some(data) = &self.data {
            obj.insert("data".into(), data.clone());
        }
        Value::Object(obj)
    }
}

impl fmt::Display for ProtocolError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} ({})", self.message, self.code)
    }
}

/// Outcome carried by a response: exactly one of `result` / `error`.
#[derive(Debug, Clone, PartialEq)]
pub enum Outcome {
    Result(Value),
    Error(ProtocolError),
}

#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Request {
        id: Id,
        method: String,
        params: Option<Value>,
    },
    Notification {
        method: String,
        params: Option<Value>,
    },
    /// `id` is `None` only for error responses to messages whose id could
    /// not be determined (serialized as `"id":null`).
    Response { id: Option<Id>, outcome: Outcome },
}

impl Message {
    pub fn request(id: impl Into<Id>, method: impl Into<String>, params: Option<Value>) -> Self {
        Message::Request {
            id: id.into(),
            method: method.into(),
            params,
        }
    }

    pub fn notification(method: impl Into<String>, params: Option<Value>) -> Self {
        Message::Notification {
            method: method.into(),
            params,
        }
    }

    pub fn success(id: Id, result: Value) -> Self {
        Message::Response {
            id: Some(id),
            outcome: Outcome::Result(result),
        }
    }

    pub fn failure(id: Option<Id>, error: ProtocolError) -> Self {
        Message::Response {
            id,
            outcome: Outcome::Error(error),
        }
    }

    pub fn id(&self) -> Option<&Id> {
        match self {
            Message::Request { id, .. } => Some(id),
            Message::Response { id, .. } => id.as_ref(),
            Message::Notification { .. } => None,
        }
    }

    pub fn method(&self) -> Option<&str> {
        match self {
            Message::Request { method, .. } | Message::Notification { method, .. } => Some(method),
            Message::Response { .. } => None,
        }
    }

    /// Checks the envelope invariants that the type system does not already
    /// enforce.
    pub fn validate(&self) -> Result<(), FrameError> {
        match self {
            Message::Request { method, params, .. } | Message::Notification { method, params } => {
                if method.is_empty() {
                    return Err(FrameError::Invariant("empty method name"));
                }
                match params {
                    None | Some(Value::Object(_)) | Some(Value::Array(_)) => Ok(()),
                    Some(_) => Err(FrameError::Invariant("params must be an object or array")),
                }
            }
            Message::Response { id: None, outcome: Outcome::Result(_) } => {
                Err(FrameError::Invariant("success response without id"))
            }
            Message::Response { .. } => Ok(()),
        }
    }

    /// Serializes to minified JSON bytes without a trailing newline.
    pub fn to_json(&self) -> Result<Vec<u8>, FrameError> {
        self.validate()?;
        serde_json::to_vec(self).map_err(|_| FrameError::Unrepresentable)
    }
}

impl Serialize for Message {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("jsonrpc", JSONRPC_VERSION)?;
        match self {
            Message::Request { id, method, params } => {
                map.serialize_entry("id", &id.to_value())?;
                map.serialize_entry("method", method)?;
                if let Some(p) = params {
                    map.serialize_entry("params", p)?;
                }
            }
            Message::Notification { method, params } => {
                map.serialize_entry("method", method)?;
                if let Some(p) = params {
                    map.serialize_entry("params", p)?;
                }
            }
            Message::Response { id, outcome } => {
                let id = id.as_ref().map(Id::to_value).unwrap_or(Value::Null);
                map.serialize_entry("id", &id)?;
                match outcome {
                    Outcome::Result(v) => map.serialize_entry("result", v)?,
                    Outcome::Error(e) => map.serialize_entry("error", &e.to_value())?,
                }
            }
        }
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum FrameError {
    #[error("message violates envelope invariant: {0}")]
    Invariant(&'static str),
    #[error("message contains a value that cannot be serialized")]
    Unrepresentable,
}

/// Why an inbound frame could not be turned into a [`Message`].
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum DecodeError {
    #[error("parse error")]
    Parse,
    #[error("invalid request: {reason}")]
    InvalidRequest { id: Option<Id>, reason: String },
}

impl DecodeError {
    /// The error response a server should send back for this frame.
    pub fn to_response(&self) -> Message {
        match self {
            DecodeError::Parse => Message::failure(None, ProtocolError::parse_error()),
            DecodeError::InvalidRequest { id, reason } => {
                Message::failure(id.clone(), ProtocolError::invalid_request(reason.clone()))
            }
        }
    }
}

fn invalid(id: Option<Id>, reason: &str) -> DecodeError {
    DecodeError::InvalidRequest {
        id,
        reason: reason.to_string(),
    }
}

fn parse_id(v: &Value) -> Result<Option<Id>, ()> {
    match v {
        Value::Null => Ok(None),
        Value::String(s) => Ok(Some(Id::Str(s.clone()))),
        Value::Number(n) => n.as_i64().map(|n| Some(Id::Num(n))).ok_or(()),
        _ => Err(()),
    }
}

/// Parses one frame (one stdio line or one HTTP body).
pub fn decode(bytes: &[u8]) -> Result<Message, DecodeError> {
    let value: Value = serde_json::from_slice(bytes).map_err(|_| DecodeError::Parse)?;
    from_value(value)
}

/// Validates an already-parsed JSON value as a single JSON-RPC message.
pub fn from_value(value: Value) -> Result<Message, DecodeError> {
    let mut obj = match value {
        Value::Object(obj) => obj,
        Value::Array(_) => return Err(invalid(None, "batch requests are not supported")),
        _ => return Err(invalid(None, "message must be a JSON object")),
    };

    let id_present = obj.contains_key("id");
    let id = match obj.get("id") {
        None => None,
        Some(v) => parse_id(v).map_err(|_| invalid(None, "id must be an integer, string or null"))?,
    };

    match obj.get("jsonrpc") {
        Some(Value::String(v)) if v == JSONRPC_VERSION => {}
        _ => return Err(invalid(id, "jsonrpc must be \"2.0\"")),
    }

    let has_result = obj.contains_key("result");
    let has_error = obj.contains_key("error");

    if let Some(method) = obj.remove("method") {
        let method = match method {
            Value::String(m) if !m.is_empty() => m,
            _ => return Err(invalid(id, "method must be a non-empty string")),
        };
        if has_result || has_error {
            return Err(invalid(id, "request must not carry result or error"));
        }
        let params = match obj.remove("params") {
            None => None,
            Some(p @ (Value::Object(_) | Value::Array(_))) => Some(p),
            Some(_) => return Err(invalid(id, "params must be an object or array")),
        };
        return match (id_present, id) {
            (false, _) => Ok(Message::Notification { method, params }),
            (true, Some(id)) => Ok(Message::Request { id, method, params }),
            (true, None) => Err(invalid(None, "request id must not be null")),
        };
    }

    if !id_present {
        return Err(invalid(None, "response must carry an id"));
    }
    match (obj.remove("result"), obj.remove("error")) {
        (Some(_), Some(_)) => Err(invalid(id, "response must not carry both result and error")),
        (None, None) => Err(invalid(id, "message has neither method, result nor error")),
        (Some(result), None) => match id {
            Some(id) => Ok(Message::success(id, result)),
            None => Err(invalid(None, "success response with null id")),
        },
        (None, Some(error)) => {
            let error = parse_error_object(error).ok_or_else(|| invalid(id.clone(), "malformed error object"))?;
            Ok(Message::failure(id, error))
        }
    }
}

fn parse_error_object(v: Value) -> Option<ProtocolError> {
    let mut obj = match v {
        Value::Object(obj) => obj,
        _ => return None,
    };
    let code = obj.get("code")?.as_i64()?;
    let message = match obj.remove("message")? {
        Value::String(s) => s,
        _ => return None,
    };
    Some(ProtocolError {
        code,
        message,
        data: obj.remove("data"),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn minimal_request_serialization() {
        let msg = Message::request(1, "ping", None);
        assert_eq!(msg.to_json().unwrap(), br#"{"jsonrpc":"2.0","id":1,"method":"ping"}"#);
    }

    #[test]
    fn notification_has_no_id_key() {
        let msg = Message::notification("notifications/initialized", None);
        let text = String::from_utf8(msg.to_json().unwrap()).unwrap();
        assert!(!text.contains("\"id\""));
        assert!(text.contains("\"jsonrpc\":\"2.0\""));
    }

    #[test]
    fn minimal_response_decodes() {
        let msg = decode(br#"{"jsonrpc":"2.0","id":5,"result":{}}"#).unwrap();
        assert_eq!(msg, Message::success(Id::Num(5), json!({})));
    }

    #[test]
    fn malformed_is_parse_error() {
        assert_eq!(decode(b"{not json"), Err(DecodeError::Parse));
    }

    #[test]
    fn result_and_error_together_is_invalid() {
        let err = decode(br#"{"jsonrpc":"2.0","id":7,"result":{},"error":{"code":1,"message":"x"}}"#).unwrap_err();
        match err {
            DecodeError::InvalidRequest { id, .. } => assert_eq!(id, Some(Id::Num(7))),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn batch_is_invalid_request() {
        let err = decode(br#"[{"jsonrpc":"2.0","id":1,"method":"ping"}]"#).unwrap_err();
        assert!(matches!(err, DecodeError::InvalidRequest { id: None, .. }));
        let resp = err.to_response();
        assert!(matches!(resp, Message::Response { outcome: Outcome::Error(ProtocolError { code: INVALID_REQUEST, .. }), .. }));
    }

    #[test]
    fn wrong_version_keeps_id() {
        let err = decode(br#"{"jsonrpc":"1.0","id":"a","method":"ping"}"#).unwrap_err();
        assert_eq!(
            err,
            DecodeError::InvalidRequest {
                id: Some(Id::Str("a".into())),
                reason: "jsonrpc must be \"2.0\"".into()
            }
        );
    }

    #[test]
    fn scalar_params_rejected() {
        assert!(decode(br#"{"jsonrpc":"2.0","id":1,"method":"x","params":3}"#).is_err());
        assert!(Message::request(1, "x", Some(json!(3))).to_json().is_err());
    }

    #[test]
    fn parse_error_response_has_null_id() {
        let text = DecodeError::Parse.to_response().to_json().unwrap();
        assert_eq!(
            text,
            br#"{"jsonrpc":"2.0","id":null,"error":{"code":-32700,"message":"Parse error"}}"#
        );
    }

    #[test]
    fn success_without_id_cannot_be_encoded() {
        let msg = Message::Response {
            id: None,
            outcome: Outcome::Result(json!({})),
        };
        assert_eq!(msg.to_json(), Err(FrameError::Invariant("success response without id")));
    }

    #[test]
    fn fractional_id_rejected() {
        assert!(decode(br#"{"jsonrpc":"2.0","id":1.5,"method":"ping"}"#).is_err());
    }
}
