//! Session tasks, the tool catalog and the ordered event log of one
//! orchestration run, plus the checks that can be run on a finished trace.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::mcp::ToolDescriptor;
use crate::plant::Station;

pub const TOOL_SPINDLE_SPEED: &str = "calculate_spindle_speed";
pub const TOOL_DRILL: &str = "drill";
pub const TOOL_TRANSPORT: &str = "transport_workpiece";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StructuredTask {
    pub workpiece: String,
    pub material: String,
    pub diameter_mm: f64,
    pub target_station: String,
    /// Where the user says the workpiece currently is. When absent the
    /// planner assumes it already sits where the drill needs it.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub location: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum TaskSpec {
    Structured(StructuredTask),
    FreeText { text: String },
}

impl TaskSpec {
    pub fn structured(&self) -> Option<&StructuredTask> {
        match self {
            TaskSpec::Structured(t) => Some(t),
            TaskSpec::FreeText { .. } => None,
        }
    }

    /// Renders the task as the user message given to a language model.
    pub fn prompt(&self) -> String {
        match self {
            TaskSpec::FreeText { text } => text.clone(),
            TaskSpec::Structured(t) => {
                let mut s = format!(
                    "Drill a {} mm hole into workpiece {} made of {}, then deliver it to {}.",
                    crate::mcp::render_scalar(&number_value(t.diameter_mm)),
                    t.workpiece,
                    t.material,
                    t.target_station
                );
                if let Some(loc) = &t.location {
                    s.push_str(&format!(" The workpiece is currently at {loc}."));
                }
                s
            }
        }
    }
}

/// Integral floats become JSON integers so that `8.0` is written as `8`.
pub fn number_value(x: f64) -> Value {
    if x == (x as i64) as f64 {
        Value::from(x as i64)
    } else {
        Value::from(x)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ServerTools {
    pub server: String,
    pub tools: Vec<ToolDescriptor>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DegradedServer {
    pub server: String,
    pub reason: String,
}

/// Everything the planner knows about the available capabilities.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Catalog {
    pub servers: Vec<ServerTools>,
    pub degraded: Vec<DegradedServer>,
}

impl Catalog {
    pub fn find(&self, tool: &str) -> Option<(&str, &ToolDescriptor)> {
        self.servers
            .iter()
            .flat_map(|s| s.tools.iter().map(move |t| (s.server.as_str(), t)))
            .find(|(_, t)| t.name == tool)
    }

    pub fn tools(&self) -> impl Iterator<Item = (&str, &ToolDescriptor)> {
        self.servers
            .iter()
            .flat_map(|s| s.tools.iter().map(move |t| (s.server.as_str(), t)))
    }

    pub fn tool_count(&self) -> usize {
        self.servers.iter().map(|s| s.tools.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.tool_count() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolRef {
    pub server: String,
    pub name: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    TaskReceived {
        task: TaskSpec,
    },
    ToolsDiscovered {
        tools: Vec<ToolRef>,
        degraded: Vec<DegradedServer>,
    },
    PlanNote {
        note: String,
    },
    ToolCall {
        call_id: u64,
        server: String,
        name: String,
        arguments: Value,
    },
    ToolFeedback {
        call_id: u64,
        feedback: Value,
    },
    ToolResult {
        call_id: u64,
        name: String,
        is_error: bool,
        text: String,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        structured: Option<Value>,
    },
    ClarificationRequest {
        question: String,
        options: Vec<Value>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        category: Option<String>,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        parameter: Option<String>,
    },
    ClarificationAnswer {
        answer: String,
    },
    Done {
        summary: String,
    },
    Failed {
        reason: String,
        detail: String,
    },
}

impl EventKind {
    pub fn is_terminal(&self) -> bool {
        matches!(self, EventKind::Done { .. } | EventKind::Failed { .. })
    }

    pub fn name(&self) -> &'static str {
        match self {
            EventKind::TaskReceived { .. } => "task_received",
            EventKind::ToolsDiscovered { .. } => "tools_discovered",
            EventKind::PlanNote { .. } => "plan_note",
            EventKind::ToolCall { .. } => "tool_call",
            EventKind::ToolFeedback { .. } => "tool_feedback",
            EventKind::ToolResult { .. } => "tool_result",
            EventKind::ClarificationRequest { .. } => "clarification_request",
            EventKind::ClarificationAnswer { .. } => "clarification_answer",
            EventKind::Done { .. } => "done",
            EventKind::Failed { .. } => "failed",
        }
    }
}

/// One trace entry. `seq` doubles as the logical timestamp.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub session: String,
    #[serde(flatten)]
    pub kind: EventKind,
}

impl SessionEvent {
    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

/// A tool call paired with its result, as reconstructed from a trace.
#[derive(Debug, Clone, PartialEq)]
pub struct CallRecord<'a> {
    pub call_id: u64,
    pub server: &'a str,
    pub name: &'a str,
    pub arguments: &'a Value,
    pub result: Option<CallOutcome<'a>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CallOutcome<'a> {
    pub is_error: bool,
    pub text: &'a str,
    pub structured: Option<&'a Value>,
}

impl CallOutcome<'_> {
    pub fn category(&self) -> Option<&str> {
        if !self.is_error {
            return None;
        }
        self.structured?.get("category")?.as_str()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionTrace {
    pub session: String,
    pub events: Vec<SessionEvent>,
}

impl SessionTrace {
    pub fn new(session: impl Into<String>) -> Self {
        Self {
            session: session.into(),
            events: Vec::new(),
        }
    }

    pub fn push(&mut self, kind: EventKind) -> &SessionEvent {
        let seq = self.events.len() as u64;
        self.events.push(SessionEvent {
            seq,
            session: self.session.clone(),
            kind,
        });
        &self.events[self.events.len() - 1]
    }

    pub fn terminal(&self) -> Option<&EventKind> {
        self.events.last().map(|e| &e.kind).filter(|k| k.is_terminal())
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        self.events.iter().find_map(|e| match &e.kind {
            EventKind::TaskReceived { task } => Some(task),
            _ => None,
        })
    }

    /// Calls in issue order, each with its result when one was recorded.
    pub fn calls(&self) -> Vec<CallRecord<'_>> {
        let mut calls: Vec<CallRecord<'_>> = Vec::new();
        let mut index: BTreeMap<u64, usize> = BTreeMap::new();
        for e in &self.events {
            match &e.kind {
                EventKind::ToolCall {
                    call_id,
                    server,
                    name,
                    arguments,
                } => {
                    index.insert(*call_id, calls.len());
                    calls.push(CallRecord {
                        call_id: *call_id,
                        server,
                        name,
                        arguments,
                        result: None,
                    });
                }
                EventKind::ToolResult {
                    call_id,
                    is_error,
                    text,
                    structured,
                    ..
                } => {
                    if let Some(&i) = index.get(call_id) {
                        calls[i].result = Some(CallOutcome {
                            is_error: *is_error,
                            text,
                            structured: structured.as_ref(),
                        });
                    }
                }
                _ => {}
            }
        }
        calls
    }

    pub fn tool_call_count(&self) -> usize {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::ToolCall { .. })).count()
    }

    pub fn clarification_requests(&self) -> Vec<&SessionEvent> {
        self.events
            .iter()
            .filter(|e| matches!(e.kind, EventKind::ClarificationRequest { .. }))
            .collect()
    }

    pub fn to_ndjson(&self) -> String {
        let mut out = String::new();
        for e in &self.events {
            out.push_str(&e.to_line());
            out.push('\n');
        }
        out
    }

    /// Structural rules every trace must satisfy: sequence numbers count up
    /// from zero, each call gets exactly one result before the next call,
    /// nothing is called while a clarification is open, and a terminal
    /// event can only be last.
    pub fn check_well_formed(&self) -> Result<(), String> {
        let mut open_call: Option<u64> = None;
        let mut open_clarification = false;
        for (i, e) in self.events.iter().enumerate() {
            if e.seq != i as u64 {
                return Err(format!("event {i} has seq {}", e.seq));
            }
            if e.session != self.session {
                return Err(format!("event {i} belongs to session {}", e.session));
            }
            match &e.kind {
                EventKind::ToolCall { call_id, .. } => {
                    if open_call.is_some() {
                        return Err(format!("call {call_id} issued before previous result"));
                    }
                    if open_clarification {
                        return Err(format!("call {call_id} issued during open clarification"));
                    }
                    open_call = Some(*call_id);
                }
                EventKind::ToolFeedback { call_id, .. } if open_call != Some(*call_id) => {
                    return Err(format!("feedback for call {call_id} outside its call"));
                }
                EventKind::ToolResult { call_id, .. } => {
                    if open_call != Some(*call_id) {
                        return Err(format!("unexpected result for call {call_id}"));
                    }
                    open_call = None;
                }
                EventKind::ClarificationRequest { .. } => open_clarification = true,
                EventKind::ClarificationAnswer { .. } => {
                    if !open_clarification {
                        return Err(format!("answer at {i} without a request"));
                    }
                    open_clarification = false;
                }
                k if k.is_terminal() && i + 1 != self.events.len() => {
                    return Err(format!("terminal event at {i} is not last"));
                }
                _ => {}
            }
        }
        if let Some(id) = open_call {
            if self.terminal().is_none() {
                return Err(format!("call {id} never answered"));
            }
        }
        Ok(())
    }

    /// Checks the drill's transition constraints on the trace alone: every
    /// successful drill is preceded by a successful spindle-speed
    /// calculation that returned the rpm the drill was called with, and by
    /// the workpiece being at the drill station.
    pub fn check_transition_compliance(&self) -> Result<(), String> {
        let initial = self
            .task()
            .and_then(TaskSpec::structured)
            .and_then(|t| t.location.clone())
            .unwrap_or_else(|| Station::DrillStation.as_str().to_string());
        let mut location: BTreeMap<String, String> = BTreeMap::new();
        let default_wp = self.task().and_then(TaskSpec::structured).map(|t| t.workpiece.clone());
        if let Some(wp) = &default_wp {
            location.insert(wp.clone(), initial.clone());
        }
        let mut last_rpm: Option<i64> = None;
        for call in self.calls() {
            let Some(result) = &call.result else { continue };
            if result.is_error {
                continue;
            }
            match call.name {
                TOOL_SPINDLE_SPEED => {
                    last_rpm = result.structured.and_then(|s| s.get("rpm")).and_then(Value::as_i64);
                }
                TOOL_TRANSPORT => {
                    if let (Some(wp), Some(to)) = (
                        call.arguments.get("workpiece").and_then(Value::as_str),
                        call.arguments.get("to").and_then(Value::as_str),
                    ) {
                        location.insert(wp.to_string(), to.to_string());
                    }
                }
                TOOL_DRILL => {
                    let rpm = call.arguments.get("rpm").and_then(Value::as_f64).map(|f| f as i64);
                    if rpm.is_none() || rpm != last_rpm {
                        return Err(format!(
                            "drill call {} used rpm {:?} but the last calculated rpm was {:?}",
                            call.call_id, rpm, last_rpm
                        ));
                    }
                    let wp = call.arguments.get("workpiece").and_then(Value::as_str).unwrap_or_default();
                    let here = location.get(wp).cloned().unwrap_or_else(|| initial.clone());
                    if here != Station::DrillStation.as_str() {
                        return Err(format!("drill call {} while {wp} was at {here}", call.call_id));
                    }
                }
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use serde_json::json;

    fn task() -> TaskSpec {
        TaskSpec::Structured(StructuredTask {
            workpiece: "wp1".into(),
            material: "steel".into(),
            diameter_mm: 10.0,
            target_station: "assembly_station".into(),
            location: None,
        })
    }

    fn call(trace: &mut SessionTrace, id: u64, name: &str, args: Value, ok: Option<Value>) {
        trace.push(EventKind::ToolCall {
            call_id: id,
            server: "s".into(),
            name: name.into(),
            arguments: args,
        });
        trace.push(EventKind::ToolResult {
            call_id: id,
            name: name.into(),
            is_error: ok.is_none(),
            text: String::new(),
            structured: ok,
        });
    }

    #[test]
    fn event_line_shape() {
        let mut t = SessionTrace::new("s1");
        let e = t.push(EventKind::Done { summary: "ok".into() });
        assert_eq!(e.to_line(), r#"{"seq":0,"session":"s1","event":"done","summary":"ok"}"#);
        let back: SessionEvent = serde_json::from_str(&e.to_line()).unwrap();
        assert_eq!(&back, e);
    }

    #[test]
    fn task_serde_is_tagged() {
        let v = serde_json::to_value(task()).unwrap();
        assert_eq!(v["kind"], "structured");
        let free: TaskSpec = serde_json::from_value(json!({"kind": "free_text", "text": "drill it"})).unwrap();
        assert_eq!(free, TaskSpec::FreeText { text: "drill it".into() });
    }

    #[test]
    fn prompt_renders_integral_diameter() {
        assert_eq!(
            task().prompt(),
            "Drill a 10 mm hole into workpiece wp1 made of steel, then deliver it to assembly_station."
        );
    }

    #[test]
    fn compliance_accepts_calc_then_drill() {
        let mut t = SessionTrace::new("s");
        t.push(EventKind::TaskReceived { task: task() });
        call(&mut t, 1, TOOL_SPINDLE_SPEED, json!({}), Some(json!({"rpm": 955})));
        call(&mut t, 2, TOOL_DRILL, json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 10}), Some(json!({})));
        assert_eq!(t.check_transition_compliance(), Ok(()));
        assert_eq!(t.check_well_formed(), Ok(()));
    }

    #[test]
    fn compliance_rejects_drill_with_other_rpm() {
        let mut t = SessionTrace::new("s");
        t.push(EventKind::TaskReceived { task: task() });
        call(&mut t, 1, TOOL_SPINDLE_SPEED, json!({}), Some(json!({"rpm": 955})));
        call(&mut t, 2, TOOL_DRILL, json!({"workpiece": "wp1", "rpm": 1000, "diameter_mm": 10}), Some(json!({})));
        assert!(t.check_transition_compliance().is_err());
    }

    #[test]
    fn compliance_rejects_drill_away_from_station() {
        let mut t = SessionTrace::new("s");
        let mut drifted = task();
        if let TaskSpec::Structured(s) = &mut drifted {
            s.location = Some("storage".into());
        }
        t.push(EventKind::TaskReceived { task: drifted });
        call(&mut t, 1, TOOL_SPINDLE_SPEED, json!({}), Some(json!({"rpm": 955})));
        call(&mut t, 2, TOOL_DRILL, json!({"workpiece": "wp1", "rpm": 955}), Some(json!({})));
        assert!(t.check_transition_compliance().is_err());
    }

    #[test]
    fn call_during_clarification_is_malformed() {
        let mut t = SessionTrace::new("s");
        t.push(EventKind::ClarificationRequest {
            question: "?".into(),
            options: vec![],
            category: None,
            parameter: None,
        });
        call(&mut t, 1, TOOL_DRILL, json!({}), Some(json!({})));
        assert!(t.check_well_formed().is_err());
    }

    #[test]
    fn catalog_lookup() {
        let cat = Catalog {
            servers: vec![ServerTools {
                server: "mcp-drill".into(),
                tools: vec![ToolDescriptor {
                    name: "drill".into(),
                    description: "d".into(),
                    input_schema: json!({}),
                }],
            }],
            degraded: vec![],
        };
        assert_eq!(cat.find("drill").map(|(s, _)| s), Some("mcp-drill"));
        assert!(cat.find("transport_workpiece").is_none());
        assert_eq!(cat.tool_count(), 1);
    }
}
