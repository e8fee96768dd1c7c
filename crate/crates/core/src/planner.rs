//! Rule-based planner used as the reproducible stand-in for a language
//! model.
//!
//! The planner is a pure function of the trace so far, the discovered
//! catalog and a structured task. Ordering requirements are read from the
//! drill tool's `Usage constraints:` text, not assumed.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use crate::mcp::render_scalar;
use crate::registry::usage_constraints;
use crate::trace::{
    number_value, Catalog, EventKind, SessionTrace, StructuredTask, TaskSpec, TOOL_DRILL, TOOL_SPINDLE_SPEED,
    TOOL_TRANSPORT,
};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "decision", rename_all = "snake_case")]
pub enum PlannerDecision {
    CallTool {
        server: String,
        name: String,
        arguments: Value,
    },
    Clarify {
        question: String,
        options: Vec<Value>,
        category: Option<String>,
        parameter: Option<String>,
    },
    Retry {
        server: String,
        name: String,
        corrected_arguments: Value,
        reason: String,
    },
    Done {
        summary: String,
    },
    Fail {
        reason: String,
        detail: String,
    },
}

impl PlannerDecision {
    pub fn fail(reason: &str, detail: impl Into<String>) -> Self {
        PlannerDecision::Fail {
            reason: reason.to_string(),
            detail: detail.into(),
        }
    }
}

/// Failure reasons produced by the planner and the session loop.
pub mod reasons {
    pub const NO_TOOLS: &str = "no_tools";
    pub const TOOL_MISSING: &str = "tool_missing";
    pub const BUDGET: &str = "budget";
    pub const NEEDS_USER: &str = "needs_user";
    pub const UNSUPPORTED_TASK: &str = "unsupported_task";
    pub const LLM_UNAVAILABLE: &str = "llm_unavailable";
    pub const MALFORMED_TOOL_CALL: &str = "malformed_tool_call";
}

/// Lowercased alphanumeric tokens.
pub fn tokens(s: &str) -> Vec<String> {
    s.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Picks the candidate sharing the most tokens with `input`. Ties go to the
/// candidate whose longest shared token is longer, then to list order.
/// Returns `None` when nothing overlaps.
pub fn best_token_overlap<'a>(input: &str, candidates: &'a [Value]) -> Option<&'a str> {
    let wanted = tokens(input);
    let mut best: Option<(&str, (usize, usize))> = None;
    for c in candidates.iter().filter_map(Value::as_str) {
        let shared: Vec<String> = tokens(c).into_iter().filter(|t| wanted.contains(t)).collect();
        let score = (shared.len(), shared.iter().map(String::len).max().unwrap_or(0));
        if score.0 > 0 && best.is_none_or(|(_, b)| score > b) {
            best = Some((c, score));
        }
    }
    best.map(|(c, _)| c)
}

#[derive(Debug, Clone)]
struct PendingError {
    tool: String,
    category: String,
    message: String,
    supported: Option<Vec<Value>>,
    arguments: Value,
}

/// What the trace says has happened so far.
#[derive(Debug, Clone)]
struct Progress {
    material: String,
    diameter: Value,
    location: String,
    rpm: Option<i64>,
    drilled: bool,
    pending: Option<PendingError>,
    unknown_material_errors: u32,
    presence_recoveries: u32,
    open_clarification: Option<Option<String>>,
}

impl Progress {
    fn fold(trace: &SessionTrace, task: &StructuredTask, assumed_location: &str) -> Self {
        let mut p = Progress {
            material: task.material.clone(),
            diameter: number_value(task.diameter_mm),
            location: task.location.clone().unwrap_or_else(|| assumed_location.to_string()),
            rpm: None,
            drilled: false,
            pending: None,
            unknown_material_errors: 0,
            presence_recoveries: 0,
            open_clarification: None,
        };
        let mut args_by_call: Vec<(u64, &str, &Value)> = Vec::new();
        for e in &trace.events {
            match &e.kind {
                EventKind::ToolCall {
                    call_id, name, arguments, ..
                } => args_by_call.push((*call_id, name, arguments)),
                EventKind::ToolResult {
                    call_id,
                    name,
                    is_error,
                    text,
                    structured,
                } => {
                    let args = args_by_call
                        .iter()
                        .find(|(id, _, _)| id == call_id)
                        .map(|(_, _, a)| (*a).clone())
                        .unwrap_or(Value::Null);
                    if *is_error {
                        p.record_error(name, text, structured.as_ref(), args);
                    } else {
                        p.record_success(name, structured.as_ref(), &args);
                    }
                }
                EventKind::ClarificationRequest { parameter, .. } => {
                    p.open_clarification = Some(parameter.clone());
                }
                EventKind::ClarificationAnswer { answer } => {
                    let parameter = p.open_clarification.take().flatten();
                    p.apply_answer(parameter.as_deref(), answer);
                }
                _ => {}
            }
        }
        p
    }

    fn record_success(&mut self, tool: &str, structured: Option<&Value>, args: &Value) {
        self.pending = None;
        match tool {
            TOOL_SPINDLE_SPEED => {
                self.rpm = structured.and_then(|s| s.get("rpm")).and_then(Value::as_i64);
                if let Some(m) = args.get("material").and_then(Value::as_str) {
                    self.material = m.to_string();
                }
                if let Some(d) = args.get("diameter_mm") {
                    self.diameter = d.clone();
                }
            }
            TOOL_DRILL => self.drilled = true,
            TOOL_TRANSPORT => {
                let to = structured
                    .and_then(|s| s.get("workpiece_location"))
                    .or_else(|| args.get("to"))
                    .and_then(Value::as_str);
                if let Some(to) = to {
                    self.location = to.to_string();
                }
            }
            _ => {}
        }
    }

    fn record_error(&mut self, tool: &str, text: &str, structured: Option<&Value>, args: Value) {
        let field = |k: &str| structured.and_then(|s| s.get(k));
        let category = field("category").and_then(Value::as_str).unwrap_or("tool_error").to_string();
        match category.as_str() {
            "unknown_material" => self.unknown_material_errors += 1,
            "workpiece_not_present" => self.presence_recoveries += 1,
            _ => {}
        }
        if tool == TOOL_SPINDLE_SPEED {
            self.rpm = None;
        }
        self.pending = Some(PendingError {
            tool: tool.to_string(),
            category,
            message: field("message").and_then(Value::as_str).unwrap_or(text).to_string(),
            supported: field("supported").and_then(Value::as_array).cloned(),
            arguments: args,
        });
    }

    fn apply_answer(&mut self, parameter: Option<&str>, answer: &str) {
        let answer = answer.trim();
        match parameter {
            Some("diameter_mm") => match answer.trim_end_matches("mm").trim().parse::<f64>() {
                Ok(d) => self.diameter = number_value(d),
                // leave the error pending so the same question is asked again
                Err(_) => return,
            },
            Some("material") => self.material = answer.to_string(),
            _ => {}
        }
        self.pending = None;
        self.rpm = None;
        self.unknown_material_errors = 0;
    }
}

struct DrillRequirements {
    station: Option<String>,
    prerequisites: Vec<String>,
}

/// Reads the drill's usage constraints: tools it names must run first, and
/// "located at <station>" pins where the workpiece has to be.
fn drill_requirements(catalog: &Catalog, description: &str) -> DrillRequirements {
    let mut req = DrillRequirements {
        station: None,
        prerequisites: Vec::new(),
    };
    for sentence in usage_constraints(description) {
        if let Some(idx) = sentence.find("located at ") {
            let rest = &sentence[idx + "located at ".len()..];
            let station: String = rest
                .chars()
                .take_while(|c| c.is_ascii_alphanumeric() || *c == '_')
                .collect();
            if !station.is_empty() {
                req.station = Some(station);
            }
        }
        let known = [TOOL_SPINDLE_SPEED, TOOL_TRANSPORT];
        let names = catalog.tools().map(|(_, t)| t.name.as_str()).chain(known);
        for name in names {
            if name != TOOL_DRILL && mentions(sentence, name) && !req.prerequisites.iter().any(|p| p == name) {
                req.prerequisites.push(name.to_string());
            }
        }
    }
    req
}

/// True when `name` occurs in `text` as a whole identifier.
fn mentions(text: &str, name: &str) -> bool {
    let is_ident = |c: char| c.is_ascii_alphanumeric() || c == '_';
    text.match_indices(name).any(|(i, _)| {
        let before = text[..i].chars().next_back();
        let after = text[i + name.len()..].chars().next();
        !before.is_some_and(is_ident) && !after.is_some_and(is_ident)
    })
}

fn call(catalog: &Catalog, name: &str, arguments: Value) -> PlannerDecision {
    match catalog.find(name) {
        Some((server, _)) => PlannerDecision::CallTool {
            server: server.to_string(),
            name: name.to_string(),
            arguments,
        },
        None => PlannerDecision::fail(crate::planner::reasons::TOOL_MISSING, name),
    }
}

fn object(pairs: &[(&str, Value)]) -> Value {
    let mut m = Map::new();
    for (k, v) in pairs {
        m.insert((*k).to_string(), v.clone());
    }
    Value::Object(m)
}

fn clarify(err: &PendingError, parameter: &str) -> PlannerDecision {
    let options = err.supported.clone().unwrap_or_default();
    let mut question = format!("{} ({}).", err.message.trim_end_matches('.'), err.category);
    if options.is_empty() {
        question.push_str(&format!(" Please provide a different value for {parameter}."));
    } else {
        let listed: Vec<String> = options.iter().map(render_scalar).collect();
        question.push_str(&format!(" Please choose a {parameter} from: {}.", listed.join(", ")));
    }
    PlannerDecision::Clarify {
        question,
        options,
        category: Some(err.category.clone()),
        parameter: Some(parameter.to_string()),
    }
}

/// Decides the next step for a structured task.
///
/// Rules, in priority order: react to the last tool error (retry a
/// mistyped material once by token overlap, ask the user about an
/// unsupported diameter, move a missing workpiece to the drill); otherwise
/// move the workpiece to the drill station, calculate the spindle speed,
/// drill with the calculated rpm, deliver to the target, and finish.
pub fn deterministic_plan(trace: &SessionTrace, catalog: &Catalog, task: &TaskSpec) -> PlannerDecision {
    use reasons::*;

    if catalog.is_empty() {
        return PlannerDecision::fail(NO_TOOLS, "no tools were discovered");
    }
    let Some(task) = task.structured() else {
        return PlannerDecision::fail(UNSUPPORTED_TASK, "free-text tasks need a language-model planner");
    };
    let Some((_, drill)) = catalog.find(TOOL_DRILL) else {
        return PlannerDecision::fail(TOOL_MISSING, TOOL_DRILL);
    };
    let req = drill_requirements(catalog, &drill.description);
    let station = req.station.clone().unwrap_or_else(|| "drill_station".to_string());
    let progress = Progress::fold(trace, task, &station);

    let mut needed: Vec<&str> = req.prerequisites.iter().map(String::as_str).collect();
    needed.push(TOOL_SPINDLE_SPEED);
    let must_move = (!progress.drilled && progress.location != station) || task.target_station != station;
    if must_move {
        needed.push(TOOL_TRANSPORT);
    }
    if let Some(missing) = needed.iter().find(|n| catalog.find(n).is_none()) {
        return PlannerDecision::fail(TOOL_MISSING, *missing);
    }

    if let Some(err) = &progress.pending {
        return match err.category.as_str() {
            "unknown_material" => {
                let supported = err.supported.clone().unwrap_or_default();
                let pick = best_token_overlap(&progress.material, &supported);
                match pick {
                    Some(m) if progress.unknown_material_errors == 1 => {
                        let mut args = err.arguments.clone();
                        if let Some(obj) = args.as_object_mut() {
                            obj.insert("material".into(), Value::String(m.to_string()));
                        }
                        PlannerDecision::Retry {
                            server: catalog.find(&err.tool).map(|(s, _)| s.to_string()).unwrap_or_default(),
                            name: err.tool.clone(),
                            corrected_arguments: args,
                            reason: format!("`{}` is not a supported material; `{m}` is the closest match", progress.material),
                        }
                    }
                    _ => clarify(err, "material"),
                }
            }
            "unsupported_diameter" | "constraint_violation" => clarify(err, "diameter_mm"),
            "workpiece_not_present" if progress.presence_recoveries == 1 => call(
                catalog,
                TOOL_TRANSPORT,
                object(&[("workpiece", json!(task.workpiece)), ("to", json!(station))]),
            ),
            other => PlannerDecision::fail(other, err.message.clone()),
        };
    }
    if progress.open_clarification.is_some() {
        return PlannerDecision::fail(NEEDS_USER, "clarification is still open");
    }

    if !progress.drilled && progress.location != station {
        return call(
            catalog,
            TOOL_TRANSPORT,
            object(&[("workpiece", json!(task.workpiece)), ("to", json!(station))]),
        );
    }
    if !progress.drilled {
        let Some(rpm) = progress.rpm else {
            return call(
                catalog,
                TOOL_SPINDLE_SPEED,
                object(&[("material", json!(progress.material)), ("diameter_mm", progress.diameter.clone())]),
            );
        };
        return call(
            catalog,
            TOOL_DRILL,
            object(&[
                ("workpiece", json!(task.workpiece)),
                ("rpm", json!(rpm)),
                ("diameter_mm", progress.diameter.clone()),
            ]),
        );
    }
    if progress.location != task.target_station {
        return call(
            catalog,
            TOOL_TRANSPORT,
            object(&[("workpiece", json!(task.workpiece)), ("to", json!(task.target_station))]),
        );
    }
    PlannerDecision::Done {
        summary: format!(
            "{} drilled ({} mm, {} material, {} rpm) and delivered to {}",
            task.workpiece,
            render_scalar(&progress.diameter),
            progress.material,
            progress.rpm.map(|r| r.to_string()).unwrap_or_else(|| "?".into()),
            progress.location
        ),
    }
}
