//! Verdicts from a finished trace and the final plant state.

use mcpfab_core::plant::PlantState;
use mcpfab_core::trace::{CallRecord, EventKind, SessionTrace};
use serde_json::Value;

use super::scenario::{CallMatch, Expect, Terminal};

fn values_match(expected: &Value, actual: &Value) -> bool {
    match (expected.as_f64(), actual.as_f64()) {
        (Some(a), Some(b)) => a == b,
        _ => expected == actual,
    }
}

fn call_matches(m: &CallMatch, call: &CallRecord<'_>) -> bool {
    if m.name != call.name {
        return false;
    }
    let args_ok = m
        .arguments
        .iter()
        .all(|(k, v)| call.arguments.get(k).is_some_and(|a| values_match(v, a)));
    let success_ok = match m.success {
        None => true,
        Some(want) => call.result.as_ref().is_some_and(|r| !r.is_error == want),
    };
    args_ok && success_ok
}

fn describe(m: &CallMatch) -> String {
    let mut s = m.name.clone();
    if !m.arguments.is_empty() {
        s.push_str(&Value::Object(m.arguments.clone()).to_string());
    }
    if let Some(ok) = m.success {
        s.push_str(if ok { " (success)" } else { " (error)" });
    }
    s
}

/// Checks that hold for every trace regardless of the script.
pub fn structural_failures(trace: &SessionTrace, step_budget: usize) -> Vec<String> {
    let mut failures = Vec::new();
    if let Err(e) = trace.check_well_formed() {
        failures.push(format!("trace is not well formed: {e}"));
    }
    if trace.terminal().is_none() {
        failures.push("trace has no terminal event".into());
    }
    if trace.tool_call_count() > step_budget {
        failures.push(format!("{} tool calls exceed the budget of {step_budget}", trace.tool_call_count()));
    }
    if matches!(trace.terminal(), Some(EventKind::Done { .. })) {
        if let Err(e) = trace.check_transition_compliance() {
            failures.push(format!("transition constraints violated: {e}"));
        }
    }
    // clarification options must be the triggering error's supported list
    let mut last_supported: Option<&Value> = None;
    for e in &trace.events {
        match &e.kind {
            EventKind::ToolResult { is_error, structured, .. } => {
                last_supported = if *is_error {
                    structured.as_ref().and_then(|s| s.get("supported"))
                } else {
                    None
                };
            }
            EventKind::ClarificationRequest { options, .. } => {
                if let Some(Value::Array(supported)) = last_supported {
                    if options != supported {
                        failures.push(format!(
                            "clarification at seq {} offers {:?} instead of {:?}",
                            e.seq, options, supported
                        ));
                    }
                }
            }
            _ => {}
        }
    }
    failures
}

pub fn expectation_failures(expect: &Expect, trace: &SessionTrace, plant: Option<&PlantState>) -> Vec<String> {
    let mut failures = Vec::new();
    let calls = trace.calls();

    let (terminal, reason) = match trace.terminal() {
        Some(EventKind::Done { .. }) => (Some(Terminal::Done), None),
        Some(EventKind::Failed { reason, .. }) => (Some(Terminal::Failed), Some(reason.as_str())),
        _ => (None, None),
    };
    if let Some(want) = expect.terminal {
        if terminal != Some(want) {
            let got = match (terminal, reason) {
                (Some(Terminal::Failed), Some(r)) => format!("failed ({r})"),
                (Some(t), _) => format!("{t:?}").to_lowercase(),
                (None, _) => "none".into(),
            };
            failures.push(format!("terminal: expected {want:?}, got {got}").to_lowercase());
        }
    }
    if let Some(want) = &expect.fail_reason {
        if reason != Some(want.as_str()) {
            failures.push(format!("fail reason: expected {want}, got {reason:?}"));
        }
    }
    if let Some(order) = &expect.tool_order {
        let got: Vec<&str> = calls.iter().map(|c| c.name).collect();
        if got != order.iter().map(String::as_str).collect::<Vec<_>>() {
            failures.push(format!("tool order: expected {order:?}, got {got:?}"));
        }
    }
    if let Some(n) = expect.tool_calls {
        if calls.len() != n {
            failures.push(format!("tool calls: expected {n}, got {}", calls.len()));
        }
    }
    if let Some(n) = expect.clarifications {
        let got = trace.clarification_requests().len();
        if got != n {
            failures.push(format!("clarifications: expected {n}, got {got}"));
        }
    }
    if let Some(want) = &expect.error_categories {
        let got: Vec<&str> = calls
            .iter()
            .filter_map(|c| c.result.as_ref())
            .filter(|r| r.is_error)
            .map(|r| r.category().unwrap_or(""))
            .collect();
        if got != want.iter().map(String::as_str).collect::<Vec<_>>() {
            failures.push(format!("error categories: expected {want:?}, got {got:?}"));
        }
    }
    if let Some(m) = &expect.first_call {
        if !calls.first().is_some_and(|c| call_matches(m, c)) {
            failures.push(format!("first call is not {}", describe(m)));
        }
    }
    if let Some(m) = &expect.last_call {
        if !calls.last().is_some_and(|c| call_matches(m, c)) {
            failures.push(format!("last call is not {}", describe(m)));
        }
    }
    for p in &expect.precedes {
        match calls.iter().position(|c| call_matches(&p.after, c)) {
            None => failures.push(format!("no call matching {}", describe(&p.after))),
            Some(i) => {
                if !calls[..i].iter().any(|c| call_matches(&p.before, c)) {
                    failures.push(format!("{} is not preceded by {}", describe(&p.after), describe(&p.before)));
                }
            }
        }
    }
    for c in &expect.counts {
        let got = calls.iter().filter(|r| call_matches(&c.call, r)).count();
        if got != c.count {
            failures.push(format!("calls matching {}: expected {}, got {got}", describe(&c.call), c.count));
        }
    }
    for p in &expect.plant {
        let Some(plant) = plant else {
            failures.push("no plant snapshot".into());
            break;
        };
        let Some(wp) = plant.workpieces.get(&p.workpiece) else {
            failures.push(format!("workpiece {} missing from plant", p.workpiece));
            continue;
        };
        if let Some(loc) = &p.location {
            if wp.location.as_str() != loc {
                failures.push(format!("{} is at {}, expected {loc}", wp.id, wp.location.as_str()));
            }
        }
        if let Some(n) = p.holes {
            if wp.holes.len() != n {
                failures.push(format!("{} has {} holes, expected {n}", wp.id, wp.holes.len()));
            }
        }
        if let Some(h) = &p.last_hole {
            match wp.holes.last() {
                Some(last) if last.diameter_mm == h.diameter_mm && last.rpm_used == h.rpm_used => {}
                other => failures.push(format!("{} last hole is {other:?}, expected {h:?}", wp.id)),
            }
        }
    }
    failures
}
