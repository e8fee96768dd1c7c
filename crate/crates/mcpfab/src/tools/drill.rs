use std::sync::Arc;

use async_trait::async_trait;
use mcpfab_core::bus::{BusOp, BusReply, DRILL_LAST_ERROR, DRILL_RESET, DRILL_START, DRILL_STATE, WORKPIECE_PREFIX};
use mcpfab_core::mcp::{ToolCallResult, ToolDescriptor};
use mcpfab_core::registry::{render_tool, CapabilityDecl};
use serde_json::{json, Value};

use super::{arg_str, precheck, DEVICE_ERROR, DEVICE_TIMEOUT, DEVICE_UNREACHABLE};
use crate::devicebus::{BusClient, BusError};
use crate::server::ToolHandler;

/// How the gateway waits for a job: one `Drill.State` read per interval of
/// simulated time until the timeout has elapsed.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PollPolicy {
    pub interval_ms: u64,
    pub timeout_ms: u64,
}

impl Default for PollPolicy {
    fn default() -> Self {
        Self {
            interval_ms: 100,
            timeout_ms: 10_000,
        }
    }
}

/// Gateway from the `drill` tool to the drill controller on the bus.
pub struct DrillGateway {
    cap: CapabilityDecl,
    bus: Arc<BusClient>,
    poll: PollPolicy,
}

enum Step {
    Reply(BusReply),
    Fail(ToolCallResult),
}

impl DrillGateway {
    pub fn new(cap: CapabilityDecl, bus: Arc<BusClient>, poll: PollPolicy) -> Self {
        Self { cap, bus, poll }
    }

    async fn send(&self, op: BusOp, address: &str, args: Value) -> Step {
        match self.bus.request(op, address, args).await {
            Ok(ex) => match ex.reply {
                BusReply::Error { error, .. } => Step::Fail(rejected(address, &error)),
                reply => Step::Reply(reply),
            },
            Err(e) => Step::Fail(unreachable(&e)),
        }
    }

    pub async fn drill(&self, args: &Value) -> ToolCallResult {
        if let Err(result) = precheck(&self.cap, args) {
            return result;
        }
        let workpiece = arg_str(args, "workpiece");
        let start_args = json!({
            "workpiece": workpiece,
            "rpm": args["rpm"],
            "diameter_mm": args["diameter_mm"],
        });
        if let Step::Fail(r) = self.send(BusOp::Call, DRILL_START, start_args).await {
            return r;
        }

        let polls = self.poll.timeout_ms / self.poll.interval_ms.max(1);
        let mut finished = false;
        for _ in 0..polls {
            let state = match self.send(BusOp::Read, DRILL_STATE, json!({"wait_ms": self.poll.interval_ms})).await {
                Step::Reply(BusReply::Value { value, .. }) => value,
                Step::Reply(other) => return malformed(&other),
                Step::Fail(r) => return r,
            };
            match state.as_str() {
                Some("Complete") => {
                    finished = true;
                    break;
                }
                Some("Error") => return self.device_error().await,
                _ => {}
            }
        }
        if !finished {
            return ToolCallResult::error(
                DEVICE_TIMEOUT,
                &format!("drill did not complete within {} ms", self.poll.timeout_ms),
                None,
            );
        }

        let hole = match self.send(BusOp::Read, &format!("{WORKPIECE_PREFIX}{workpiece}"), Value::Null).await {
            Step::Reply(BusReply::Value { value, .. }) => value["holes"].as_array().and_then(|h| h.last().cloned()),
            Step::Reply(other) => return malformed(&other),
            Step::Fail(r) => return r,
        };
        if let Step::Fail(r) = self.send(BusOp::Call, DRILL_RESET, Value::Null).await {
            return r;
        }
        let Some(hole) = hole else {
            return ToolCallResult::error(DEVICE_ERROR, "job completed without recording a hole", None);
        };
        ToolCallResult::success(
            format!(
                "Drilled workpiece {workpiece}: hole {} mm at {} rpm.",
                mcpfab_core::mcp::render_scalar(&hole["diameter_mm"]),
                mcpfab_core::mcp::render_scalar(&hole["rpm_used"])
            ),
            json!({ "status": "done", "hole": hole }),
        )
    }

    async fn device_error(&self) -> ToolCallResult {
        let reason = match self.send(BusOp::Read, DRILL_LAST_ERROR, Value::Null).await {
            Step::Reply(BusReply::Value { value, .. }) => value.as_str().unwrap_or("unknown").to_string(),
            _ => "unknown".to_string(),
        };
        // leave the machine usable for the next job
        let _ = self.send(BusOp::Call, DRILL_RESET, Value::Null).await;
        ToolCallResult::error(DEVICE_ERROR, &format!("drill faulted: {reason}"), None)
    }
}

fn rejected(address: &str, reason: &str) -> ToolCallResult {
    // bus reasons are passed through unchanged as the error category
    ToolCallResult::error(reason, &format!("{address} was rejected by the drill controller"), None)
}

fn unreachable(e: &BusError) -> ToolCallResult {
    ToolCallResult::error(DEVICE_UNREACHABLE, &e.to_string(), None)
}

fn malformed(reply: &BusReply) -> ToolCallResult {
    ToolCallResult::error(DEVICE_ERROR, &format!("unexpected bus reply {}", reply.to_line()), None)
}

#[async_trait]
impl ToolHandler for DrillGateway {
    fn tools(&self) -> Vec<ToolDescriptor> {
        vec![render_tool(&self.cap)]
    }

    async fn call(&self, _name: &str, arguments: Value) -> ToolCallResult {
        self.drill(&arguments).await
    }
}
