use std::sync::Arc;

use async_trait::async_trait;
use mcpfab_core::bus::{BusOp, BusReply, ROBOT_TRANSPORT, STATUS_NO_OP, STATUS_SUCCEEDED};
use mcpfab_core::mcp::{ToolCallResult, ToolDescriptor};
use mcpfab_core::registry::{render_tool, CapabilityDecl};
use serde_json::{json, Value};

use super::{arg_str, precheck, DEVICE_ERROR, DEVICE_UNREACHABLE};
use crate::devicebus::BusClient;
use crate::server::ToolHandler;

/// Gateway from `transport_workpiece` to the robot's transport action.
/// Feedback received while the goal runs is attached under
/// `_meta.feedback`; it is not part of the tool's result.
pub struct RobotGateway {
    cap: CapabilityDecl,
    bus: Arc<BusClient>,
}

impl RobotGateway {
    pub fn new(cap: CapabilityDecl, bus: Arc<BusClient>) -> Self {
        Self { cap, bus }
    }

    pub async fn transport(&self, args: &Value) -> ToolCallResult {
        if let Err(result) = precheck(&self.cap, args) {
            return result;
        }
        let workpiece = arg_str(args, "workpiece");
        let to = arg_str(args, "to");
        let ex = match self
            .bus
            .request(BusOp::Goal, ROBOT_TRANSPORT, json!({"workpiece": workpiece, "to": to}))
            .await
        {
            Ok(ex) => ex,
            Err(e) => return ToolCallResult::error(DEVICE_UNREACHABLE, &e.to_string(), None),
        };
        let result = match &ex.reply {
            BusReply::Status { status, .. } if status == STATUS_SUCCEEDED => ToolCallResult::success(
                format!("Workpiece {workpiece} delivered to {to}."),
                json!({ "status": "done", "workpiece_location": to }),
            ),
            BusReply::Status { status, .. } if status == STATUS_NO_OP => ToolCallResult::success(
                format!("Workpiece {workpiece} is already at {to}; nothing to do."),
                json!({ "status": "done", "workpiece_location": to, "note": "no_op" }),
            ),
            BusReply::Error { error, .. } => {
                ToolCallResult::error(error, &format!("transport of {workpiece} to {to} failed"), None)
            }
            other => ToolCallResult::error(DEVICE_ERROR, &format!("unexpected bus reply {}", other.to_line()), None),
        };
        if ex.feedback.is_empty() {
            result
        } else {
            result.with_meta(json!({ "feedback": ex.feedback }))
        }
    }
}

#[async_trait]
impl ToolHandler for RobotGateway {
    fn tools(&self) -> Vec<ToolDescriptor> {
        vec![render_tool(&self.cap)]
    }

    async fn call(&self, _name: &str, arguments: Value) -> ToolCallResult {
        self.transport(&arguments).await
    }
}
