//! The three evaluation capabilities as [`ToolHandler`]s.
//!
//! `calculate_spindle_speed` is served directly from the RPM table.
//! `drill` and `transport_workpiece` are gateways: they translate each call
//! into device-bus traffic and relay the outcome.

mod drill;
mod robot;
mod spindle;

use std::sync::Arc;

use mcpfab_core::mcp::ToolCallResult;
use mcpfab_core::registry::{check_property_constraints, CapabilityDecl, EffectKind, Violation};
use mcpfab_core::trace::{TOOL_DRILL, TOOL_SPINDLE_SPEED, TOOL_TRANSPORT};
use serde_json::Value;

use crate::config::{ConfigError, ServerDoc};
use crate::devicebus::BusClient;
use crate::server::McpServer;

pub use drill::{DrillGateway, PollPolicy};
pub use robot::RobotGateway;
pub use spindle::SpindleTool;

/// Category used when the bus itself cannot be reached.
pub const DEVICE_UNREACHABLE: &str = "device_unreachable";
pub const DEVICE_TIMEOUT: &str = "device_timeout";
pub const DEVICE_ERROR: &str = "device_error";

/// Runs the capability's property constraints and turns the violations
/// into one error result: the first violation decides the category and
/// the supported list, the text lists every violation.
pub(crate) fn precheck(cap: &CapabilityDecl, args: &Value) -> Result<(), ToolCallResult> {
    check_property_constraints(cap, args).map_err(|v| violation_result(&v))
}

fn violation_result(violations: &[Violation]) -> ToolCallResult {
    let first = &violations[0];
    let messages: Vec<&str> = violations.iter().map(|v| v.message.as_str()).collect();
    ToolCallResult::error(&first.category, &messages.join("; "), first.supported.clone())
}

pub(crate) fn arg_str<'a>(args: &'a Value, key: &str) -> &'a str {
    args.get(key).and_then(Value::as_str).unwrap_or_default()
}

/// The three servers of the cell.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ServerKind {
    Spindle,
    Drill,
    Robot,
}

impl ServerKind {
    pub const ALL: [ServerKind; 3] = [ServerKind::Spindle, ServerKind::Drill, ServerKind::Robot];

    pub fn server_name(self) -> &'static str {
        match self {
            ServerKind::Spindle => "mcp-spindle",
            ServerKind::Drill => "mcp-drill",
            ServerKind::Robot => "mcp-robot",
        }
    }

    pub fn builtin_doc(self) -> &'static str {
        match self {
            ServerKind::Spindle => crate::config::SPINDLE_TOML,
            ServerKind::Drill => crate::config::DRILL_TOML,
            ServerKind::Robot => crate::config::ROBOT_TOML,
        }
    }

    /// Whether the server talks to the device bus.
    pub fn is_gateway(self) -> bool {
        !matches!(self, ServerKind::Spindle)
    }

    /// Builds the server from a capability document. Gateways need `bus`.
    pub fn build(self, doc: &ServerDoc, bus: Option<Arc<BusClient>>, poll: PollPolicy) -> Result<McpServer, ConfigError> {
        let registry = doc.registry()?;
        let tool = match self {
            ServerKind::Spindle => TOOL_SPINDLE_SPEED,
            ServerKind::Drill => TOOL_DRILL,
            ServerKind::Robot => TOOL_TRANSPORT,
        };
        let cap = registry
            .get(tool)
            .cloned()
            .ok_or_else(|| ConfigError::Invalid(format!("{} declares no `{tool}` capability", doc.server.name)))?;
        if registry.len() != 1 {
            return Err(ConfigError::Invalid(format!(
                "{} must declare exactly one capability",
                doc.server.name
            )));
        }
        let expected = if self.is_gateway() { EffectKind::Physical } else { EffectKind::Virtual };
        if cap.effect != expected {
            return Err(ConfigError::Invalid(format!("`{tool}` must have {expected:?} effect")));
        }
        let info = doc.server_info();
        let need_bus = || bus.clone().ok_or_else(|| ConfigError::Invalid(format!("{} needs a device bus", doc.server.name)));
        Ok(match self {
            ServerKind::Spindle => McpServer::new(info, SpindleTool::new(cap)),
            ServerKind::Drill => McpServer::new(info, DrillGateway::new(cap, need_bus()?, poll)),
            ServerKind::Robot => McpServer::new(info, RobotGateway::new(cap, need_bus()?)),
        })
    }
}
