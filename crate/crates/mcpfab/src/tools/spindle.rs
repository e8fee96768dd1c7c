use async_trait::async_trait;
use mcpfab_core::mcp::{ToolCallResult, ToolDescriptor};
use mcpfab_core::registry::{render_tool, CapabilityDecl};
use mcpfab_core::rpm::{normalize_material, LookupError, RpmTable};
use serde_json::{json, Value};

use super::precheck;
use crate::server::ToolHandler;

/// Direct server: a pure function of the RPM table. Holds no bus client.
pub struct SpindleTool {
    cap: CapabilityDecl,
}

impl SpindleTool {
    pub fn new(cap: CapabilityDecl) -> Self {
        Self { cap }
    }

    pub fn compute(&self, arguments: &Value) -> ToolCallResult {
        let mut args = arguments.clone();
        if let Some(m) = args.get("material").and_then(Value::as_str) {
            let normalized = normalize_material(m);
            args["material"] = Value::String(normalized);
        }
        if let Err(result) = precheck(&self.cap, &args) {
            return result;
        }
        let material = args["material"].as_str().unwrap_or_default();
        let diameter = args["diameter_mm"].as_f64().unwrap_or_default();
        match RpmTable.lookup(material, diameter) {
            Ok(rpm) => ToolCallResult::success(
                format!("Recommended spindle speed for {material} at {} mm: {rpm} rpm.", fmt_mm(diameter)),
                json!({ "rpm": rpm }),
            ),
            // the declared constraints mirror the table, so this only
            // triggers if a document is edited out of sync with it
            Err(e) => {
                let supported = match e {
                    LookupError::UnknownMaterial(_) => Some(RpmTable.supported_materials()),
                    LookupError::UnsupportedDiameter(_) => Some(RpmTable.supported_diameters()),
                    LookupError::AboveMaximum(_) => None,
                };
                ToolCallResult::error(e.category(), &e.to_string(), supported)
            }
        }
    }
}

fn fmt_mm(d: f64) -> String {
    mcpfab_core::mcp::render_scalar(&mcpfab_core::trace::number_value(d))
}

#[async_trait]
impl ToolHandler for SpindleTool {
    fn tools(&self) -> Vec<ToolDescriptor> {
        vec![render_tool(&self.cap)]
    }

    async fn call(&self, _name: &str, arguments: Value) -> ToolCallResult {
        self.compute(&arguments)
    }
}
