//! Capability declarations and their rendering into MCP tool descriptors.
//!
//! A [`CapabilityDecl`] is the natural-language capability model: the
//! description text, typed properties, property constraints that a skill
//! checks on its own arguments, and transition constraints that only a
//! planner can honour. [`render_tool`] turns one into the descriptor that
//! `tools/list` advertises.

use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt::Write as _;

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::mcp::{is_valid_tool_name, render_scalar, ToolDescriptor};

/// Heading under which transition constraints are appended to a tool
/// description.
pub const USAGE_CONSTRAINTS_HEADING: &str = "Usage constraints:";

pub const DEFAULT_VIOLATION_CATEGORY: &str = "constraint_violation";
pub const INVALID_ARGUMENTS: &str = "invalid_arguments";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SemanticType {
    Number,
    Integer,
    String,
    Boolean,
}

impl SemanticType {
    pub fn json_type(self) -> &'static str {
        match self {
            SemanticType::Number => "number",
            SemanticType::Integer => "integer",
            SemanticType::String => "string",
            SemanticType::Boolean => "boolean",
        }
    }

    pub fn accepts(self, v: &Value) -> bool {
        match self {
            SemanticType::Number => v.is_number(),
            SemanticType::Integer => match v.as_f64() {
                Some(f) => v.is_i64() || v.is_u64() || f == (f as i64) as f64,
                None => false,
            },
            SemanticType::String => v.is_string(),
            SemanticType::Boolean => v.is_boolean(),
        }
    }

    fn is_numeric(self) -> bool {
        matches!(self, SemanticType::Number | SemanticType::Integer)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyDecl {
    pub name: String,
    #[serde(rename = "type")]
    pub semantic_type: SemanticType,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub unit: Option<String>,
    #[serde(default = "yes")]
    pub required: bool,
    pub doc: String,
    /// Arguments that only describe the request and never reach the skill.
    #[serde(default)]
    pub descriptive_only: bool,
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "predicate", rename_all = "snake_case")]
pub enum Predicate {
    Max { bound: f64 },
    Min { bound: f64 },
    MemberOf { set: Vec<Value> },
}

/// A constraint internal to one capability, evaluable from its own
/// argument map.
///
/// `message` is a template; `{property}`, `{value}`, `{bound}`, `{unit}` and
/// `{supported}` are substituted when a violation is reported.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PropertyConstraint {
    pub property: String,
    #[serde(flatten)]
    pub predicate: Predicate,
    pub message: String,
    #[serde(default = "default_category")]
    pub category: String,
}

fn default_category() -> String {
    DEFAULT_VIOLATION_CATEGORY.to_string()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EffectKind {
    /// Computational; served by a direct server.
    Virtual,
    /// Acts on the shop floor; served by a gateway server.
    Physical,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BusCommand {
    pub op: String,
    pub address: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "executor", rename_all = "snake_case")]
pub enum Executor {
    Direct { function: String },
    Gateway { commands: Vec<BusCommand> },
}

/// The implementation bound to a capability. The owning capability is the
/// declaration this skill is nested in.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Skill {
    #[serde(flatten)]
    pub executor: Executor,
    /// May name more than the capability's properties (e.g. configuration
    /// values the skill reads itself).
    pub parameters: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CapabilityDecl {
    pub name: String,
    pub description: String,
    pub effect: EffectKind,
    pub properties: Vec<PropertyDecl>,
    #[serde(default)]
    pub returns: Vec<PropertyDecl>,
    #[serde(default)]
    pub constraints: Vec<PropertyConstraint>,
    #[serde(default)]
    pub transition_constraints: Vec<String>,
    pub skill: Skill,
}

impl CapabilityDecl {
    pub fn property(&self, name: &str) -> Option<&PropertyDecl> {
        self.properties.iter().find(|p| p.name == name)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("capability `{0}` is already registered")]
    Duplicate(String),
    #[error("capability name `{0}` does not match [a-z][a-z0-9_]*")]
    InvalidName(String),
    #[error("capability `{0}` has an empty description")]
    EmptyDescription(String),
    #[error("capability `{capability}` declares property `{property}` more than once")]
    DuplicateProperty { capability: String, property: String },
    #[error("constraint in `{capability}` references unknown property `{property}`")]
    DanglingConstraint { capability: String, property: String },
    #[error("constraint on `{capability}.{property}` bounds a non-numeric property")]
    NonNumericBound { capability: String, property: String },
    #[error("capability `{capability}` property `{property}` is neither a skill parameter nor descriptive-only")]
    UnboundProperty { capability: String, property: String },
    #[error("capability `{0}`: virtual effects need a direct skill and physical effects a gateway skill")]
    EffectMismatch(String),
}

/// Position of a capability in registration order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct RegistryId(pub usize);

pub fn validate(cap: &CapabilityDecl) -> Result<(), RegistryError> {
    let name = || cap.name.clone();
    if !is_valid_tool_name(&cap.name) {
        return Err(RegistryError::InvalidName(name()));
    }
    if cap.description.trim().is_empty() {
        return Err(RegistryError::EmptyDescription(name()));
    }
    for list in [&cap.properties, &cap.returns] {
        for (i, p) in list.iter().enumerate() {
            if list[..i].iter().any(|q| q.name == p.name) {
                return Err(RegistryError::DuplicateProperty {
                    capability: name(),
                    property: p.name.clone(),
                });
            }
        }
    }
    for c in &cap.constraints {
        let prop = cap.property(&c.property).ok_or_else(|| RegistryError::DanglingConstraint {
            capability: name(),
            property: c.property.clone(),
        })?;
        if matches!(c.predicate, Predicate::Max { .. } | Predicate::Min { .. }) && !prop.semantic_type.is_numeric() {
            return Err(RegistryError::NonNumericBound {
                capability: name(),
                property: c.property.clone(),
            });
        }
    }
    for p in &cap.properties {
        if !p.descriptive_only && !cap.skill.parameters.iter().any(|s| s == &p.name) {
            return Err(RegistryError::UnboundProperty {
                capability: name(),
                property: p.name.clone(),
            });
        }
    }
    let consistent = matches!(
        (cap.effect, &cap.skill.executor),
        (EffectKind::Virtual, Executor::Direct { .. }) | (EffectKind::Physical, Executor::Gateway { .. })
    );
    if !consistent {
        return Err(RegistryError::EffectMismatch(name()));
    }
    Ok(())
}

/// Capabilities in registration order. Filled at startup, read afterwards.
#[derive(Debug, Clone, Default)]
pub struct Registry {
    caps: Vec<CapabilityDecl>,
}

impl Registry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, cap: CapabilityDecl) -> Result<RegistryId, RegistryError> {
        if self.get(&cap.name).is_some() {
            return Err(RegistryError::Duplicate(cap.name));
        }
        validate(&cap)?;
        self.caps.push(cap);
        Ok(RegistryId(self.caps.len() - 1))
    }

    pub fn get(&self, name: &str) -> Option<&CapabilityDecl> {
        self.caps.iter().find(|c| c.name == name)
    }

    pub fn by_id(&self, id: RegistryId) -> Option<&CapabilityDecl> {
        self.caps.get(id.0)
    }

    pub fn iter(&self) -> impl Iterator<Item = &CapabilityDecl> {
        self.caps.iter()
    }

    pub fn names(&self) -> Vec<&str> {
        self.caps.iter().map(|c| c.name.as_str()).collect()
    }

    pub fn len(&self) -> usize {
        self.caps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.caps.is_empty()
    }

    pub fn tools(&self) -> Vec<ToolDescriptor> {
        self.caps.iter().map(render_tool).collect()
    }
}

fn property_line(out: &mut String, p: &PropertyDecl) {
    let _ = write!(out, "\n- {}", p.name);
    if let Some(unit) = &p.unit {
        let _ = write!(out, " ({unit})");
    }
    if !p.required {
        out.push_str(" [optional]");
    }
    let _ = write!(out, ": {}", p.doc);
}

fn join_values(set: &[Value]) -> String {
    let parts: Vec<String> = set.iter().map(render_scalar).collect();
    parts.join(", ")
}

fn unit_suffix(unit: Option<&str>) -> String {
    unit.map(|u| alloc::format!(" {u}")).unwrap_or_default()
}

fn constraint_sentence(c: &PropertyConstraint, unit: Option<&str>) -> String {
    let unit = unit_suffix(unit);
    match &c.predicate {
        Predicate::Max { bound } => alloc::format!("{} ≤ {}{}", c.property, render_scalar(&Value::from(*bound)), unit),
        Predicate::Min { bound } => alloc::format!("{} ≥ {}{}", c.property, render_scalar(&Value::from(*bound)), unit),
        Predicate::MemberOf { set } => alloc::format!("{} must be one of: {}{}", c.property, join_values(set), unit),
    }
}

fn input_schema(cap: &CapabilityDecl) -> Value {
    let mut props = Map::new();
    let mut required = Vec::new();
    for p in &cap.properties {
        let mut schema = Map::new();
        schema.insert("type".into(), Value::String(p.semantic_type.json_type().into()));
        schema.insert("description".into(), Value::String(p.doc.clone()));
        if let Some(unit) = &p.unit {
            schema.insert("unit".into(), Value::String(unit.clone()));
        }
        props.insert(p.name.clone(), Value::Object(schema));
        if p.required {
            required.push(Value::String(p.name.clone()));
        }
    }
    let mut schema = Map::new();
    schema.insert("type".into(), Value::String("object".into()));
    schema.insert("properties".into(), Value::Object(props));
    schema.insert("required".into(), Value::Array(required));
    schema.insert("additionalProperties".into(), Value::Bool(false));
    Value::Object(schema)
}

/// Renders a capability into the descriptor advertised by `tools/list`.
///
/// The description is the capability text, then the parameter and return
/// docs with units, then one sentence per property constraint, then the
/// transition constraints verbatim under [`USAGE_CONSTRAINTS_HEADING`].
/// Empty sections are omitted. Output is a pure function of `cap`.
pub fn render_tool(cap: &CapabilityDecl) -> ToolDescriptor {
    let mut text = cap.description.trim_end().to_string();
    if !cap.properties.is_empty() {
        text.push_str("\n\nParameters:");
        for p in &cap.properties {
            property_line(&mut text, p);
        }
    }
    if !cap.returns.is_empty() {
        text.push_str("\n\nReturns:");
        for p in &cap.returns {
            property_line(&mut text, p);
        }
    }
    if !cap.constraints.is_empty() {
        text.push_str("\n\nConstraints:");
        for c in &cap.constraints {
            let unit = cap.property(&c.property).and_then(|p| p.unit.as_deref());
            let _ = write!(text, "\n- {}", constraint_sentence(c, unit));
        }
    }
    if !cap.transition_constraints.is_empty() {
        let _ = write!(text, "\n\n{USAGE_CONSTRAINTS_HEADING}");
        for t in &cap.transition_constraints {
            let _ = write!(text, "\n- {t}");
        }
    }
    ToolDescriptor {
        name: cap.name.clone(),
        description: text,
        input_schema: input_schema(cap),
    }
}

/// Extracts the transition-constraint sentences from a rendered description.
pub fn usage_constraints(description: &str) -> Vec<&str> {
    let Some(start) = description.find(USAGE_CONSTRAINTS_HEADING) else {
        return Vec::new();
    };
    description[start + USAGE_CONSTRAINTS_HEADING.len()..]
        .lines()
        .map(str::trim)
        .take_while(|l| l.is_empty() || l.starts_with("- "))
        .filter_map(|l| l.strip_prefix("- "))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Violation {
    pub property: String,
    pub category: String,
    pub message: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub supported: Option<Vec<Value>>,
}

fn numbers_equal(a: &Value, b: &Value) -> bool {
    match (a.as_f64(), b.as_f64()) {
        (Some(x), Some(y)) => x == y,
        _ => a == b,
    }
}

fn fill_template(c: &PropertyConstraint, value: &Value, unit: Option<&str>) -> String {
    let bound = match &c.predicate {
        Predicate::Max { bound } | Predicate::Min { bound } => render_scalar(&Value::from(*bound)),
        Predicate::MemberOf { .. } => String::new(),
    };
    let supported = match &c.predicate {
        Predicate::MemberOf { set } => join_values(set),
        _ => String::new(),
    };
    c.message
        .replace("{property}", &c.property)
        .replace("{value}", &render_scalar(value))
        .replace("{bound}", &bound)
        .replace("{unit}", unit.unwrap_or(""))
        .replace("{supported}", &supported)
}

/// Evaluates every property constraint of `cap` against `args`.
///
/// Missing required properties and wrongly typed values are reported as
/// `invalid_arguments` violations ahead of the declared constraints, which
/// are reported in declaration order. Transition constraints are never
/// evaluated here.
pub fn check_property_constraints(cap: &CapabilityDecl, args: &Value) -> Result<(), Vec<Violation>> {
    let empty = Map::new();
    let map = args.as_object().unwrap_or(&empty);
    let mut violations = Vec::new();

    if !args.is_object() {
        violations.push(Violation {
            property: String::new(),
            category: INVALID_ARGUMENTS.into(),
            message: "arguments must be an object".into(),
            supported: None,
        });
    }
    for p in &cap.properties {
        match map.get(&p.name) {
            None | Some(Value::Null) if p.required => violations.push(Violation {
                property: p.name.clone(),
                category: INVALID_ARGUMENTS.into(),
                message: alloc::format!("missing required property `{}`", p.name),
                supported: None,
            }),
            Some(v) if !v.is_null() && !p.semantic_type.accepts(v) => violations.push(Violation {
                property: p.name.clone(),
                category: INVALID_ARGUMENTS.into(),
                message: alloc::format!("property `{}` must be of type {}", p.name, p.semantic_type.json_type()),
                supported: None,
            }),
            _ => {}
        }
    }
    for c in &cap.constraints {
        let Some(prop) = cap.property(&c.property) else { continue };
        let Some(value) = map.get(&c.property).filter(|v| prop.semantic_type.accepts(v)) else {
            continue;
        };
        let violated = match &c.predicate {
            Predicate::Max { bound } => value.as_f64().is_some_and(|x| x > *bound),
            Predicate::Min { bound } => value.as_f64().is_some_and(|x| x < *bound),
            Predicate::MemberOf { set } => !set.iter().any(|s| numbers_equal(s, value)),
        };
        if violated {
            let supported = match &c.predicate {
                Predicate::MemberOf { set } => Some(set.clone()),
                _ => None,
            };
            violations.push(Violation {
                property: c.property.clone(),
                category: c.category.clone(),
                message: fill_template(c, value, prop.unit.as_deref()),
                supported,
            });
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
