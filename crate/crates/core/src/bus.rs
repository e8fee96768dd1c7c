//! Device-bus wire format and the router that maps bus messages onto the
//! simulated plant.
//!
//! One JSON object per line. Requests are `{"op","node"|"action","args","cid"}`;
//! replies are `{"cid","value"|"status"|"error"}`; action feedback is
//! `{"cid","feedback":{...}}`. Node reads and method calls mimic OPC UA,
//! goals mimic a ROS 2 action.

use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;

use serde::ser::{SerializeMap, Serializer};
use serde::Serialize;
use serde_json::{Map, Value};

use crate::plant::{Plant, PlantLayout, TransportOutcome};

pub const DRILL_START: &str = "Drill.Start";
pub const DRILL_STATE: &str = "Drill.State";
pub const DRILL_RESET: &str = "Drill.Reset";
pub const DRILL_LAST_ERROR: &str = "Drill.LastError";
pub const ROBOT_TRANSPORT: &str = "Robot.Transport";
pub const PLANT_SNAPSHOT: &str = "Plant.Snapshot";
pub const PLANT_CLOCK: &str = "Plant.Clock";
/// Prefix of per-workpiece nodes, e.g. `Workpiece.wp1`.
pub const WORKPIECE_PREFIX: &str = "Workpiece.";

pub const STATUS_ACCEPTED: &str = "accepted";
pub const STATUS_OK: &str = "ok";
pub const STATUS_SUCCEEDED: &str = "succeeded";
pub const STATUS_NO_OP: &str = "no_op";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BusOp {
    Read,
    Write,
    Call,
    Goal,
    Feedback,
    Result,
}

impl BusOp {
    pub fn as_str(self) -> &'static str {
        match self {
            BusOp::Read => "read",
            BusOp::Write => "write",
            BusOp::Call => "call",
            BusOp::Goal => "goal",
            BusOp::Feedback => "feedback",
            BusOp::Result => "result",
        }
    }

    pub fn parse(s: &str) -> Option<BusOp> {
        [BusOp::Read, BusOp::Write, BusOp::Call, BusOp::Goal, BusOp::Feedback, BusOp::Result]
            .into_iter()
            .find(|op| op.as_str() == s)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BusRequest {
    pub op: BusOp,
    /// Node address for read/write/call, action name for goals.
    pub address: String,
    pub args: Value,
    pub cid: Option<u64>,
}

impl BusRequest {
    pub fn new(op: BusOp, address: &str, args: Value, cid: u64) -> Self {
        Self {
            op,
            address: address.to_string(),
            args,
            cid: Some(cid),
        }
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    pub fn parse(line: &str) -> Result<BusRequest, String> {
        let value: Value = serde_json::from_str(line).map_err(|_| "malformed".to_string())?;
        let Value::Object(mut obj) = value else {
            return Err("malformed".into());
        };
        let op = obj
            .get("op")
            .and_then(Value::as_str)
            .and_then(BusOp::parse)
            .ok_or_else(|| "invalid_op".to_string())?;
        let address = match (obj.remove("node"), obj.remove("action")) {
            (Some(Value::String(a)), None) | (None, Some(Value::String(a))) => a,
            _ => return Err("invalid_address".into()),
        };
        let cid = match obj.get("cid") {
            None | Some(Value::Null) => None,
            Some(v) => Some(v.as_u64().ok_or_else(|| "invalid_cid".to_string())?),
        };
        Ok(BusRequest {
            op,
            address,
            args: obj.remove("args").unwrap_or(Value::Null),
            cid,
        })
    }
}

impl Serialize for BusRequest {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(None)?;
        map.serialize_entry("op", self.op.as_str())?;
        let key = if self.op == BusOp::Goal { "action" } else { "node" };
        map.serialize_entry(key, &self.address)?;
        if !self.args.is_null() {
            map.serialize_entry("args", &self.args)?;
        }
        map.serialize_entry("cid", &self.cid)?;
        map.end()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum BusReply {
    Value { cid: Option<u64>, value: Value },
    Status { cid: Option<u64>, status: String },
    Error { cid: Option<u64>, error: String },
    Feedback { cid: Option<u64>, feedback: Value },
}

impl BusReply {
    pub fn cid(&self) -> Option<u64> {
        match self {
            BusReply::Value { cid, .. }
            | BusReply::Status { cid, .. }
            | BusReply::Error { cid, .. }
            | BusReply::Feedback { cid, .. } => *cid,
        }
    }

    /// Feedback never terminates a request; every other reply does.
    pub fn is_terminal(&self) -> bool {
        !matches!(self, BusReply::Feedback { .. })
    }

    pub fn to_line(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }

    pub fn parse(line: &str) -> Result<BusReply, String> {
        let value: Value = serde_json::from_str(line).map_err(|_| "malformed".to_string())?;
        let Value::Object(mut obj) = value else {
            return Err("malformed".into());
        };
        let cid = obj.get("cid").and_then(Value::as_u64);
        if let Some(v) = obj.remove("feedback") {
            return Ok(BusReply::Feedback { cid, feedback: v });
        }
        if let Some(v) = obj.remove("value") {
            return Ok(BusReply::Value { cid, value: v });
        }
        match (obj.remove("status"), obj.remove("error")) {
            (Some(Value::String(status)), None) => Ok(BusReply::Status { cid, status }),
            (None, Some(Value::String(error))) => Ok(BusReply::Error { cid, error }),
            _ => Err("malformed".into()),
        }
    }

    fn error(cid: Option<u64>, error: &str) -> Self {
        BusReply::Error {
            cid,
            error: error.to_string(),
        }
    }
}

impl Serialize for BusReply {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        let mut map = serializer.serialize_map(Some(2))?;
        map.serialize_entry("cid", &self.cid())?;
        match self {
            BusReply::Value { value, .. } => map.serialize_entry("value", value)?,
            BusReply::Status { status, .. } => map.serialize_entry("status", status)?,
            BusReply::Error { error, .. } => map.serialize_entry("error", error)?,
            BusReply::Feedback { feedback, .. } => map.serialize_entry("feedback", feedback)?,
        }
        map.end()
    }
}

fn arg_str<'a>(args: &'a Value, key: &str) -> Option<&'a str> {
    args.get(key).and_then(Value::as_str)
}

fn arg_rpm(args: &Value) -> Option<i64> {
    let v = args.get("rpm")?;
    if let Some(n) = v.as_i64() {
        return Some(n);
    }
    let f = v.as_f64()?;
    (f == (f as i64) as f64).then_some(f as i64)
}

/// The plant plus the bus router and a transcript of every line in and out.
#[derive(Debug, Clone)]
pub struct DeviceBus {
    plant: Plant,
    transcript: Vec<String>,
}

impl DeviceBus {
    pub fn new(layout: &PlantLayout) -> Self {
        Self {
            plant: Plant::new(layout),
            transcript: Vec::new(),
        }
    }

    pub fn plant(&self) -> &Plant {
        &self.plant
    }

    /// Lines as seen on the wire, requests prefixed `> ` and replies `< `.
    pub fn transcript(&self) -> &[String] {
        &self.transcript
    }

    /// Handles one raw line and returns the reply lines in emission order.
    pub fn handle_line(&mut self, line: &str) -> Vec<String> {
        let replies = match BusRequest::parse(line.trim_end()) {
            Ok(req) => {
                self.transcript.push(alloc::format!("> {}", req.to_line()));
                self.handle(&req)
            }
            Err(reason) => {
                self.transcript.push(alloc::format!("> {}", line.trim_end()));
                vec![BusReply::error(None, &reason)]
            }
        };
        let lines: Vec<String> = replies.iter().map(BusReply::to_line).collect();
        for l in &lines {
            self.transcript.push(alloc::format!("< {l}"));
        }
        lines
    }

    pub fn handle(&mut self, req: &BusRequest) -> Vec<BusReply> {
        let cid = req.cid;
        let plant = &mut self.plant;
        let reply = match (req.op, req.address.as_str()) {
            (BusOp::Read, DRILL_STATE) => {
                if let Some(ms) = req.args.get("wait_ms").and_then(Value::as_u64) {
                    plant.advance(ms);
                }
                BusReply::Value {
                    cid,
                    value: Value::String(plant.drill().state.as_str().into()),
                }
            }
            (BusOp::Read, DRILL_LAST_ERROR) => BusReply::Value {
                cid,
                value: plant.drill().last_error.clone().map(Value::String).unwrap_or(Value::Null),
            },
            (BusOp::Read, PLANT_SNAPSHOT) => BusReply::Value {
                cid,
                value: serde_json::to_value(plant.state()).unwrap_or(Value::Null),
            },
            (BusOp::Read, PLANT_CLOCK) => BusReply::Value {
                cid,
                value: Value::from(plant.clock_ms()),
            },
            (BusOp::Read, addr) if addr.starts_with(WORKPIECE_PREFIX) => {
                match plant.workpiece(&addr[WORKPIECE_PREFIX.len()..]) {
                    Some(wp) => BusReply::Value {
                        cid,
                        value: serde_json::to_value(wp).unwrap_or(Value::Null),
                    },
                    None => BusReply::error(cid, "unknown_workpiece"),
                }
            }
            (BusOp::Call, DRILL_START) => {
                let (Some(wp), Some(rpm), Some(d)) = (
                    arg_str(&req.args, "workpiece"),
                    arg_rpm(&req.args),
                    req.args.get("diameter_mm").and_then(Value::as_f64),
                ) else {
                    return vec![BusReply::error(cid, "invalid_args")];
                };
                match plant.drill_start(wp, rpm, d) {
                    Ok(()) => BusReply::Status {
                        cid,
                        status: STATUS_ACCEPTED.into(),
                    },
                    Err(r) => BusReply::error(cid, r.reason()),
                }
            }
            (BusOp::Call, DRILL_RESET) => match plant.drill_reset() {
                Ok(()) => BusReply::Status {
                    cid,
                    status: STATUS_OK.into(),
                },
                Err(r) => BusReply::error(cid, r.reason()),
            },
            (BusOp::Goal, ROBOT_TRANSPORT) => {
                let (Some(wp), Some(to)) = (arg_str(&req.args, "workpiece"), arg_str(&req.args, "to")) else {
                    return vec![BusReply::error(cid, "invalid_args")];
                };
                let mut out = Vec::new();
                let result = plant.robot_transport(wp, to, |fb| {
                    out.push(BusReply::Feedback {
                        cid,
                        feedback: serde_json::to_value(&fb).unwrap_or(Value::Null),
                    })
                });
                out.push(match result {
                    Ok(TransportOutcome::Delivered(_)) => BusReply::Status {
                        cid,
                        status: STATUS_SUCCEEDED.into(),
                    },
                    Ok(TransportOutcome::NoOp(_)) => BusReply::Status {
                        cid,
                        status: STATUS_NO_OP.into(),
                    },
                    Err(r) => BusReply::error(cid, r.reason()),
                });
                return out;
            }
            (BusOp::Feedback | BusOp::Result, _) => BusReply::error(cid, "invalid_op"),
            (_, addr) if is_known_address(addr) => BusReply::error(cid, "unsupported_op"),
            _ => BusReply::error(cid, "unknown_node"),
        };
        vec![reply]
    }
}

fn is_known_address(addr: &str) -> bool {
    [DRILL_START, DRILL_STATE, DRILL_RESET, DRILL_LAST_ERROR, ROBOT_TRANSPORT, PLANT_SNAPSHOT, PLANT_CLOCK].contains(&addr)
        || addr.starts_with(WORKPIECE_PREFIX)
}

/// Convenience for building `args` objects.
pub fn args(pairs: &[(&str, Value)]) -> Value {
    let mut map = Map::new();
    for (k, v) in pairs {
        map.insert((*k).to_string(), v.clone());
    }
    Value::Object(map)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    fn bus() -> DeviceBus {
        DeviceBus::new(&PlantLayout::default())
    }

    #[test]
    fn initial_state_read() {
        let mut b = bus();
        let out = b.handle_line(r#"{"op":"read","node":"Drill.State"}"#);
        assert_eq!(out, vec![r#"{"cid":null,"value":"Idle"}"#.to_string()]);
    }

    #[test]
    fn start_then_poll_until_complete() {
        let mut b = bus();
        let out = b.handle_line(r#"{"op":"call","node":"Drill.Start","args":{"workpiece":"wp1","rpm":955,"diameter_mm":10},"cid":1}"#);
        assert_eq!(out, vec![r#"{"cid":1,"status":"accepted"}"#.to_string()]);
        let mut states = Vec::new();
        for cid in 2..30 {
            let line = alloc::format!(r#"{{"op":"read","node":"Drill.State","args":{{"wait_ms":100}},"cid":{cid}}}"#);
            let reply = BusReply::parse(&b.handle_line(&line)[0]).unwrap();
            let BusReply::Value { value, .. } = reply else { panic!() };
            states.push(value.as_str().unwrap().to_string());
            if value == "Complete" {
                break;
            }
        }
        assert_eq!(states.iter().filter(|s| *s == "Executing").count(), 19);
        assert_eq!(states.last().map(String::as_str), Some("Complete"));
    }

    #[test]
    fn unknown_node_is_error() {
        let mut b = bus();
        let out = b.handle_line(r#"{"op":"call","node":"Nope.X","cid":3}"#);
        assert_eq!(out, vec![r#"{"cid":3,"error":"unknown_node"}"#.to_string()]);
    }

    #[test]
    fn malformed_line_is_error() {
        let mut b = bus();
        assert_eq!(b.handle_line("{oops"), vec![r#"{"cid":null,"error":"malformed"}"#.to_string()]);
    }

    #[test]
    fn goal_emits_feedback_then_result() {
        let mut b = DeviceBus::new(&PlantLayout {
            workpieces: vec![crate::plant::WorkpieceSetup {
                id: "wp1".into(),
                material: "steel".into(),
                location: crate::plant::Station::Storage,
            }],
            robot_at: crate::plant::Station::Dock,
        });
        let req = BusRequest::new(BusOp::Goal, ROBOT_TRANSPORT, json!({"workpiece":"wp1","to":"drill_station"}), 9);
        assert_eq!(
            req.to_line(),
            r#"{"op":"goal","action":"Robot.Transport","args":{"to":"drill_station","workpiece":"wp1"},"cid":9}"#
        );
        let replies = b.handle(&req);
        assert_eq!(replies.len(), 5);
        assert!(replies[..4].iter().all(|r| !r.is_terminal() && r.cid() == Some(9)));
        assert_eq!(
            replies[4],
            BusReply::Status {
                cid: Some(9),
                status: "succeeded".into()
            }
        );
    }

    #[test]
    fn wrong_op_on_known_node() {
        let mut b = bus();
        let replies = b.handle(&BusRequest::new(BusOp::Write, DRILL_STATE, Value::Null, 1));
        assert_eq!(replies, vec![BusReply::error(Some(1), "unsupported_op")]);
    }

    #[test]
    fn reply_line_round_trip() {
        for line in [
            r#"{"cid":1,"value":{"a":1}}"#,
            r#"{"cid":2,"status":"ok"}"#,
            r#"{"cid":3,"error":"busy"}"#,
            r#"{"cid":4,"feedback":{"phase":"moving"}}"#,
        ] {
            assert_eq!(BusReply::parse(line).unwrap().to_line(), line);
        }
    }

    #[test]
    fn transcript_records_both_directions() {
        let mut b = bus();
        b.handle_line(r#"{"op":"read","node":"Plant.Clock","cid":1}"#);
        assert_eq!(
            b.transcript(),
            &[
                r#"> {"op":"read","node":"Plant.Clock","cid":1}"#.to_string(),
                r#"< {"cid":1,"value":0}"#.to_string()
            ]
        );
    }
}
