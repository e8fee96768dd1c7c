use std::sync::Arc;

use mcpfab::client::{Endpoint, McpClient};
use mcpfab::config::ServerDoc;
use mcpfab::devicebus::{bus_serve, BusClient, BusHandle};
use mcpfab::harness::{Stack, StackMode};
use mcpfab::server::McpServer;
use mcpfab::tools::{PollPolicy, ServerKind};
use mcpfab_core::bus::{BusOp, DRILL_START};
use mcpfab_core::mcp::ToolCallResult;
use mcpfab_core::plant::{DrillState, Plant, PlantLayout, Station, TransportOutcome, WorkpieceSetup};
use proptest::prelude::*;
use serde_json::{json, Value};

fn layout() -> PlantLayout {
    PlantLayout {
        workpieces: vec![
            WorkpieceSetup {
                id: "wp1".into(),
                material: "steel".into(),
                location: Station::DrillStation,
            },
            WorkpieceSetup {
                id: "wp2".into(),
                material: "aluminum".into(),
                location: Station::Storage,
            },
        ],
        robot_at: Station::Dock,
    }
}

fn gateway(kind: ServerKind, bus: &str, poll: PollPolicy) -> McpServer {
    let doc = ServerDoc::parse(kind.builtin_doc()).unwrap();
    kind.build(&doc, Some(Arc::new(BusClient::new(bus))), poll).unwrap()
}

async fn call(server: &McpServer, name: &str, args: Value) -> ToolCallResult {
    let msg = mcpfab_core::jsonrpc::Message::request(1, "tools/call", Some(json!({"name": name, "arguments": args})));
    let reply = server.handle(msg).await.unwrap();
    let value: Value = serde_json::from_slice(&reply.to_json().unwrap()).unwrap();
    serde_json::from_value(value["result"].clone()).unwrap()
}

async fn serve(layout: &PlantLayout) -> BusHandle {
    bus_serve(layout, "127.0.0.1:0".parse().unwrap()).await.unwrap()
}

#[derive(Debug, Clone)]
enum Op {
    Drill { workpiece: String, rpm: i64, diameter: f64 },
    Transport { workpiece: String, to: String },
}

fn op() -> impl Strategy<Value = Op> {
    let wp = prop_oneof![Just("wp1"), Just("wp2"), Just("wp7")].prop_map(String::from);
    let station = prop_oneof![
        Just("storage"),
        Just("drill_station"),
        Just("assembly_station"),
        Just("dock"),
        Just("roof")
    ]
    .prop_map(String::from);
    prop_oneof![
        (wp.clone(), -10i64..6000, prop_oneof![Just(3.0), Just(8.0), Just(12.5), Just(50.0)])
            .prop_map(|(workpiece, rpm, diameter)| Op::Drill { workpiece, rpm, diameter }),
        (wp, station).prop_map(|(workpiece, to)| Op::Transport { workpiece, to }),
    ]
}

/// What the tool should report, computed by driving the plant model
/// directly the way an operator at the machine would.
fn oracle(plant: &mut Plant, op: &Op) -> (Result<Value, String>, Vec<Value>) {
    match op {
        Op::Drill { workpiece, rpm, diameter } => {
            if let Err(r) = plant.drill_start(workpiece, *rpm, *diameter) {
                return (Err(r.reason().to_string()), Vec::new());
            }
            while plant.drill().state != DrillState::Complete {
                plant.advance(100);
            }
            let hole = plant.workpiece(workpiece).unwrap().holes.last().cloned().unwrap();
            plant.drill_reset().unwrap();
            (Ok(json!({"status": "done", "hole": hole})), Vec::new())
        }
        Op::Transport { workpiece, to } => {
            let mut fb = Vec::new();
            let out = plant.robot_transport(workpiece, to, |f| fb.push(serde_json::to_value(f).unwrap()));
            let result = match out {
                Ok(TransportOutcome::Delivered(s)) => Ok(json!({"status": "done", "workpiece_location": s.as_str()})),
                Ok(TransportOutcome::NoOp(s)) => {
                    Ok(json!({"status": "done", "workpiece_location": s.as_str(), "note": "no_op"}))
                }
                Err(r) => Err(r.reason().to_string()),
            };
            (result, fb)
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    /// Gateways add nothing of their own: for arguments that pass the
    /// declared constraints, the tool result and the plant afterwards are
    /// those of running the same operation on the plant directly.
    #[test]
    fn gateways_are_transparent(ops in prop::collection::vec(op(), 1..8)) {
        let rt = tokio::runtime::Builder::new_current_thread().enable_all().build().unwrap();
        rt.block_on(async {
            let bus = serve(&layout()).await;
            let addr = bus.addr().to_string();
            let drill = gateway(ServerKind::Drill, &addr, PollPolicy::default());
            let robot = gateway(ServerKind::Robot, &addr, PollPolicy::default());
            let mut plant = Plant::new(&layout());
            for op in &ops {
                let (expected, feedback) = oracle(&mut plant, op);
                let got = match op {
                    Op::Drill { workpiece, rpm, diameter } => {
                        call(&drill, "drill", json!({"workpiece": workpiece, "rpm": rpm, "diameter_mm": diameter})).await
                    }
                    Op::Transport { workpiece, to } => {
                        call(&robot, "transport_workpiece", json!({"workpiece": workpiece, "to": to})).await
                    }
                };
                match expected {
                    Ok(structured) => {
                        prop_assert!(!got.is_error, "{op:?}: {}", got.text());
                        prop_assert_eq!(got.structured.clone(), Some(structured));
                    }
                    Err(reason) => {
                        prop_assert!(got.is_error);
                        prop_assert_eq!(got.category(), Some(reason.as_str()));
                    }
                }
                let meta_fb = got.meta.as_ref().and_then(|m| m.get("feedback")).cloned();
                prop_assert_eq!(meta_fb.unwrap_or(json!([])), Value::Array(feedback));
                prop_assert_eq!(&bus.snapshot().await.unwrap(), plant.state());
            }
            Ok(())
        })?;
    }
}

#[tokio::test]
async fn direct_tool_never_touches_the_bus() {
    let stack = Stack::boot(&PlantLayout::default(), &[], &StackMode::InProcess).await.unwrap();
    let spindle = stack.entries().iter().find(|e| e.name == "mcp-spindle").unwrap();
    let client = McpClient::connect(&Endpoint::from(&spindle.endpoint)).await.unwrap();
    client.initialize().await.unwrap();
    for (material, d) in [("steel", 10.0), ("wood", 10.0), ("brass", 7.0), ("aluminum", 60.0)] {
        client
            .call_tool("calculate_spindle_speed", &json!({"material": material, "diameter_mm": d}))
            .await
            .unwrap();
    }
    assert!(stack.bus().transcript().await.is_empty());
    stack.shutdown().await;
}

#[tokio::test]
async fn busy_drill_is_reported_with_the_bus_reason() {
    let bus = serve(&layout()).await;
    let other = BusClient::new(bus.addr().to_string());
    other
        .request(BusOp::Call, DRILL_START, json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 10}))
        .await
        .unwrap();
    let drill = gateway(ServerKind::Drill, &bus.addr().to_string(), PollPolicy::default());
    let r = call(&drill, "drill", json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 10})).await;
    assert_eq!(r.category(), Some("busy"));
}

#[tokio::test]
async fn drill_rejections_pass_through() {
    let bus = serve(&layout()).await;
    let drill = gateway(ServerKind::Drill, &bus.addr().to_string(), PollPolicy::default());
    let r = call(&drill, "drill", json!({"workpiece": "wp2", "rpm": 3183, "diameter_mm": 10})).await;
    assert_eq!(r.category(), Some("workpiece_not_present"));
    let r = call(&drill, "drill", json!({"workpiece": "wp1", "rpm": 0, "diameter_mm": 10})).await;
    assert_eq!(r.category(), Some("invalid_rpm"));
    let r = call(&drill, "drill", json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 60})).await;
    assert_eq!(r.category(), Some("above_maximum"));
    assert!(bus.transcript().await.iter().all(|l| !l.contains("\"diameter_mm\":60")));
}

#[tokio::test]
async fn short_poll_budget_times_out() {
    let bus = serve(&layout()).await;
    let poll = PollPolicy {
        interval_ms: 100,
        timeout_ms: 500,
    };
    let drill = gateway(ServerKind::Drill, &bus.addr().to_string(), poll);
    let r = call(&drill, "drill", json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 10})).await;
    assert_eq!(r.category(), Some("device_timeout"));
}

#[tokio::test]
async fn robot_outcomes() {
    let bus = serve(&layout()).await;
    let robot = gateway(ServerKind::Robot, &bus.addr().to_string(), PollPolicy::default());
    let r = call(&robot, "transport_workpiece", json!({"workpiece": "wp9", "to": "dock"})).await;
    assert_eq!(r.category(), Some("unknown_workpiece"));
    let r = call(&robot, "transport_workpiece", json!({"workpiece": "wp2", "to": "storage"})).await;
    assert!(!r.is_error);
    assert_eq!(r.structured.unwrap()["note"], "no_op");
    assert!(r.meta.is_none());
    let r = call(&robot, "transport_workpiece", json!({"workpiece": "wp2", "to": "drill_station"})).await;
    let fb = r.meta.unwrap()["feedback"].as_array().unwrap().len();
    assert!(fb >= 3);
}

#[tokio::test]
async fn unreachable_bus_is_device_unreachable() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let drill = gateway(ServerKind::Drill, &port.to_string(), PollPolicy::default());
    let r = call(&drill, "drill", json!({"workpiece": "wp1", "rpm": 955, "diameter_mm": 10})).await;
    assert_eq!(r.category(), Some("device_unreachable"));
    let robot = gateway(ServerKind::Robot, &port.to_string(), PollPolicy::default());
    let r = call(&robot, "transport_workpiece", json!({"workpiece": "wp1", "to": "dock"})).await;
    assert_eq!(r.category(), Some("device_unreachable"));
}

#[tokio::test]
async fn tools_list_matches_capability_documents() {
    let stack = Stack::boot(&PlantLayout::default(), &[], &StackMode::InProcess).await.unwrap();
    for kind in ServerKind::ALL {
        let entry = stack.entries().iter().find(|e| e.name == kind.server_name()).unwrap();
        let client = McpClient::connect(&Endpoint::from(&entry.endpoint)).await.unwrap();
        client.initialize().await.unwrap();
        let listed = client.list_tools().await.unwrap();
        let declared = ServerDoc::parse(kind.builtin_doc()).unwrap().registry().unwrap().tools();
        assert_eq!(listed, declared);
        let schema = &listed[0].input_schema;
        assert_eq!(schema["additionalProperties"], false);
    }
    stack.shutdown().await;
}
