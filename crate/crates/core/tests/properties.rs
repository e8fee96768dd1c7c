use std::collections::HashSet;

use mcpfab_core::bus::{BusOp, BusRequest, DeviceBus};
use mcpfab_core::jsonrpc::{self, Id, Message, Outcome, ProtocolError};
use mcpfab_core::plant::{DrillState, PlantLayout, Station, WorkpieceSetup};
use mcpfab_core::rpm::{RpmTable, CUTTING_SPEEDS_M_PER_MIN, DIAMETERS_MM};
use proptest::prelude::*;
use serde_json::{json, Map, Value};

fn leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        (-1e9f64..1e9).prop_map(Value::from),
        "[a-zA-Z0-9 _./-]{0,12}".prop_map(Value::String),
    ]
}

fn value() -> impl Strategy<Value = Value> {
    leaf().prop_recursive(3, 24, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z]{1,6}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect::<Map<_, _>>())),
        ]
    })
}

fn params() -> impl Strategy<Value = Option<Value>> {
    prop_oneof![
        Just(None),
        prop::collection::btree_map("[a-z]{1,6}", value(), 0..4).prop_map(|m| Some(Value::Object(m.into_iter().collect()))),
        prop::collection::vec(value(), 0..3).prop_map(|v| Some(Value::Array(v))),
    ]
}

fn id() -> impl Strategy<Value = Id> {
    prop_oneof![any::<i64>().prop_map(Id::Num), "[a-zA-Z0-9-]{0,10}".prop_map(Id::Str)]
}

fn message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (id(), "[a-z/]{1,16}", params()).prop_map(|(id, method, params)| Message::Request { id, method, params }),
        ("[a-z/]{1,16}", params()).prop_map(|(method, params)| Message::Notification { method, params }),
        (id(), value()).prop_map(|(id, v)| Message::success(id, v)),
        (prop::option::of(id()), any::<i64>(), ".{0,10}", prop::option::of(value())).prop_map(|(id, code, msg, data)| {
            Message::Response {
                id,
                outcome: Outcome::Error(ProtocolError {
                    code,
                    message: msg,
                    data,
                }),
            }
        }),
    ]
}

proptest! {
    #[test]
    fn decode_inverts_encode(msg in message()) {
        let bytes = msg.to_json().unwrap();
        prop_assert!(!bytes.contains(&b'\n'));
        prop_assert_eq!(jsonrpc::decode(&bytes).unwrap(), msg);
    }

    #[test]
    fn concatenated_lines_split_back(msgs in prop::collection::vec(message(), 0..8)) {
        let mut stream = Vec::new();
        for m in &msgs {
            stream.extend(m.to_json().unwrap());
            stream.push(b'\n');
        }
        let back: Vec<Message> = stream
            .split(|b| *b == b'\n')
            .filter(|l| !l.is_empty())
            .map(|l| jsonrpc::decode(l).unwrap())
            .collect();
        prop_assert_eq!(back, msgs);
    }
}

#[test]
fn table_matches_cutting_speed_formula() {
    // independent oracle: recompute every entry from the machining formula
    let oracle = |vc: f64, d: f64| (1000.0 * vc / (std::f64::consts::PI * d)).round() as u32;
    let mut checked = 0;
    for (material, vc) in CUTTING_SPEEDS_M_PER_MIN {
        for d in DIAMETERS_MM {
            let expected = oracle(f64::from(vc), f64::from(d));
            assert_eq!(RpmTable.lookup(material, f64::from(d)), Ok(expected), "{material} {d}");
            checked += 1;
        }
    }
    assert_eq!(checked, 48);
    assert_eq!(RpmTable.entries().count(), 48);
}

fn legal(from: DrillState, to: DrillState) -> bool {
    use DrillState::*;
    // written out independently of DrillState::can_transition
    let table: &[(DrillState, DrillState)] = &[
        (Idle, Starting),
        (Starting, Executing),
        (Executing, Completing),
        (Completing, Complete),
        (Complete, Idle),
        (Error, Idle),
    ];
    to == Error || table.contains(&(from, to))
}

fn command() -> impl Strategy<Value = BusRequest> {
    let wp = prop_oneof![Just("wp1"), Just("wp2"), Just("wp9")];
    let station = prop_oneof![
        Just("storage"),
        Just("drill_station"),
        Just("assembly_station"),
        Just("dock"),
        Just("paint_station")
    ];
    prop_oneof![
        (wp.clone(), -5i64..5000, prop_oneof![Just(3.0), Just(10.0), Just(60.0)])
            .prop_map(|(w, rpm, d)| BusRequest::new(BusOp::Call, "Drill.Start", json!({"workpiece": w, "rpm": rpm, "diameter_mm": d}), 1)),
        (0u64..3000).prop_map(|ms| BusRequest::new(BusOp::Read, "Drill.State", json!({"wait_ms": ms}), 2)),
        Just(BusRequest::new(BusOp::Call, "Drill.Reset", Value::Null, 3)),
        (wp, station).prop_map(|(w, s)| BusRequest::new(BusOp::Goal, "Robot.Transport", json!({"workpiece": w, "to": s}), 4)),
        Just(BusRequest::new(BusOp::Call, "Nope.X", Value::Null, 5)),
    ]
}

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
                material: "brass".into(),
                location: Station::Storage,
            },
        ],
        robot_at: Station::Dock,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn drill_transitions_stay_legal_and_workpieces_are_conserved(cmds in prop::collection::vec(command(), 0..40)) {
        let mut bus = DeviceBus::new(&layout());
        let ids: HashSet<String> = bus.plant().state().workpieces.keys().cloned().collect();
        let mut last_clock = 0;
        for c in &cmds {
            let holes_before: usize = bus.plant().state().workpieces.values().map(|w| w.holes.len()).sum();
            let completes_before = bus.plant().transitions().iter().filter(|t| t.to == DrillState::Complete).count();
            bus.handle(c);
            let state = bus.plant().state();
            prop_assert!(state.clock_ms >= last_clock);
            last_clock = state.clock_ms;
            let now: HashSet<String> = state.workpieces.keys().cloned().collect();
            prop_assert_eq!(&now, &ids);
            prop_assert!(state.robot.carrying.is_none());
            let holes_after: usize = state.workpieces.values().map(|w| w.holes.len()).sum();
            let completes_after = bus.plant().transitions().iter().filter(|t| t.to == DrillState::Complete).count();
            prop_assert_eq!(holes_after - holes_before, completes_after - completes_before);
        }
        let mut prev = DrillState::Idle;
        for t in bus.plant().transitions() {
            prop_assert_eq!(t.from, prev);
            prop_assert!(legal(t.from, t.to), "{:?} -> {:?}", t.from, t.to);
            prev = t.to;
        }
    }

    #[test]
    fn identical_commands_give_identical_runs(cmds in prop::collection::vec(command(), 0..30)) {
        let run = || {
            let mut bus = DeviceBus::new(&layout());
            for c in &cmds {
                bus.handle_line(&c.to_line());
            }
            (bus.plant().state().clone(), bus.transcript().to_vec())
        };
        prop_assert_eq!(run(), run());
    }
}
