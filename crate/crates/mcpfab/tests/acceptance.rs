//! Acceptance gate: one PASS/FAIL line per criterion, nonzero exit if any
//! criterion fails.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::time::{Duration, Instant};

use mcpfab::config::ServerDoc;
use mcpfab::harness::{run_scenario, select, PlannerChoice, RunOptions, ScenarioRun, StackMode};
use mcpfab::orchestrator::SessionOptions;
use mcpfab::server::McpServer;
use mcpfab::tools::{PollPolicy, ServerKind};
use mcpfab_core::bus::{BusOp, BusRequest, DeviceBus};
use mcpfab_core::jsonrpc::{self, Id, Message, Outcome, ProtocolError};
use mcpfab_core::plant::{DrillState, Location, PlantLayout, Station, WorkpieceSetup};
use mcpfab_core::rpm::RpmTable;
use proptest::prelude::*;
use proptest::test_runner::{Config, TestRunner};
use serde_json::{json, Value};

type Check = Result<(), String>;

macro_rules! ensure {
    ($cond:expr, $($fmt:tt)+) => {
        if !$cond {
            return Err(format!($($fmt)+));
        }
    };
}

fn scenarios_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios")
}

async fn run(name: &str, planner: PlannerChoice, out: &Path) -> Result<(ScenarioRun, Vec<Value>), String> {
    let scripts = select(&scenarios_dir(), name).map_err(|e| e.to_string())?;
    let script = scripts.first().ok_or(format!("no scenario {name}"))?;
    let opts = RunOptions {
        planner,
        mode: StackMode::InProcess,
        out_dir: out.to_path_buf(),
        session: SessionOptions::default(),
    };
    let run = run_scenario(script, &opts).await;
    let text = std::fs::read_to_string(out.join(format!("{name}.ndjson"))).map_err(|e| format!("{name}: {e}"))?;
    let events = text
        .lines()
        .map(serde_json::from_str)
        .collect::<Result<Vec<Value>, _>>()
        .map_err(|e| e.to_string())?;
    Ok((run, events))
}

fn of_kind<'a>(events: &'a [Value], kind: &str) -> Vec<&'a Value> {
    events.iter().filter(|e| e["event"] == kind).collect()
}

fn result_of<'a>(events: &'a [Value], call_id: &Value) -> Option<&'a Value> {
    events.iter().find(|e| e["event"] == "tool_result" && &e["call_id"] == call_id)
}

fn terminal(events: &[Value]) -> &str {
    events.last().and_then(|e| e["event"].as_str()).unwrap_or("")
}

async fn scenario1(out: &Path) -> Check {
    let started = Instant::now();
    let (run, events) = run("scenario1", PlannerChoice::Deterministic, out).await?;
    let elapsed = started.elapsed();
    let calls = of_kind(&events, "tool_call");
    let names: Vec<&str> = calls.iter().filter_map(|c| c["name"].as_str()).collect();
    ensure!(
        names == ["calculate_spindle_speed", "drill", "transport_workpiece"],
        "call order {names:?}"
    );
    let calc = result_of(&events, &calls[0]["call_id"]).ok_or("calc has no result")?;
    ensure!(
        calls[1]["arguments"]["rpm"] == calc["structured"]["rpm"],
        "drill rpm {} != calc rpm {}",
        calls[1]["arguments"]["rpm"],
        calc["structured"]["rpm"]
    );
    ensure!(terminal(&events) == "done", "terminal {}", terminal(&events));
    let plant = run.plant.ok_or("no plant snapshot")?;
    let wp1 = &plant.workpieces["wp1"];
    ensure!(
        wp1.location == Location::At(Station::AssemblyStation),
        "wp1 at {}",
        wp1.location.as_str()
    );
    ensure!(wp1.holes.len() == 1, "wp1 has {} holes", wp1.holes.len());
    ensure!(elapsed < Duration::from_secs(5), "took {elapsed:?}");
    Ok(())
}

async fn scenario2(out: &Path) -> Check {
    let (_, events) = run("scenario2", PlannerChoice::Deterministic, out).await?;
    let asks = of_kind(&events, "clarification_request");
    ensure!(asks.len() == 1, "{} clarification requests", asks.len());
    let expected = Value::Array(RpmTable.supported_diameters());
    ensure!(asks[0]["options"] == expected, "options {}", asks[0]["options"]);
    let answers = of_kind(&events, "clarification_answer");
    ensure!(answers.len() == 1 && answers[0]["answer"] == "8", "answers {answers:?}");
    let drill = of_kind(&events, "tool_call").into_iter().find(|c| c["name"] == "drill").ok_or("no drill call")?;
    ensure!(drill["arguments"]["diameter_mm"] == 8, "drill diameter {}", drill["arguments"]["diameter_mm"]);
    ensure!(terminal(&events) == "done", "terminal {}", terminal(&events));
    Ok(())
}

async fn scenario3(out: &Path) -> Check {
    let (run, events) = run("scenario3", PlannerChoice::Deterministic, out).await?;
    let calls = of_kind(&events, "tool_call");
    let ok = |c: &Value| result_of(&events, &c["call_id"]).is_some_and(|r| r["is_error"] == false);
    let first_drill = calls
        .iter()
        .position(|c| c["name"] == "drill" && ok(c))
        .ok_or("no successful drill")?;
    let fetched = calls[..first_drill]
        .iter()
        .any(|c| c["name"] == "transport_workpiece" && c["arguments"]["to"] == "drill_station" && ok(c));
    ensure!(fetched, "no successful transport to drill_station before the first drill");
    let last = calls.last().ok_or("no calls")?;
    ensure!(
        last["name"] == "transport_workpiece" && last["arguments"]["to"] == "assembly_station",
        "last call {last}"
    );
    ensure!(terminal(&events) == "done", "terminal {}", terminal(&events));
    let plant = run.plant.ok_or("no plant snapshot")?;
    ensure!(plant.workpieces["wp1"].holes.len() == 1, "wp1 holes");
    Ok(())
}

async fn scenario4(out: &Path) -> Check {
    let (_, events) = run("scenario4", PlannerChoice::Deterministic, out).await?;
    let calls = of_kind(&events, "tool_call");
    ensure!(calls.len() == 4, "{} tool calls", calls.len());
    let errors: Vec<&Value> = of_kind(&events, "tool_result").into_iter().filter(|r| r["is_error"] == true).collect();
    ensure!(
        errors.len() == 1 && errors[0]["structured"]["category"] == "unknown_material",
        "errors {errors:?}"
    );
    ensure!(calls[0]["arguments"]["material"] == "stainless steel", "first call {}", calls[0]);
    ensure!(calls[1]["arguments"]["material"] == "stainless", "retry {}", calls[1]);
    let retry = result_of(&events, &calls[1]["call_id"]).ok_or("retry has no result")?;
    ensure!(retry["is_error"] == false, "retry failed: {retry}");
    ensure!(terminal(&events) == "done", "terminal {}", terminal(&events));
    Ok(())
}

fn runner_config(cases: u32) -> Config {
    Config {
        failure_persistence: None,
        ..Config::with_cases(cases)
    }
}

fn error_code(reply: Option<Message>) -> Option<i64> {
    match reply? {
        Message::Response {
            outcome: Outcome::Error(e),
            ..
        } => Some(e.code),
        _ => None,
    }
}

fn json_leaf() -> impl Strategy<Value = Value> {
    prop_oneof![
        Just(Value::Null),
        any::<bool>().prop_map(Value::Bool),
        any::<i64>().prop_map(Value::from),
        "[ -~]{0,16}".prop_map(Value::String),
    ]
}

fn json_value() -> impl Strategy<Value = Value> {
    json_leaf().prop_recursive(3, 16, 4, |inner| {
        prop_oneof![
            prop::collection::vec(inner.clone(), 0..4).prop_map(Value::Array),
            prop::collection::btree_map("[a-z_]{1,8}", inner, 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
        ]
    })
}

fn rpc_id() -> impl Strategy<Value = Id> {
    prop_oneof![any::<i64>().prop_map(Id::Num), "[ -~]{0,20}".prop_map(Id::Str)]
}

fn rpc_params() -> impl Strategy<Value = Option<Value>> {
    prop::option::of(
        prop::collection::btree_map("[a-z]{1,6}", json_value(), 0..4).prop_map(|m| Value::Object(m.into_iter().collect())),
    )
}

fn rpc_message() -> impl Strategy<Value = Message> {
    prop_oneof![
        (rpc_id(), "[a-z]{1,8}(/[a-z]{1,8})?", rpc_params())
            .prop_map(|(id, method, params)| Message::Request { id, method, params }),
        ("[a-z]{1,8}(/[a-z]{1,8})?", rpc_params()).prop_map(|(method, params)| Message::Notification { method, params }),
        (rpc_id(), json_value()).prop_map(|(id, v)| Message::success(id, v)),
        (prop::option::of(rpc_id()), -33000i64..0, "[ -~]{0,16}").prop_map(|(id, code, message)| Message::Response {
            id,
            outcome: Outcome::Error(ProtocolError { code, message, data: None }),
        }),
    ]
}

fn protocol(rt: &tokio::runtime::Runtime) -> Check {
    let doc = ServerDoc::parse(ServerKind::Spindle.builtin_doc()).map_err(|e| e.to_string())?;
    let server: McpServer = ServerKind::Spindle.build(&doc, None, PollPolicy::default()).map_err(|e| e.to_string())?;

    let code = rt.block_on(server.handle_frame(b"{\"jsonrpc\":\"2.0\",\"id\":1,"));
    ensure!(code.clone().and_then(|m| error_code(Some(m))) == Some(-32700), "malformed frame gave {code:?}");
    let code = error_code(rt.block_on(server.handle_frame(br#"{"jsonrpc":"2.0","id":2,"method":"tools/destroy"}"#)));
    ensure!(code == Some(-32601), "unknown method gave {code:?}");
    let code = error_code(rt.block_on(server.handle_frame(br#"{"jsonrpc":"2.0","id":3,"method":"tools/call","params":{"arguments":{}}}"#)));
    ensure!(code == Some(-32602), "invalid params gave {code:?}");

    let methods = prop_oneof![
        Just("ping"),
        Just("tools/list"),
        Just("initialize"),
        Just("tools/call"),
        Just("no/such/method")
    ];
    let mut runner = TestRunner::new(runner_config(1000));
    runner
        .run(&(rpc_id(), methods, prop::option::of(json_value())), |(id, method, params)| {
            let params = params.filter(|p| p.is_object() || p.is_array());
            let request = Message::request(id.clone(), method, params);
            let reply = rt.block_on(server.handle(request)).expect("requests are always answered");
            let bytes = reply.to_json().expect("reply encodes");
            let back = jsonrpc::decode(&bytes).expect("reply decodes");
            prop_assert_eq!(back.id(), Some(&id));
            Ok(())
        })
        .map_err(|e| format!("id echo: {e}"))?;

    let mut runner = TestRunner::new(runner_config(1000));
    runner
        .run(&rpc_message(), |msg| {
            let bytes = msg.to_json().expect("valid messages encode");
            prop_assert_eq!(jsonrpc::decode(&bytes).expect("decodes"), msg);
            Ok(())
        })
        .map_err(|e| format!("round trip: {e}"))?;
    Ok(())
}

fn table_oracle() -> Check {
    // cutting speeds in m/min and the drill sizes stocked at the cell
    let vc = [("aluminum", 100.0), ("brass", 60.0), ("steel", 30.0), ("stainless", 20.0)];
    let sizes = [3.0, 5.0, 6.0, 8.0, 10.0, 12.0, 16.0, 20.0, 25.0, 30.0, 40.0, 50.0];
    let mut checked = 0;
    for (material, v) in vc {
        for d in sizes {
            let expected = (1000.0 * v / (std::f64::consts::PI * d)).round() as u32;
            let got = RpmTable.lookup(material, d);
            ensure!(got == Ok(expected), "{material} {d} mm: table {got:?}, formula {expected}");
            checked += 1;
        }
    }
    let entries = RpmTable.entries().count();
    ensure!(checked == 48 && entries == 48, "table has {entries} entries");
    for (material, d, rpm) in [("aluminum", 10.0, 3183), ("stainless", 8.0, 796), ("steel", 50.0, 191)] {
        ensure!(RpmTable.lookup(material, d) == Ok(rpm), "spot {material} {d}");
    }
    Ok(())
}

fn bus_command() -> impl Strategy<Value = String> {
    let wp = prop_oneof![Just("wp1"), Just("wp2"), Just("wp3"), Just("ghost")];
    let station = prop_oneof![
        Just("storage"),
        Just("drill_station"),
        Just("assembly_station"),
        Just("dock"),
        Just("moon")
    ];
    prop_oneof![
        (wp.clone(), -100i64..20000, prop_oneof![Just(3.0), Just(8.0), Just(50.0), Just(70.0)])
            .prop_map(|(w, rpm, d)| BusRequest::new(BusOp::Call, "Drill.Start", json!({"workpiece": w, "rpm": rpm, "diameter_mm": d}), 1).to_line()),
        (0u64..4000).prop_map(|ms| BusRequest::new(BusOp::Read, "Drill.State", json!({"wait_ms": ms}), 2).to_line()),
        Just(BusRequest::new(BusOp::Call, "Drill.Reset", Value::Null, 3).to_line()),
        Just(BusRequest::new(BusOp::Read, "Drill.LastError", Value::Null, 4).to_line()),
        (wp, station).prop_map(|(w, s)| BusRequest::new(BusOp::Goal, "Robot.Transport", json!({"workpiece": w, "to": s}), 5).to_line()),
        Just(BusRequest::new(BusOp::Write, "Drill.State", json!("Complete"), 6).to_line()),
        Just("{\"op\":\"call\"".to_string()),
    ]
}

fn state_machine() -> Check {
    let layout = PlantLayout {
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
            WorkpieceSetup {
                id: "wp3".into(),
                material: "brass".into(),
                location: Station::DrillStation,
            },
        ],
        robot_at: Station::Dock,
    };
    let inventory: BTreeMap<String, String> = layout
        .workpieces
        .iter()
        .map(|w| (w.id.clone(), w.material.clone()))
        .collect();
    // legal moves of the drill, written out here rather than taken from
    // the plant model
    let legal = |from: DrillState, to: DrillState| {
        use DrillState::*;
        to == Error
            || matches!(
                (from, to),
                (Idle, Starting) | (Starting, Executing) | (Executing, Completing) | (Completing, Complete) | (Complete, Idle) | (Error, Idle)
            )
    };
    let mut runner = TestRunner::new(runner_config(10_000));
    runner
        .run(&prop::collection::vec(bus_command(), 0..30), |lines| {
            let mut bus = DeviceBus::new(&layout);
            for line in &lines {
                bus.handle_line(line);
                let state = bus.plant().state();
                let now: BTreeMap<String, String> =
                    state.workpieces.values().map(|w| (w.id.clone(), w.material.clone())).collect();
                prop_assert_eq!(&now, &inventory);
                let on_robot = state.workpieces.values().filter(|w| w.location == Location::OnRobot).count();
                prop_assert_eq!(on_robot, usize::from(state.robot.carrying.is_some()));
            }
            let mut prev = DrillState::Idle;
            for t in bus.plant().transitions() {
                prop_assert_eq!(t.from, prev);
                prop_assert!(legal(t.from, t.to), "{:?} -> {:?}", t.from, t.to);
                prev = t.to;
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

fn determinism() -> Check {
    let dirs = [tempfile::tempdir().map_err(|e| e.to_string())?, tempfile::tempdir().map_err(|e| e.to_string())?];
    for dir in &dirs {
        let out = Command::new(env!("CARGO_BIN_EXE_harness"))
            .args(["run", "--scenario", "all", "--planner", "deterministic", "--out"])
            .arg(dir.path())
            .output()
            .map_err(|e| e.to_string())?;
        ensure!(out.status.success(), "harness exited with {}", out.status);
    }
    let listing = |dir: &Path| -> Result<BTreeMap<String, Vec<u8>>, String> {
        let mut files = BTreeMap::new();
        for entry in std::fs::read_dir(dir).map_err(|e| e.to_string())? {
            let entry = entry.map_err(|e| e.to_string())?;
            let bytes = std::fs::read(entry.path()).map_err(|e| e.to_string())?;
            files.insert(entry.file_name().to_string_lossy().into_owned(), bytes);
        }
        Ok(files)
    };
    let a = listing(dirs[0].path())?;
    let b = listing(dirs[1].path())?;
    ensure!(a.keys().eq(b.keys()), "different file sets");
    ensure!(a.keys().filter(|k| k.ends_with(".ndjson")).count() == 4, "expected 4 transcripts");
    for (name, bytes) in &a {
        ensure!(&b[name] == bytes, "{name} differs between runs");
    }
    Ok(())
}

async fn llm_playback(out: &Path) -> Check {
    let det = out.join("deterministic");
    let llm = out.join("playback");
    let (det_run, _) = run("scenario1", PlannerChoice::Deterministic, &det).await?;
    let file = scenarios_dir().join("playback/scenario1.json");
    ensure!(file.is_file(), "missing {}", file.display());
    let (llm_run, events) = run("scenario1", PlannerChoice::Llm { playback: Some(file) }, &llm).await?;
    ensure!(terminal(&events) == "done", "playback session ended {}", terminal(&events));
    ensure!(llm_run.plant.is_some(), "no plant snapshot");
    ensure!(det_run.plant == llm_run.plant, "terminal plant differs from the deterministic run");
    Ok(())
}

fn main() {
    let rt = tokio::runtime::Builder::new_multi_thread().enable_all().build().expect("runtime");
    let scratch = tempfile::tempdir().expect("tempdir");
    let out = scratch.path();

    let results: Vec<(&str, Check)> = vec![
        ("scenario 1 reproduction", rt.block_on(scenario1(out))),
        ("scenario 2 reproduction", rt.block_on(scenario2(out))),
        ("scenario 3 reproduction", rt.block_on(scenario3(out))),
        ("scenario 4 reproduction", rt.block_on(scenario4(out))),
        ("protocol conformance", protocol(&rt)),
        ("rpm table matches cutting-speed formula", table_oracle()),
        ("drill state machine soundness", state_machine()),
        ("deterministic runs are byte-identical", determinism()),
        ("llm playback reaches the deterministic plant", rt.block_on(llm_playback(out))),
    ];

    let mut failed = 0;
    for (name, result) in &results {
        match result {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                failed += 1;
                println!("FAIL {name}: {why}");
            }
        }
    }
    println!("{}/{} criteria passed", results.len() - failed, results.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
