use std::sync::Arc;

use async_trait::async_trait;
use mcpfab::client::{ClientError, Endpoint, McpClient};
use mcpfab::server::{McpServer, NoTools, ToolHandler};
use mcpfab_core::jsonrpc::{INVALID_REQUEST, METHOD_NOT_FOUND, PARSE_ERROR};
use mcpfab_core::mcp::{ServerInfo, ToolCallResult, ToolDescriptor};
use proptest::prelude::*;
use serde_json::{json, Value};

struct Echo;

#[async_trait]
impl ToolHandler for Echo {
    fn tools(&self) -> Vec<ToolDescriptor> {
        vec![ToolDescriptor {
            name: "echo".into(),
            description: "Returns its arguments.".into(),
            input_schema: json!({"type": "object"}),
        }]
    }

    async fn call(&self, _name: &str, arguments: Value) -> ToolCallResult {
        ToolCallResult::success("echoed", arguments)
    }
}

fn info(name: &str) -> ServerInfo {
    ServerInfo {
        name: name.into(),
        version: "1.0.0".into(),
    }
}

async fn http_server(handler: impl ToolHandler) -> mcpfab::server::ServerHandle {
    Arc::new(McpServer::new(info("echo"), handler))
        .serve_http("127.0.0.1:0".parse().unwrap())
        .await
        .unwrap()
}

async fn raw_post(url: &str, body: &str) -> (u16, String) {
    let resp = reqwest::Client::builder()
        .no_proxy()
        .build()
        .unwrap()
        .post(url)
        .header("content-type", "application/json")
        .body(body.to_string())
        .send()
        .await
        .unwrap();
    let status = resp.status().as_u16();
    (status, resp.text().await.unwrap())
}

#[tokio::test]
async fn http_handshake_list_and_call() {
    let handle = http_server(Echo).await;
    let client = McpClient::connect(&Endpoint::Http(handle.url())).await.unwrap();
    let init = client.initialize().await.unwrap();
    assert_eq!(init.protocol_version, "desk-1");
    assert_eq!(client.server_info().unwrap().name, "echo");
    client.ping().await.unwrap();
    let tools = client.list_tools().await.unwrap();
    assert_eq!(tools.len(), 1);
    let r = client.call_tool("echo", &json!({"a": [1, 2]})).await.unwrap();
    assert!(!r.is_error);
    assert_eq!(r.structured, Some(json!({"a": [1, 2]})));
    handle.stop().await;
}

#[tokio::test]
async fn http_status_codes() {
    let handle = http_server(Echo).await;
    let url = handle.url();
    let (status, body) = raw_post(&url, r#"{"jsonrpc":"2.0","method":"notifications/initialized"}"#).await;
    assert_eq!((status, body.as_str()), (202, ""));

    let code = |body: &str| serde_json::from_str::<Value>(body).unwrap()["error"]["code"].as_i64().unwrap();
    let (status, body) = raw_post(&url, "{oops").await;
    assert_eq!(status, 200);
    assert_eq!(code(&body), PARSE_ERROR);
    let (_, body) = raw_post(&url, r#"[{"jsonrpc":"2.0","id":1,"method":"ping"}]"#).await;
    assert_eq!(code(&body), INVALID_REQUEST);
    let (_, body) = raw_post(&url, r#"{"jsonrpc":"2.0","id":1,"method":"resources/list"}"#).await;
    assert_eq!(code(&body), METHOD_NOT_FOUND);
    handle.stop().await;
}

#[tokio::test]
async fn stdio_framing_over_a_pipe() {
    let (client_io, server_io) = tokio::io::duplex(4096);
    let (sr, sw) = tokio::io::split(server_io);
    let server = McpServer::new(info("echo"), Echo);
    tokio::spawn(async move { server.serve_lines(sr, sw).await });
    let (cr, cw) = tokio::io::split(client_io);
    let client = McpClient::over_stream(cr, cw);
    client.initialize().await.unwrap();
    let r = client.call_tool("echo", &json!({"text": "line\nbreak"})).await.unwrap();
    assert_eq!(r.structured, Some(json!({"text": "line\nbreak"})));
}

#[tokio::test]
async fn calls_before_initialize_are_refused() {
    let handle = http_server(Echo).await;
    let client = McpClient::connect(&Endpoint::Http(handle.url())).await.unwrap();
    assert!(matches!(client.list_tools().await, Err(ClientError::NotInitialized)));
    assert!(matches!(client.call_tool("echo", &json!({})).await, Err(ClientError::NotInitialized)));
    handle.stop().await;
}

#[tokio::test]
async fn unknown_tool_and_empty_server() {
    let handle = http_server(Echo).await;
    let client = McpClient::connect(&Endpoint::Http(handle.url())).await.unwrap();
    client.initialize().await.unwrap();
    let r = client.call_tool("nonexistent", &json!({})).await.unwrap();
    assert!(r.is_error);
    assert_eq!(r.category(), Some("unknown_tool"));
    handle.stop().await;

    let empty = http_server(NoTools).await;
    let client = McpClient::connect(&Endpoint::Http(empty.url())).await.unwrap();
    client.initialize().await.unwrap();
    assert!(client.list_tools().await.unwrap().is_empty());
    empty.stop().await;
}

#[tokio::test]
async fn unreachable_server_is_a_transport_error() {
    let port = std::net::TcpListener::bind("127.0.0.1:0").unwrap().local_addr().unwrap();
    let client = McpClient::connect(&Endpoint::Http(format!("http://{port}/mcp"))).await.unwrap();
    assert!(matches!(client.initialize().await, Err(ClientError::Transport(_))));
}

fn id_value() -> impl Strategy<Value = Value> {
    prop_oneof![any::<i64>().prop_map(Value::from), "[ -~]{0,24}".prop_map(Value::from)]
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    /// Every request id comes back unchanged, whatever its shape.
    #[test]
    fn response_id_equals_request_id(id in id_value()) {
        let rt = tokio::runtime::Builder::new_current_thread().build().unwrap();
        let server = McpServer::new(info("echo"), Echo);
        let line = json!({"jsonrpc": "2.0", "id": id, "method": "ping"}).to_string();
        let reply = rt.block_on(server.handle_frame(line.as_bytes())).unwrap();
        let back: Value = serde_json::from_slice(&reply.to_json().unwrap()).unwrap();
        prop_assert_eq!(&back["id"], &id);
        prop_assert_eq!(&back["result"], &json!({}));
    }
}
