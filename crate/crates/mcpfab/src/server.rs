//! MCP server: lifecycle and tool dispatch over stdio or HTTP.

use std::net::SocketAddr;
use std::sync::Arc;

use async_trait::async_trait;
use axum::body::Bytes;
use axum::extract::State;
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::post;
use axum::Router;
use mcpfab_core::jsonrpc::Message;
use mcpfab_core::mcp::{self, Inbound, InitializeResult, ServerInfo, ToolCallResult, ToolDescriptor, UNKNOWN_TOOL};
use serde_json::{json, Value};
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader};
use tokio::net::TcpListener;
use tokio::sync::oneshot;
use tokio::task::JoinHandle;

use crate::transport::{decode_frame, encode_frame, Transport, MCP_PATH};

/// Implementation side of a server: the tools it advertises and how a call
/// is executed. Tool-level failures are returned as error results.
#[async_trait]
pub trait ToolHandler: Send + Sync + 'static {
    fn tools(&self) -> Vec<ToolDescriptor>;

    async fn call(&self, name: &str, arguments: Value) -> ToolCallResult;
}

/// A handler with no tools, occasionally useful in tests.
pub struct NoTools;

#[async_trait]
impl ToolHandler for NoTools {
    fn tools(&self) -> Vec<ToolDescriptor> {
        Vec::new()
    }

    async fn call(&self, name: &str, _arguments: Value) -> ToolCallResult {
        unknown_tool(name)
    }
}

fn unknown_tool(name: &str) -> ToolCallResult {
    ToolCallResult::error(UNKNOWN_TOOL, &format!("no tool named `{name}` on this server"), None)
}

pub struct McpServer {
    info: ServerInfo,
    tools: Vec<ToolDescriptor>,
    handler: Arc<dyn ToolHandler>,
}

impl McpServer {
    pub fn new(info: ServerInfo, handler: impl ToolHandler) -> Self {
        Self::from_arc(info, Arc::new(handler))
    }

    pub fn from_arc(info: ServerInfo, handler: Arc<dyn ToolHandler>) -> Self {
        let tools = handler.tools();
        Self { info, tools, handler }
    }

    pub fn info(&self) -> &ServerInfo {
        &self.info
    }

    pub fn tools(&self) -> &[ToolDescriptor] {
        &self.tools
    }

    /// Produces the response for one message, or `None` when the message
    /// must not be answered (notifications and stray responses).
    pub async fn handle(&self, msg: Message) -> Option<Message> {
        match mcp::route(msg) {
            Inbound::Initialize { id } => {
                let result = serde_json::to_value(InitializeResult::new(self.info.clone())).ok()?;
                Some(Message::success(id, result))
            }
            Inbound::Ping { id } => Some(Message::success(id, json!({}))),
            Inbound::ListTools { id } => Some(Message::success(id, mcp::list_result(&self.tools))),
            Inbound::CallTool { id, name, arguments } => {
                let result = if self.tools.iter().any(|t| t.name == name) {
                    self.handler.call(&name, arguments).await
                } else {
                    unknown_tool(&name)
                };
                let value = serde_json::to_value(result).unwrap_or(Value::Null);
                Some(Message::success(id, value))
            }
            Inbound::Notification { method } => {
                tracing::debug!(%method, "notification");
                None
            }
            Inbound::Reject(response) => Some(response),
            Inbound::Ignore => None,
        }
    }

    /// Like [`handle`](Self::handle) but starting from raw bytes, so that
    /// parse and envelope errors are answered too.
    pub async fn handle_frame(&self, bytes: &[u8]) -> Option<Message> {
        match decode_frame(bytes) {
            Ok(msg) => self.handle(msg).await,
            Err(e) => Some(e.to_response()),
        }
    }

    /// Serves newline-delimited messages until `reader` hits end of stream.
    /// Messages on one stream are answered strictly in arrival order.
    pub async fn serve_lines<R, W>(&self, reader: R, mut writer: W) -> std::io::Result<()>
    where
        R: AsyncRead + Unpin,
        W: AsyncWrite + Unpin,
    {
        let mut lines = BufReader::new(reader).lines();
        while let Some(line) = lines.next_line().await? {
            if line.trim().is_empty() {
                continue;
            }
            if let Some(reply) = self.handle_frame(line.as_bytes()).await {
                match encode_frame(&reply, Transport::Stdio) {
                    Ok(frame) => {
                        writer.write_all(&frame).await?;
                        writer.flush().await?;
                    }
                    Err(e) => tracing::error!(error = %e, "cannot frame response"),
                }
            }
        }
        Ok(())
    }

    pub async fn serve_stdio(&self) -> std::io::Result<()> {
        self.serve_lines(tokio::io::stdin(), tokio::io::stdout()).await
    }

    /// Binds `addr` and serves `POST /mcp` in the background.
    pub async fn serve_http(self: Arc<Self>, addr: SocketAddr) -> std::io::Result<ServerHandle> {
        let app = Router::new().route(MCP_PATH, post(http_endpoint)).with_state(self);
        spawn_router(addr, app).await
    }
}

/// Binds `addr` and serves `app` until the returned handle is stopped.
pub async fn spawn_router(addr: SocketAddr, app: Router) -> std::io::Result<ServerHandle> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let (stop_tx, stop_rx) = oneshot::channel::<()>();
    let task = tokio::spawn(async move {
        let shutdown = async {
            let _ = stop_rx.await;
        };
        if let Err(e) = axum::serve(listener, app).with_graceful_shutdown(shutdown).await {
            tracing::error!(error = %e, "http server stopped");
        }
    });
    Ok(ServerHandle {
        addr: local,
        stop: Some(stop_tx),
        task,
    })
}

async fn http_endpoint(State(server): State<Arc<McpServer>>, body: Bytes) -> Response {
    match server.handle_frame(&body).await {
        Some(reply) => match encode_frame(&reply, Transport::Http) {
            Ok(bytes) => (StatusCode::OK, [(header::CONTENT_TYPE, "application/json")], bytes).into_response(),
            Err(e) => (StatusCode::INTERNAL_SERVER_ERROR, e.to_string()).into_response(),
        },
        // nothing to answer at the JSON-RPC level
        None => StatusCode::ACCEPTED.into_response(),
    }
}

/// A running HTTP service. Dropping the handle leaves the server running;
/// call [`stop`](Self::stop) to shut it down.
pub struct ServerHandle {
    addr: SocketAddr,
    stop: Option<oneshot::Sender<()>>,
    task: JoinHandle<()>,
}

impl ServerHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    /// URL of the MCP endpoint, for servers started with `serve_http`.
    pub fn url(&self) -> String {
        format!("{}{}", self.base_url(), MCP_PATH)
    }

    pub fn base_url(&self) -> String {
        format!("http://{}", self.addr)
    }

    pub async fn stop(mut self) {
        if let Some(tx) = self.stop.take() {
            let _ = tx.send(());
        }
        let _ = (&mut self.task).await;
    }
}
