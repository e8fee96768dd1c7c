//! MCP client over HTTP or a child process's stdio.

use std::path::PathBuf;
use std::pin::Pin;
use std::process::Stdio;
use std::sync::atomic::{AtomicBool, AtomicI64, Ordering};

use mcpfab_core::jsonrpc::{Id, Message, Outcome, ProtocolError};
use mcpfab_core::mcp::{self, InitializeResult, ServerInfo, ToolCallResult, ToolDescriptor, METHOD_INITIALIZED};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncRead, AsyncWrite, AsyncWriteExt, BufReader, Lines};
use tokio::process::{Child, Command};
use tokio::sync::Mutex;

use crate::transport::{decode_frame, encode_frame, Transport};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Endpoint {
    /// Full URL of the `/mcp` endpoint.
    Http(String),
    /// A server binary speaking newline-delimited JSON-RPC on stdio.
    Stdio { program: PathBuf, args: Vec<String> },
}

impl std::fmt::Display for Endpoint {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Endpoint::Http(url) => f.write_str(url),
            Endpoint::Stdio { program, .. } => write!(f, "stdio:{}", program.display()),
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ClientError {
    #[error("cannot connect: {0}")]
    Connect(String),
    #[error("transport: {0}")]
    Transport(String),
    #[error("connection closed")]
    Closed,
    #[error("server returned error {}: {}", .0.code, .0.message)]
    Protocol(ProtocolError),
    #[error("initialize has not completed")]
    NotInitialized,
    #[error("unexpected reply: {0}")]
    Unexpected(String),
}

type BoxReader = Pin<Box<dyn AsyncRead + Send>>;
type BoxWriter = Pin<Box<dyn AsyncWrite + Send>>;

enum Conn {
    Http {
        http: reqwest::Client,
        url: String,
    },
    Stream {
        lines: Lines<BufReader<BoxReader>>,
        writer: BoxWriter,
        // kept so the child is killed when the client is dropped
        _child: Option<Box<Child>>,
    },
}

/// One connection to one server. Calls through a shared client are
/// serialized: the next request is sent once the previous one is answered.
pub struct McpClient {
    conn: Mutex<Conn>,
    next_id: AtomicI64,
    initialized: AtomicBool,
    server: std::sync::Mutex<Option<ServerInfo>>,
}

impl McpClient {
    pub async fn connect(endpoint: &Endpoint) -> Result<Self, ClientError> {
        match endpoint {
            Endpoint::Http(url) => {
                let http = reqwest::Client::builder()
                    .no_proxy()
                    .build()
                    .map_err(|e| ClientError::Connect(e.to_string()))?;
                Ok(Self::with_conn(Conn::Http { http, url: url.clone() }))
            }
            Endpoint::Stdio { program, args } => {
                let mut child = Command::new(program)
                    .args(args)
                    .stdin(Stdio::piped())
                    .stdout(Stdio::piped())
                    .stderr(Stdio::inherit())
                    .kill_on_drop(true)
                    .spawn()
                    .map_err(|e| ClientError::Connect(format!("{}: {e}", program.display())))?;
                let stdin = child.stdin.take().ok_or(ClientError::Closed)?;
                let stdout = child.stdout.take().ok_or(ClientError::Closed)?;
                let mut client = Self::over_stream(stdout, stdin);
                if let Conn::Stream { _child, .. } = client.conn.get_mut() {
                    *_child = Some(Box::new(child));
                }
                Ok(client)
            }
        }
    }

    /// A client speaking the stdio framing over an arbitrary byte stream.
    pub fn over_stream<R, W>(reader: R, writer: W) -> Self
    where
        R: AsyncRead + Send + 'static,
        W: AsyncWrite + Send + 'static,
    {
        let reader: BoxReader = Box::pin(reader);
        Self::with_conn(Conn::Stream {
            lines: BufReader::new(reader).lines(),
            writer: Box::pin(writer),
            _child: None,
        })
    }

    fn with_conn(conn: Conn) -> Self {
        Self {
            conn: Mutex::new(conn),
            next_id: AtomicI64::new(1),
            initialized: AtomicBool::new(false),
            server: std::sync::Mutex::new(None),
        }
    }

    pub fn server_info(&self) -> Option<ServerInfo> {
        self.server.lock().ok()?.clone()
    }

    /// Runs the handshake: `initialize`, then `notifications/initialized`.
    pub async fn initialize(&self) -> Result<InitializeResult, ClientError> {
        let params = mcp::initialize_params("mcpfab-orchestrator", env!("CARGO_PKG_VERSION"));
        let value = self.request(mcp::METHOD_INITIALIZE, Some(params)).await?;
        let result: InitializeResult =
            serde_json::from_value(value).map_err(|e| ClientError::Unexpected(format!("initialize result: {e}")))?;
        self.notify(METHOD_INITIALIZED, None).await?;
        if let Ok(mut s) = self.server.lock() {
            *s = Some(result.server_info.clone());
        }
        self.initialized.store(true, Ordering::SeqCst);
        Ok(result)
    }

    pub async fn ping(&self) -> Result<(), ClientError> {
        self.request(mcp::METHOD_PING, None).await.map(|_| ())
    }

    pub async fn list_tools(&self) -> Result<Vec<ToolDescriptor>, ClientError> {
        self.ensure_initialized()?;
        let value = self.request(mcp::METHOD_TOOLS_LIST, None).await?;
        let tools = value
            .get("tools")
            .cloned()
            .ok_or_else(|| ClientError::Unexpected("tools/list result has no `tools`".into()))?;
        serde_json::from_value(tools).map_err(|e| ClientError::Unexpected(format!("tools/list: {e}")))
    }

    /// Tool-level failures (including unknown tools) come back as
    /// `Ok(result)` with `is_error` set.
    pub async fn call_tool(&self, name: &str, arguments: &Value) -> Result<ToolCallResult, ClientError> {
        self.ensure_initialized()?;
        let value = self
            .request(mcp::METHOD_TOOLS_CALL, Some(mcp::call_params(name, arguments)))
            .await?;
        serde_json::from_value(value).map_err(|e| ClientError::Unexpected(format!("tools/call result: {e}")))
    }

    fn ensure_initialized(&self) -> Result<(), ClientError> {
        if self.initialized.load(Ordering::SeqCst) {
            Ok(())
        } else {
            Err(ClientError::NotInitialized)
        }
    }

    /// Sends one request and waits for the response with the same id.
    pub async fn request(&self, method: &str, params: Option<Value>) -> Result<Value, ClientError> {
        let id = Id::Num(self.next_id.fetch_add(1, Ordering::SeqCst));
        let msg = Message::request(id.clone(), method, params);
        let mut conn = self.conn.lock().await;
        let reply = match &mut *conn {
            Conn::Http { http, url } => {
                let body = encode_frame(&msg, Transport::Http).map_err(|e| ClientError::Transport(e.to_string()))?;
                let resp = http
                    .post(url.as_str())
                    .header("content-type", "application/json")
                    .body(body)
                    .send()
                    .await
                    .map_err(|e| ClientError::Transport(e.to_string()))?;
                let bytes = resp.bytes().await.map_err(|e| ClientError::Transport(e.to_string()))?;
                decode_frame(&bytes).map_err(|e| ClientError::Unexpected(e.to_string()))?
            }
            Conn::Stream { lines, writer, .. } => {
                let frame = encode_frame(&msg, Transport::Stdio).map_err(|e| ClientError::Transport(e.to_string()))?;
                writer
                    .write_all(&frame)
                    .await
                    .map_err(|e| ClientError::Transport(e.to_string()))?;
                writer.flush().await.map_err(|e| ClientError::Transport(e.to_string()))?;
                read_response(lines, &id).await?
            }
        };
        match reply {
            Message::Response {
                id: Some(rid),
                outcome,
            } if rid == id => match outcome {
                Outcome::Result(v) => Ok(v),
                Outcome::Error(e) => Err(ClientError::Protocol(e)),
            },
            Message::Response {
                id: None,
                outcome: Outcome::Error(e),
            } => Err(ClientError::Protocol(e)),
            other => Err(ClientError::Unexpected(format!("{other:?}"))),
        }
    }

    pub async fn notify(&self, method: &str, params: Option<Value>) -> Result<(), ClientError> {
        let msg = Message::notification(method, params);
        let mut conn = self.conn.lock().await;
        match &mut *conn {
            Conn::Http { http, url } => {
                let body = encode_frame(&msg, Transport::Http).map_err(|e| ClientError::Transport(e.to_string()))?;
                http.post(url.as_str())
                    .header("content-type", "application/json")
                    .body(body)
                    .send()
                    .await
                    .map_err(|e| ClientError::Transport(e.to_string()))?;
            }
            Conn::Stream { writer, .. } => {
                let frame = encode_frame(&msg, Transport::Stdio).map_err(|e| ClientError::Transport(e.to_string()))?;
                writer
                    .write_all(&frame)
                    .await
                    .map_err(|e| ClientError::Transport(e.to_string()))?;
                writer.flush().await.map_err(|e| ClientError::Transport(e.to_string()))?;
            }
        }
        Ok(())
    }
}

async fn read_response(lines: &mut Lines<BufReader<BoxReader>>, id: &Id) -> Result<Message, ClientError> {
    loop {
        let line = lines
            .next_line()
            .await
            .map_err(|e| ClientError::Transport(e.to_string()))?
            .ok_or(ClientError::Closed)?;
        if line.trim().is_empty() {
            continue;
        }
        let msg = decode_frame(line.as_bytes()).map_err(|e| ClientError::Unexpected(e.to_string()))?;
        match &msg {
            Message::Response { id: Some(rid), .. } if rid != id => {
                tracing::warn!(?rid, "dropping response for another request");
            }
            Message::Response { .. } => return Ok(msg),
            _ => tracing::debug!("ignoring server-initiated message"),
        }
    }
}
