//! Device bus over TCP: one simulation task behind a command queue, and
//! the client used by the gateway servers.

use std::net::SocketAddr;

use mcpfab_core::bus::{BusOp, BusReply, BusRequest, DeviceBus, PLANT_SNAPSHOT};
use mcpfab_core::plant::{PlantLayout, PlantState};
use serde_json::Value;
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader, Lines};
use tokio::net::tcp::{OwnedReadHalf, OwnedWriteHalf};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot, Mutex};
use tokio::task::JoinHandle;

enum Command {
    Line(String, oneshot::Sender<Vec<String>>),
    Snapshot(oneshot::Sender<PlantState>),
    Transcript(oneshot::Sender<Vec<String>>),
}

/// Handle to a running bus service.
pub struct BusHandle {
    addr: SocketAddr,
    commands: mpsc::Sender<Command>,
    accept: JoinHandle<()>,
}

impl BusHandle {
    pub fn addr(&self) -> SocketAddr {
        self.addr
    }

    pub async fn snapshot(&self) -> Option<PlantState> {
        let (tx, rx) = oneshot::channel();
        self.commands.send(Command::Snapshot(tx)).await.ok()?;
        rx.await.ok()
    }

    /// Every line seen by the simulation, requests prefixed `> ` and
    /// replies `< `, in the order they were processed.
    pub async fn transcript(&self) -> Vec<String> {
        let (tx, rx) = oneshot::channel();
        if self.commands.send(Command::Transcript(tx)).await.is_err() {
            return Vec::new();
        }
        rx.await.unwrap_or_default()
    }

    /// Stops accepting connections. Connections already open are closed
    /// once their peers hang up.
    pub fn shutdown(&self) {
        self.accept.abort();
    }
}

impl Drop for BusHandle {
    fn drop(&mut self) {
        self.accept.abort();
    }
}

/// Binds `addr` and runs the plant described by `layout`.
pub async fn bus_serve(layout: &PlantLayout, addr: SocketAddr) -> std::io::Result<BusHandle> {
    let listener = TcpListener::bind(addr).await?;
    let local = listener.local_addr()?;
    let (tx, mut rx) = mpsc::channel::<Command>(64);

    let mut bus = DeviceBus::new(layout);
    tokio::spawn(async move {
        // the only owner of the plant: commands are applied in queue order
        while let Some(cmd) = rx.recv().await {
            match cmd {
                Command::Line(line, reply) => {
                    let _ = reply.send(bus.handle_line(&line));
                }
                Command::Snapshot(reply) => {
                    let _ = reply.send(bus.plant().state().clone());
                }
                Command::Transcript(reply) => {
                    let _ = reply.send(bus.transcript().to_vec());
                }
            }
        }
    });

    let queue = tx.clone();
    let accept = tokio::spawn(async move {
        loop {
            let (stream, peer) = match listener.accept().await {
                Ok(conn) => conn,
                Err(e) => {
                    tracing::warn!(error = %e, "bus accept failed");
                    continue;
                }
            };
            tracing::debug!(%peer, "bus connection");
            tokio::spawn(serve_connection(stream, queue.clone()));
        }
    });

    Ok(BusHandle {
        addr: local,
        commands: tx,
        accept,
    })
}

async fn serve_connection(stream: TcpStream, queue: mpsc::Sender<Command>) {
    let _ = stream.set_nodelay(true);
    let (read, mut write) = stream.into_split();
    let mut lines = BufReader::new(read).lines();
    while let Ok(Some(line)) = lines.next_line().await {
        if line.trim().is_empty() {
            continue;
        }
        let (tx, rx) = oneshot::channel();
        if queue.send(Command::Line(line, tx)).await.is_err() {
            break;
        }
        let Ok(replies) = rx.await else { break };
        let mut out = String::new();
        for r in replies {
            out.push_str(&r);
            out.push('\n');
        }
        if write.write_all(out.as_bytes()).await.is_err() || write.flush().await.is_err() {
            return;
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum BusError {
    #[error("cannot reach device bus at {addr}: {source}")]
    Connect {
        addr: String,
        #[source]
        source: std::io::Error,
    },
    #[error("device bus i/o: {0}")]
    Io(#[from] std::io::Error),
    #[error("device bus closed the connection")]
    Closed,
    #[error("malformed bus reply: {0}")]
    Malformed(String),
}

/// Terminal reply of one request plus any feedback that preceded it.
#[derive(Debug, Clone, PartialEq)]
pub struct Exchange {
    pub feedback: Vec<Value>,
    pub reply: BusReply,
}

struct BusConn {
    lines: Lines<BufReader<OwnedReadHalf>>,
    write: OwnedWriteHalf,
}

/// Gateway-side bus connection. Connects on first use; correlation ids
/// count up from 1 per client.
pub struct BusClient {
    addr: String,
    state: Mutex<(Option<BusConn>, u64)>,
}

impl BusClient {
    pub fn new(addr: impl Into<String>) -> Self {
        Self {
            addr: addr.into(),
            state: Mutex::new((None, 0)),
        }
    }

    pub fn addr(&self) -> &str {
        &self.addr
    }

    pub async fn request(&self, op: BusOp, address: &str, args: Value) -> Result<Exchange, BusError> {
        let mut guard = self.state.lock().await;
        let (conn, next_cid) = &mut *guard;
        if conn.is_none() {
            let stream = TcpStream::connect(&self.addr).await.map_err(|source| BusError::Connect {
                addr: self.addr.clone(),
                source,
            })?;
            stream.set_nodelay(true)?;
            let (read, write) = stream.into_split();
            *conn = Some(BusConn {
                lines: BufReader::new(read).lines(),
                write,
            });
        }
        *next_cid += 1;
        let cid = *next_cid;
        let result = exchange(conn.as_mut().expect("connected above"), op, address, args, cid).await;
        if result.is_err() {
            // reconnect on the next request
            *conn = None;
        }
        result
    }

    pub async fn snapshot(&self) -> Result<Value, BusError> {
        match self.request(BusOp::Read, PLANT_SNAPSHOT, Value::Null).await?.reply {
            BusReply::Value { value, .. } => Ok(value),
            other => Err(BusError::Malformed(other.to_line())),
        }
    }
}

async fn exchange(conn: &mut BusConn, op: BusOp, address: &str, args: Value, cid: u64) -> Result<Exchange, BusError> {
    let req = BusRequest::new(op, address, args, cid);
    let mut line = req.to_line();
    line.push('\n');
    conn.write.write_all(line.as_bytes()).await?;
    conn.write.flush().await?;
    let mut feedback = Vec::new();
    loop {
        let line = conn.lines.next_line().await?.ok_or(BusError::Closed)?;
        let reply = BusReply::parse(&line).map_err(BusError::Malformed)?;
        if reply.cid().is_some_and(|c| c != cid) {
            tracing::warn!(line, "dropping bus reply for another request");
            continue;
        }
        match reply {
            BusReply::Feedback { feedback: fb, .. } => feedback.push(fb),
            reply => return Ok(Exchange { feedback, reply }),
        }
    }
}
