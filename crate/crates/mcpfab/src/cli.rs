//! Pieces shared by the server binaries.

use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use clap::Args;

use crate::config::{server_doc, ServerDoc};
use crate::devicebus::BusClient;
use crate::tools::{PollPolicy, ServerKind};

/// Logs go to stderr; stdout may be carrying JSON-RPC.
pub fn init_tracing() {
    let filter = tracing_subscriber::EnvFilter::try_from_default_env().unwrap_or_else(|_| "warn".into());
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

#[derive(Debug, Clone, Args)]
pub struct ServerArgs {
    /// Serve MCP over HTTP at this address instead of stdio.
    #[arg(long, value_name = "ADDR")]
    pub http: Option<SocketAddr>,
    /// Capability document to load instead of the built-in one.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Print the tool descriptors as JSON and exit.
    #[arg(long)]
    pub describe: bool,
}

#[derive(Debug, Clone, Args)]
pub struct BusArgs {
    /// Device bus address.
    #[arg(long, env = "PLANT_BUS_ADDR", value_name = "ADDR")]
    pub bus: Option<String>,
}

/// Builds the server for `kind` and runs it until stdin closes (stdio) or
/// the process is interrupted (HTTP).
pub async fn run_server(kind: ServerKind, args: ServerArgs, bus: Option<String>, poll: PollPolicy) -> anyhow::Result<()> {
    let doc: ServerDoc = server_doc(args.config.as_deref(), kind.builtin_doc())?;
    if args.describe {
        let tools = doc.registry()?.tools();
        println!("{}", serde_json::to_string_pretty(&tools)?);
        return Ok(());
    }
    let client = match (kind.is_gateway(), bus) {
        (false, _) => None,
        (true, Some(addr)) => Some(Arc::new(BusClient::new(addr))),
        (true, None) => anyhow::bail!("{} needs --bus <ADDR> or PLANT_BUS_ADDR", kind.server_name()),
    };
    let server = Arc::new(kind.build(&doc, client, poll)?);
    match args.http {
        Some(addr) => {
            let handle = server.serve_http(addr).await?;
            eprintln!("{} listening on {}", kind.server_name(), handle.url());
            tokio::signal::ctrl_c().await?;
            handle.stop().await;
        }
        None => server.serve_stdio().await?,
    }
    Ok(())
}
