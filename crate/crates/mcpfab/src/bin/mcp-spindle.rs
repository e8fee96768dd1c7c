use clap::Parser;
use mcpfab::cli::{init_tracing, run_server, ServerArgs};
use mcpfab::tools::{PollPolicy, ServerKind};

/// Direct MCP server for spindle-speed lookup.
#[derive(Parser)]
#[command(name = "mcp-spindle", version)]
struct Cli {
    #[command(flatten)]
    server: ServerArgs,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let cli = Cli::parse();
    run_server(ServerKind::Spindle, cli.server, None, PollPolicy::default()).await
}
