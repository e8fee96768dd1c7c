use clap::Parser;
use mcpfab::cli::{init_tracing, run_server, BusArgs, ServerArgs};
use mcpfab::tools::{PollPolicy, ServerKind};

/// Gateway MCP server for the mobile robot.
#[derive(Parser)]
#[command(name = "mcp-robot", version)]
struct Cli {
    #[command(flatten)]
    server: ServerArgs,
    #[command(flatten)]
    bus: BusArgs,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let cli = Cli::parse();
    run_server(ServerKind::Robot, cli.server, cli.bus.bus, PollPolicy::default()).await
}
