use clap::Parser;
use mcpfab::cli::{init_tracing, run_server, BusArgs, ServerArgs};
use mcpfab::tools::{PollPolicy, ServerKind};

/// Gateway MCP server for the drilling machine.
#[derive(Parser)]
#[command(name = "mcp-drill", version)]
struct Cli {
    #[command(flatten)]
    server: ServerArgs,
    #[command(flatten)]
    bus: BusArgs,
    /// Simulated time between state polls.
    #[arg(long, default_value_t = 100)]
    poll_interval_ms: u64,
    /// Simulated time after which a job counts as timed out.
    #[arg(long, default_value_t = 10_000)]
    poll_timeout_ms: u64,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let cli = Cli::parse();
    let poll = PollPolicy {
        interval_ms: cli.poll_interval_ms,
        timeout_ms: cli.poll_timeout_ms,
    };
    run_server(ServerKind::Drill, cli.server, cli.bus.bus, poll).await
}
