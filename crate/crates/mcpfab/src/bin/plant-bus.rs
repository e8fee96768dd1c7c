use std::net::SocketAddr;
use std::path::PathBuf;

use anyhow::Context;
use clap::Parser;
use mcpfab::cli::init_tracing;
use mcpfab::devicebus::bus_serve;
use mcpfab_core::plant::PlantLayout;

/// Simulated plant behind the line-delimited JSON device bus.
#[derive(Parser)]
#[command(name = "plant-bus", version)]
struct Cli {
    #[arg(long, env = "PLANT_BUS_LISTEN", default_value = "127.0.0.1:7400")]
    listen: SocketAddr,
    /// TOML file with `workpieces` and `robot_at`; defaults to wp1 (steel)
    /// at the drill station and the robot at the dock.
    #[arg(long, value_name = "FILE")]
    layout: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let cli = Cli::parse();
    let layout = match &cli.layout {
        Some(path) => {
            let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
            toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?
        }
        None => PlantLayout::default(),
    };
    let bus = bus_serve(&layout, cli.listen).await?;
    eprintln!("plant-bus listening on {}", bus.addr());
    tokio::signal::ctrl_c().await?;
    bus.shutdown();
    Ok(())
}
