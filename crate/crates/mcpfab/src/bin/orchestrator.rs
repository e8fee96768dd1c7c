use std::net::SocketAddr;
use std::path::PathBuf;
use std::sync::Arc;

use anyhow::Context;
use clap::Parser;
use mcpfab::cli::init_tracing;
use mcpfab::config::{LlmSettings, OrchestratorConfig, PlannerKind};
use mcpfab::devicebus::BusClient;
use mcpfab::orchestrator::api::Orchestrator;
use mcpfab::orchestrator::llm::{HttpBackend, LlmPlanner, PlaybackBackend};
use mcpfab::orchestrator::{DeterministicPlanner, Planner, SessionOptions};

/// Session API in front of the planner loop.
#[derive(Parser)]
#[command(name = "orchestrator", version)]
struct Cli {
    /// TOML file listing servers, planner, step budget and bus address.
    #[arg(long, value_name = "FILE")]
    config: Option<PathBuf>,
    #[arg(long, env = "ORCHESTRATOR_LISTEN", default_value = "127.0.0.1:7300")]
    listen: SocketAddr,
    /// Use recorded chat-completions responses instead of a live endpoint.
    #[arg(long, value_name = "FILE")]
    llm_playback: Option<PathBuf>,
}

#[tokio::main]
async fn main() -> anyhow::Result<()> {
    init_tracing();
    let cli = Cli::parse();
    let mut config = match &cli.config {
        Some(path) => OrchestratorConfig::load(path)?,
        None => OrchestratorConfig::default(),
    };
    config.apply_env()?;

    let planner: Arc<dyn Planner> = match config.planner {
        PlannerKind::Deterministic => Arc::new(DeterministicPlanner),
        PlannerKind::Llm => match &cli.llm_playback {
            Some(path) => Arc::new(LlmPlanner::new(PlaybackBackend::load(path)?, "playback")),
            None => {
                let settings = LlmSettings::from_env().context("PLANNER=llm needs LLM_BASE_URL and LLM_API_KEY")?;
                let model = settings.model.clone();
                Arc::new(LlmPlanner::new(HttpBackend::new(settings)?, model))
            }
        },
    };
    let options = SessionOptions {
        step_budget: config.step_budget,
    };
    let bus = config.bus.clone().map(BusClient::new);
    let orch = Orchestrator::new(config.servers, planner, options, bus);
    let handle = orch.serve(cli.listen).await?;
    eprintln!("orchestrator listening on {}", handle.base_url());
    tokio::signal::ctrl_c().await?;
    handle.stop().await;
    Ok(())
}
