use std::path::PathBuf;

use clap::{Parser, Subcommand};
use mcpfab::cli::init_tracing;
use mcpfab::config::PlannerKind;
use mcpfab::harness::{run_all, select, PlannerChoice, RunOptions, StackMode};
use mcpfab::orchestrator::SessionOptions;

/// Runs scenario scripts against a freshly booted cell.
#[derive(Parser)]
#[command(name = "harness", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario, `all`, or the negative `controls`.
    Run {
        #[arg(long, default_value = "all")]
        scenario: String,
        #[arg(long, value_enum, default_value_t = PlannerKind::Deterministic)]
        planner: PlannerKind,
        /// Output directory for transcripts and the summary.
        #[arg(long, default_value = "transcripts")]
        out: PathBuf,
        /// Directory holding the scenario files.
        #[arg(long, env = "HARNESS_SCENARIOS", default_value = concat!(env!("CARGO_MANIFEST_DIR"), "/scenarios"))]
        scenarios: PathBuf,
        /// Recorded responses for `--planner llm`: one file for every
        /// scenario, or a directory of `<scenario>.json` files.
        #[arg(long, value_name = "PATH")]
        llm_playback: Option<PathBuf>,
        /// Run scenarios concurrently, each on its own stack.
        #[arg(long)]
        parallel: bool,
        /// Start the MCP servers as child processes over stdio.
        #[arg(long)]
        spawn: bool,
        /// Where the server binaries live for `--spawn`; defaults to the
        /// directory of this executable.
        #[arg(long, value_name = "DIR")]
        bin_dir: Option<PathBuf>,
        #[arg(long, env = "STEP_BUDGET", default_value_t = mcpfab::config::DEFAULT_STEP_BUDGET)]
        step_budget: usize,
    },
}

#[tokio::main]
async fn main() {
    init_tracing();
    let Command::Run {
        scenario,
        planner,
        out,
        scenarios,
        llm_playback,
        parallel,
        spawn,
        bin_dir,
        step_budget,
    } = Cli::parse().command;

    let scripts = match select(&scenarios, &scenario) {
        Ok(s) => s,
        Err(e) => {
            eprintln!("harness: {e}");
            std::process::exit(1);
        }
    };
    let mode = if spawn {
        let dir = bin_dir.or_else(|| std::env::current_exe().ok()?.parent().map(PathBuf::from));
        match dir {
            Some(bin_dir) => StackMode::Spawn { bin_dir },
            None => {
                eprintln!("harness: cannot locate server binaries, pass --bin-dir");
                std::process::exit(1);
            }
        }
    } else {
        StackMode::InProcess
    };
    let opts = RunOptions {
        planner: match planner {
            PlannerKind::Deterministic => PlannerChoice::Deterministic,
            PlannerKind::Llm => PlannerChoice::Llm { playback: llm_playback },
        },
        mode,
        out_dir: out,
        session: SessionOptions { step_budget },
    };
    match run_all(&scripts, &opts, parallel).await {
        Ok(summary) => {
            print!("{}", summary.table());
            for r in summary.reports.iter().filter(|r| !r.as_expected) {
                for f in &r.failures {
                    eprintln!("{}: {f}", r.scenario);
                }
            }
            std::process::exit(summary.exit_code());
        }
        Err(e) => {
            eprintln!("harness: {e}");
            std::process::exit(1);
        }
    }
}
