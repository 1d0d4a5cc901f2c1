use std::net::SocketAddr;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dcpp_cli::serve::{serve, ServeOptions};
use dcpp_cli::{init_logging, load_scenario, plan, validate_map, write_output, PlanningArgs};

/// Remote-assistance path planning for automated vehicles.
#[derive(Parser)]
#[command(name = "dcpp", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and serve it to operator clients over WebSocket.
    Serve {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long, default_value = "127.0.0.1:8080")]
        listen: SocketAddr,
        #[command(flatten)]
        planning: PlanningArgs,
        /// Simulated seconds per wall-clock second.
        #[arg(long, default_value_t = 1.0)]
        time_scale: f64,
        /// Write the episode report here when it ends.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Generate candidates for the scenario start and print them as JSON.
    Plan {
        #[arg(long)]
        scenario: PathBuf,
        /// Output file, stdout if omitted.
        #[arg(long)]
        out: Option<PathBuf>,
        #[command(flatten)]
        planning: PlanningArgs,
    },
    /// Check a lanelet map file.
    ValidateMap {
        #[arg(long)]
        map: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Serve {
            scenario,
            listen,
            planning,
            time_scale,
            report,
        } => {
            let scenario = load_scenario(&scenario)?;
            let opts = ServeOptions {
                listen,
                config: planning.episode_config()?,
                time_scale,
                report,
            };
            tokio::runtime::Runtime::new()?.block_on(serve(scenario, opts))
        }
        Command::Plan {
            scenario,
            out,
            planning,
        } => {
            let scenario = load_scenario(&scenario)?;
            let payload = plan(&scenario, &planning)?;
            write_output(out.as_deref(), &serde_json::to_string_pretty(&payload)?)
        }
        Command::ValidateMap { map } => {
            println!("{}", validate_map(&map)?);
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
