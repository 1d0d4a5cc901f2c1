use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::Result;
use clap::{Parser, Subcommand};
use dcpp_cli::{init_logging, load_scenario, outcome_name, write_output, PlanningArgs};
use dcpp_core::sim::{run_scenario, ScriptedPolicy};

/// Runs scenarios with a scripted operator.
#[derive(Parser)]
#[command(name = "dcpp-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one episode. Exits 2 if it does not succeed.
    Run {
        #[arg(long)]
        scenario: PathBuf,
        /// accept_preferred, accept_index_<n>, reject_all or delay_then_accept_<seconds>
        #[arg(long, default_value = "accept_preferred")]
        policy: ScriptedPolicy,
        #[command(flatten)]
        planning: PlanningArgs,
        /// Report file, stdout if omitted.
        #[arg(long)]
        report: Option<PathBuf>,
    },
}

fn run(cli: Cli) -> Result<bool> {
    let Command::Run {
        scenario,
        mut policy,
        planning,
        report,
    } = cli.command;
    let scenario = load_scenario(&scenario)?;
    let result = run_scenario(&scenario, &mut policy, planning.episode_config()?)?;
    eprintln!(
        "{} {} seed {}: {} after {:.2} s, {} assistance round(s)",
        result.scenario,
        result.policy,
        result.seed,
        outcome_name(result.outcome),
        result.sim_time,
        result.assistance_rounds
    );
    write_output(report.as_deref(), &result.to_json())?;
    Ok(result.success)
}

fn main() -> ExitCode {
    init_logging();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
