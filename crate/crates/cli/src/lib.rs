//! Shared code of the `dcpp` and `dcpp-sim` binaries.

pub mod serve;

use std::path::Path;

use anyhow::{bail, Context, Result};
use dcpp_core::assistance::{
    Actor, AssistanceError, AssistanceSession, Event, Mode, SessionConfig, SessionState,
    VehicleState, ZERO_CANDIDATES,
};
use dcpp_core::gateway::publish_request;
use dcpp_core::map::load_map;
use dcpp_core::odd::CostWeights;
use dcpp_core::sim::{EpisodeConfig, Outcome, Scenario};
use serde_json::Value;
use tracing_subscriber::EnvFilter;

/// Log filter from `DCPP_LOG` (e.g. `info`, `dcpp_core=debug`), `warn` if unset.
pub fn init_logging() {
    let filter = EnvFilter::try_from_env("DCPP_LOG").unwrap_or_else(|_| EnvFilter::new("warn"));
    let _ = tracing_subscriber::fmt()
        .with_env_filter(filter)
        .with_writer(std::io::stderr)
        .try_init();
}

#[derive(clap::Args, Debug, Clone)]
pub struct PlanningArgs {
    /// Number of route candidates.
    #[arg(long, default_value_t = 3)]
    pub k: usize,
    /// Weight of the distance term.
    #[arg(long, default_value_t = 1.0)]
    pub w1: f64,
    /// Weight of the preference term.
    #[arg(long, default_value_t = 1.0)]
    pub w2: f64,
    /// Planner seed.
    #[arg(long, default_value_t = 42)]
    pub seed: u64,
    /// Sampling iterations per candidate path.
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Minimum turning radius, meters.
    #[arg(long)]
    pub r_min: Option<f64>,
}

impl PlanningArgs {
    pub fn episode_config(&self) -> Result<EpisodeConfig> {
        if self.k == 0 {
            bail!("--k must be positive");
        }
        let mut c = EpisodeConfig::default().with_seed(self.seed);
        c.session.k = self.k;
        c.session.weights = CostWeights::new(self.w1, self.w2)?;
        if let Some(n) = self.max_iters {
            c.session.planner.max_iterations = n;
        }
        if let Some(r) = self.r_min {
            c.session.planner.r_min = r;
        }
        c.session.planner.validate()?;
        Ok(c)
    }
}

pub fn load_scenario(path: &Path) -> Result<Scenario> {
    Scenario::load(path).with_context(|| format!("loading scenario {}", path.display()))
}

/// Candidates for the scenario's start state with every obstacle present,
/// as the payload of an `assistance_request`.
pub fn plan(scenario: &Scenario, args: &PlanningArgs) -> Result<Value> {
    let config = args.episode_config()?;
    let session_config = SessionConfig {
        nominal: scenario.nominal.clone(),
        extended: scenario.extended.clone(),
        ..config.session
    };
    let vehicle = VehicleState {
        pose: scenario.start_pose,
        speed: 0.0,
        current_lanelet: scenario.start_lanelet,
        goal_lanelet: scenario.goal_lanelet,
        mode: Mode::Autonomous,
    };
    let mut session = AssistanceSession::new(
        format!("{}-{}", scenario.name, args.seed),
        scenario.map.clone(),
        scenario.grid_at(0.0),
        vehicle,
        session_config,
    );
    match session.advance(Event::AssistanceNeeded, 0.0, Actor::Vehicle) {
        Ok(SessionState::AwaitingOperator) => {}
        Ok(state) => bail!("candidate generation ended in {state}"),
        Err(AssistanceError::ZeroCandidates) => bail!(ZERO_CANDIDATES),
        Err(e) => return Err(e.into()),
    }
    Ok(publish_request(&session)?.payload)
}

/// One-line summary of a valid map file.
pub fn validate_map(path: &Path) -> Result<String> {
    let text =
        std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let map = load_map(&text).with_context(|| format!("invalid map {}", path.display()))?;
    let blocked = map.lanelets().filter(|l| l.is_blocked()).count();
    Ok(format!(
        "ok: {} lanelets, {} successor edges, {} blocked",
        map.len(),
        map.edge_count(),
        blocked
    ))
}

pub fn write_output(path: Option<&Path>, text: &str) -> Result<()> {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())),
        None => {
            println!("{text}");
            Ok(())
        }
    }
}

/// Snake-case name of an outcome, as in reports.
pub fn outcome_name(outcome: Outcome) -> &'static str {
    match outcome {
        Outcome::Completed => "completed",
        Outcome::Mrm => "mrm",
        Outcome::Diverged => "diverged",
        Outcome::TimedOut => "timed_out",
    }
}
