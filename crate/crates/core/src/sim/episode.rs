use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;
use tracing::{debug, info, warn};

use super::disengage::{detect_disengagement, DISENGAGEMENT_LOOKAHEAD};
use super::follower::{FollowerParams, PathTracker, Reference, TrackError};
use super::policy::{Decision, OperatorPolicy};
use super::scenario::{Scenario, ScenarioError};
use crate::assistance::{
    Actor, AssistanceSession, Event, LogEntry, Mode, SessionConfig, SessionState, VehicleState,
};
use crate::geometry::Pose;
use crate::map::{footprint_collides, LaneletId, LaneletMap, MapError, OccupancyGrid};
use crate::motion::{route_centerline, Gear};
use crate::odd::{drivable_area, OddParameterKind, OddProfile};
use crate::route::{k_best_routes, RoutingGraph};

#[derive(Debug, Clone)]
pub struct EpisodeConfig {
    pub dt: f64,
    pub cruise_speed: f64,
    pub assisted_speed: f64,
    pub lookahead: f64,
    /// Sim seconds after which the episode is abandoned.
    pub max_time: f64,
    /// Operator rejections answered with a fresh candidate set; the next
    /// rejection triggers the minimal-risk maneuver.
    pub retry_budget: u32,
    pub follower: FollowerParams,
    /// Profiles are taken from the scenario.
    pub session: SessionConfig,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self {
            dt: 0.05,
            cruise_speed: 5.0,
            assisted_speed: 3.0,
            lookahead: DISENGAGEMENT_LOOKAHEAD,
            max_time: 600.0,
            retry_budget: 3,
            follower: FollowerParams::default(),
            session: SessionConfig::default(),
        }
    }
}

impl EpisodeConfig {
    pub fn with_seed(mut self, seed: u64) -> Self {
        self.session.planner.rng_seed = seed;
        self
    }
}

#[derive(Debug, Error)]
pub enum SimError {
    #[error(transparent)]
    Scenario(#[from] ScenarioError),
    #[error("scenario misconfigured: {0}")]
    Map(#[from] MapError),
    #[error("invalid episode config: {0}")]
    Config(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// Goal reached.
    Completed,
    Mrm,
    /// The follower lost the path.
    Diverged,
    TimedOut,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSummary {
    pub candidate_id: usize,
    pub lanelets: Vec<LaneletId>,
    pub odd_modifications: BTreeSet<OddParameterKind>,
    pub cost_score: f64,
    pub path_length: f64,
    pub cusps: usize,
    pub preferred: bool,
}

/// One candidate set shown to the operator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Offer {
    pub t: f64,
    pub generation: u64,
    pub candidates: Vec<CandidateSummary>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Distances {
    pub total: f64,
    pub autonomous: f64,
    pub assisted: f64,
    pub reverse: f64,
}

/// Sim seconds spent per vehicle mode.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimes {
    pub autonomous: f64,
    pub awaiting_assistance: f64,
    pub assisted_driving: f64,
    pub mrm: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeReport {
    pub scenario: String,
    pub policy: String,
    pub seed: u64,
    pub outcome: Outcome,
    pub success: bool,
    pub final_state: SessionState,
    pub sim_time: f64,
    pub ticks: u64,
    /// Number of times the vehicle asked for assistance.
    pub assistance_rounds: u32,
    pub candidates_offered: usize,
    pub retries: u32,
    pub invalid_responses: u32,
    pub mrm_events: u32,
    pub approved_modifications: BTreeSet<OddParameterKind>,
    pub visited_lanelets: BTreeSet<LaneletId>,
    pub distance: Distances,
    pub phase_times: PhaseTimes,
    /// Largest distance to the approved path while executing it.
    pub max_cross_track: f64,
    pub max_cross_track_autonomous: f64,
    /// Ticks on which the footprint overlapped an obstacle.
    pub collisions: u32,
    /// Ticks spent on lanelets outside the active ODD.
    pub odd_violations: u32,
    pub offers: Vec<Offer>,
    pub final_pose: Pose,
    pub error: Option<String>,
    pub event_log: Vec<LogEntry>,
}

impl EpisodeReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Drive {
    Autonomous,
    Assisted,
}

#[derive(Debug, Clone, Default)]
struct Stats {
    rounds: u32,
    candidates_offered: usize,
    retries: u32,
    invalid_responses: u32,
    approved: BTreeSet<OddParameterKind>,
    visited: BTreeSet<LaneletId>,
    distance: Distances,
    max_cross_track: f64,
    max_cross_track_autonomous: f64,
    collisions: u32,
    odd_violations: u32,
    offers: Vec<Offer>,
    error: Option<String>,
    /// Ticks per mode: autonomous, awaiting, assisted, mrm.
    mode_ticks: [u64; 4],
}

/// Tick-by-tick driver of one scenario run.
pub struct Episode<'s> {
    scenario: &'s Scenario,
    config: EpisodeConfig,
    session: AssistanceSession,
    grid: OccupancyGrid,
    present: Vec<bool>,
    ticks: u64,
    pose: Pose,
    lanelet: LaneletId,
    tracker: Option<(Drive, PathTracker, Vec<LaneletId>)>,
    left_nominal: bool,
    log_seen: usize,
    stats: Stats,
    outcome: Option<Outcome>,
}

fn admitted(
    tags: &BTreeSet<OddParameterKind>,
    nominal: &OddProfile,
    approved: &BTreeSet<OddParameterKind>,
) -> bool {
    tags.iter()
        .all(|k| nominal.permits(*k) || approved.contains(k))
}

/// The containing lanelet furthest along `route`, else the lowest-id
/// containing one, else `previous`.
fn locate(map: &LaneletMap, pose: &Pose, route: &[LaneletId], previous: LaneletId) -> LaneletId {
    let containing: Vec<LaneletId> = map.lanelets_at(pose.position()).map(|l| l.id()).collect();
    containing
        .iter()
        .filter_map(|id| route.iter().position(|r| r == id).map(|i| (i, *id)))
        .max()
        .map(|(_, id)| id)
        .or_else(|| containing.first().copied())
        .unwrap_or(previous)
}

impl<'s> Episode<'s> {
    pub fn new(scenario: &'s Scenario, mut config: EpisodeConfig) -> Result<Self, SimError> {
        if !(config.dt > 0.0 && config.cruise_speed > 0.0 && config.assisted_speed > 0.0) {
            return Err(SimError::Config("dt and speeds must be positive".into()));
        }
        config.session.nominal = scenario.nominal.clone();
        config.session.extended = scenario.extended.clone();
        config
            .session
            .planner
            .validate()
            .map_err(|e| SimError::Config(e.to_string()))?;
        scenario.validate(&config.session.planner.footprint)?;
        let vehicle = VehicleState {
            pose: scenario.start_pose,
            speed: 0.0,
            current_lanelet: scenario.start_lanelet,
            goal_lanelet: scenario.goal_lanelet,
            mode: Mode::Autonomous,
        };
        let id = format!("{}-{}", scenario.name, config.session.planner.rng_seed);
        let grid = scenario.grid_at(0.0);
        let session = AssistanceSession::new(
            id,
            scenario.map.clone(),
            grid.clone(),
            vehicle,
            config.session.clone(),
        );
        Ok(Self {
            scenario,
            present: scenario
                .obstacles
                .iter()
                .map(|o| o.present_at(0.0))
                .collect(),
            grid,
            session,
            ticks: 0,
            pose: scenario.start_pose,
            lanelet: scenario.start_lanelet,
            tracker: None,
            left_nominal: false,
            log_seen: 0,
            stats: Stats {
                visited: BTreeSet::from([scenario.start_lanelet]),
                ..Stats::default()
            },
            outcome: None,
            config,
        })
    }

    pub fn session(&self) -> &AssistanceSession {
        &self.session
    }

    pub fn time(&self) -> f64 {
        self.ticks as f64 * self.config.dt
    }

    pub fn pose(&self) -> Pose {
        self.pose
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn outcome(&self) -> Option<Outcome> {
        self.outcome
    }

    /// Progress along the active path, if one is being tracked.
    pub fn path_progress(&self) -> Option<f64> {
        self.tracker.as_ref().map(|(_, t, _)| t.progress())
    }

    fn vehicle(&self) -> VehicleState {
        VehicleState {
            pose: self.pose,
            current_lanelet: self.lanelet,
            ..self.session.vehicle().clone()
        }
    }

    fn disengaged(&self) -> Result<bool, MapError> {
        detect_disengagement(
            &self.vehicle(),
            &self.scenario.map,
            &self.grid,
            &self.scenario.nominal,
            self.config.lookahead,
            self.config.session.block_threshold,
        )
    }

    fn refresh_grid(&mut self, t: f64) {
        let present: Vec<bool> = self
            .scenario
            .obstacles
            .iter()
            .map(|o| o.present_at(t))
            .collect();
        if present != self.present {
            info!(t, "obstacle set changed");
            self.present = present;
            self.grid = self.scenario.grid_at(t);
            self.session.set_grid(self.grid.clone());
        }
    }

    fn finish(&mut self, outcome: Outcome) -> Outcome {
        info!(?outcome, t = self.time(), "episode finished");
        self.outcome = Some(outcome);
        outcome
    }

    /// Advances the simulation by one tick. Returns the outcome once the
    /// episode has ended.
    pub fn step(&mut self, policy: &mut dyn OperatorPolicy) -> Result<Option<Outcome>, SimError> {
        if self.outcome.is_some() {
            return Ok(self.outcome);
        }
        let t = self.time();
        self.refresh_grid(t);
        let mode = self.session.vehicle().mode;
        match self.session.state() {
            SessionState::Idle | SessionState::Resolved => self.drive_autonomous(t)?,
            SessionState::AwaitingOperator => self.await_operator(t, policy)?,
            SessionState::Executing => self.drive_assisted(t)?,
            SessionState::Mrm => {
                self.finish(Outcome::Mrm);
            }
            SessionState::CandidatesPending => {
                return Err(SimError::Config(
                    "session stuck generating candidates".into(),
                ))
            }
        }
        let log = self.session.event_log();
        for entry in &log[self.log_seen..] {
            policy.observe(&self.session, entry);
        }
        self.log_seen = log.len();
        if self.outcome.is_none() {
            let slot = match mode {
                Mode::Autonomous => 0,
                Mode::AwaitingAssistance => 1,
                Mode::AssistedDriving => 2,
                Mode::Mrm => 3,
            };
            self.stats.mode_ticks[slot] += 1;
            self.ticks += 1;
            if self.time() > self.config.max_time {
                self.finish(Outcome::TimedOut);
            }
        }
        Ok(self.outcome)
    }

    fn nominal_route(&self) -> Option<Vec<LaneletId>> {
        let map = &self.scenario.map;
        let nominal = &self.scenario.nominal;
        let area = drivable_area(map, nominal);
        let graph = RoutingGraph::build(map, &area, nominal, &self.config.session.weights).ok()?;
        k_best_routes(&graph, self.lanelet, self.scenario.goal_lanelet, 1)
            .ok()?
            .into_iter()
            .next()
            .map(|r| r.lanelet_ids)
    }

    fn drive_autonomous(&mut self, t: f64) -> Result<(), SimError> {
        if self.disengaged()? {
            return self.request_assistance(t);
        }
        if !matches!(self.tracker, Some((Drive::Autonomous, ..))) {
            let Some(route) = self.nominal_route() else {
                return self.request_assistance(t);
            };
            let ids: Vec<u64> = route.iter().map(|l| l.0).collect();
            let line = route_centerline(
                &crate::route::Route {
                    lanelet_ids: route.clone(),
                    total_cost: 0.0,
                    total_distance: 0.0,
                },
                &self.scenario.map,
            )?;
            debug!(?ids, "following nominal route");
            let tracker = PathTracker::new(Reference::from_polyline(&line), self.config.follower);
            self.tracker = Some((Drive::Autonomous, tracker, route));
        }
        let speed = self.config.cruise_speed;
        let (_, tracker, route) = self.tracker.as_mut().unwrap();
        let step = match tracker.step(self.pose, speed, self.config.dt) {
            Ok(s) => s,
            Err(e) => return self.diverge(t, e),
        };
        let route = route.clone();
        self.stats.max_cross_track_autonomous =
            self.stats.max_cross_track_autonomous.max(step.cross_track);
        self.moved(step.pose, step.distance, step.gear, &route, speed);
        self.stats.distance.autonomous += step.distance;
        self.check_footprint(&BTreeSet::new());
        if step.arrived && self.lanelet == self.scenario.goal_lanelet {
            self.session.update_vehicle(self.pose, 0.0, self.lanelet);
            self.finish(Outcome::Completed);
        }
        Ok(())
    }

    fn moved(&mut self, pose: Pose, distance: f64, gear: Gear, route: &[LaneletId], speed: f64) {
        self.pose = pose;
        self.lanelet = locate(&self.scenario.map, &pose, route, self.lanelet);
        self.stats.visited.insert(self.lanelet);
        self.stats.distance.total += distance;
        if gear == Gear::Reverse {
            self.stats.distance.reverse += distance;
        }
        self.session.update_vehicle(pose, speed, self.lanelet);
    }

    /// Counts collisions and ticks where no lanelet under the vehicle is
    /// admitted by the nominal profile plus `approved`.
    fn check_footprint(&mut self, approved: &BTreeSet<OddParameterKind>) {
        if footprint_collides(
            &self.grid,
            &self.pose,
            &self.config.session.planner.footprint,
        ) {
            self.stats.collisions += 1;
        }
        let nominal = &self.scenario.nominal;
        let mut under = self
            .scenario
            .map
            .lanelets_at(self.pose.position())
            .peekable();
        if under.peek().is_some() && !under.any(|l| admitted(l.odd_tags(), nominal, approved)) {
            self.stats.odd_violations += 1;
        }
    }

    fn request_assistance(&mut self, t: f64) -> Result<(), SimError> {
        self.tracker = None;
        self.session.update_vehicle(self.pose, 0.0, self.lanelet);
        self.stats.rounds += 1;
        info!(t, lanelet = %self.lanelet, "requesting assistance");
        match self
            .session
            .advance(Event::AssistanceNeeded, t, Actor::Vehicle)
        {
            Ok(_) => self.record_offer(t),
            Err(e) => self.stats.error = Some(e.to_string()),
        }
        Ok(())
    }

    fn record_offer(&mut self, t: f64) {
        let candidates: Vec<CandidateSummary> = self
            .session
            .candidates()
            .iter()
            .map(|c| CandidateSummary {
                candidate_id: c.candidate_id,
                lanelets: c.route.lanelet_ids.clone(),
                odd_modifications: c.odd_modifications.clone(),
                cost_score: c.cost_score,
                path_length: c.path.length,
                cusps: c.path.cusps(),
                preferred: c.preferred,
            })
            .collect();
        self.stats.candidates_offered += candidates.len();
        self.stats.offers.push(Offer {
            t,
            generation: self.session.generation(),
            candidates,
        });
    }

    fn await_operator(&mut self, t: f64, policy: &mut dyn OperatorPolicy) -> Result<(), SimError> {
        if self.session.tick(t).is_some() {
            return Ok(());
        }
        if !self.disengaged()? {
            info!(t, "trigger cleared while waiting");
            self.resolve(t);
            return Ok(());
        }
        match policy.decide(&self.session, t) {
            Decision::Wait => {}
            Decision::Respond(response) => match self.session.respond(&response, t) {
                Ok(SessionState::Executing) => {
                    let c = self
                        .session
                        .selected_candidate()
                        .expect("executing has a selection");
                    let tracker =
                        PathTracker::new(Reference::from_path(&c.path), self.config.follower);
                    self.tracker = Some((Drive::Assisted, tracker, c.route.lanelet_ids.clone()));
                    self.stats
                        .approved
                        .extend(response.approved_modifications.iter().copied());
                    self.left_nominal = false;
                }
                Ok(_) => {}
                Err(e) => {
                    debug!(error = %e, reason = ?e.reason(), "response refused");
                    self.stats.invalid_responses += 1;
                }
            },
            Decision::Abort(why) => {
                warn!(t, %why, "operator link failed");
                self.stats.error = Some(why);
                let _ = self.session.advance(Event::MrmTrigger, t, Actor::Vehicle);
            }
            Decision::RejectAll => {
                let actor = Actor::Operator(policy.name());
                if self.stats.retries >= self.config.retry_budget {
                    info!(t, "retry budget exhausted");
                    let _ = self.session.advance(Event::MrmTrigger, t, Actor::Vehicle);
                } else {
                    self.stats.retries += 1;
                    match self.session.advance(Event::RejectAll, t, actor) {
                        Ok(_) => self.record_offer(t),
                        Err(e) => self.stats.error = Some(e.to_string()),
                    }
                }
            }
        }
        Ok(())
    }

    fn resolve(&mut self, t: f64) {
        if let Err(e) = self
            .session
            .advance(Event::TriggerResolved, t, Actor::Vehicle)
        {
            self.stats.error = Some(e.to_string());
        }
        self.tracker = None;
    }

    fn diverge(&mut self, t: f64, e: TrackError) -> Result<(), SimError> {
        self.stats.error = Some(e.to_string());
        let _ = self.session.advance(Event::MrmTrigger, t, Actor::Vehicle);
        self.finish(Outcome::Diverged);
        Ok(())
    }

    fn drive_assisted(&mut self, t: f64) -> Result<(), SimError> {
        let approved = self
            .session
            .selection()
            .map(|r| r.approved_modifications.clone())
            .unwrap_or_default();
        let speed = self.config.assisted_speed;
        let Some((_, tracker, route)) = self.tracker.as_mut() else {
            return Err(SimError::Config("executing without a path".into()));
        };
        let step = match tracker.step(self.pose, speed, self.config.dt) {
            Ok(s) => s,
            Err(e) => return self.diverge(t, e),
        };
        let route = route.clone();
        self.stats.max_cross_track = self.stats.max_cross_track.max(step.cross_track);
        self.moved(step.pose, step.distance, step.gear, &route, speed);
        self.stats.distance.assisted += step.distance;
        self.check_footprint(&approved);

        let nominal = &self.scenario.nominal;
        let on_nominal = nominal.admits(self.scenario.map.lanelet(self.lanelet)?.odd_tags());
        self.left_nominal |= !on_nominal;
        let t_next = (self.ticks + 1) as f64 * self.config.dt;
        if (self.left_nominal || step.arrived) && on_nominal && !self.disengaged()? {
            info!(t = t_next, lanelet = %self.lanelet, "back on a nominal route");
            let rest = self.tracker.take();
            self.resolve(t_next);
            // the rest of the approved path lies on nominal lanelets; keep it
            // as the autonomous reference instead of jumping to a centerline
            if !step.arrived {
                self.tracker = rest.map(|(_, tracker, route)| (Drive::Autonomous, tracker, route));
            }
        } else if step.arrived {
            info!(
                t = t_next,
                "approved path ended with the trigger still active"
            );
            self.session.update_vehicle(self.pose, 0.0, self.lanelet);
            let _ = self
                .session
                .advance(Event::MrmTrigger, t_next, Actor::Vehicle);
        }
        Ok(())
    }

    pub fn report(&self, policy: &str) -> EpisodeReport {
        let log = self.session.event_log();
        let s = &self.stats;
        let outcome = self.outcome.unwrap_or(Outcome::TimedOut);
        EpisodeReport {
            scenario: self.scenario.name.clone(),
            policy: policy.to_owned(),
            seed: self.config.session.planner.rng_seed,
            outcome,
            success: outcome == Outcome::Completed,
            final_state: self.session.state(),
            sim_time: self.time(),
            ticks: self.ticks,
            assistance_rounds: s.rounds,
            candidates_offered: s.candidates_offered,
            retries: s.retries,
            invalid_responses: s.invalid_responses,
            mrm_events: log.iter().filter(|e| e.to == SessionState::Mrm).count() as u32,
            approved_modifications: s.approved.clone(),
            visited_lanelets: s.visited.clone(),
            distance: s.distance.clone(),
            phase_times: PhaseTimes {
                autonomous: s.mode_ticks[0] as f64 * self.config.dt,
                awaiting_assistance: s.mode_ticks[1] as f64 * self.config.dt,
                assisted_driving: s.mode_ticks[2] as f64 * self.config.dt,
                mrm: s.mode_ticks[3] as f64 * self.config.dt,
            },
            max_cross_track: s.max_cross_track,
            max_cross_track_autonomous: s.max_cross_track_autonomous,
            collisions: s.collisions,
            odd_violations: s.odd_violations,
            offers: s.offers.clone(),
            final_pose: self.pose,
            error: s.error.clone(),
            event_log: log.to_vec(),
        }
    }
}

/// Runs a scenario to the end with the given operator policy.
pub fn run_scenario(
    scenario: &Scenario,
    policy: &mut dyn OperatorPolicy,
    config: EpisodeConfig,
) -> Result<EpisodeReport, SimError> {
    let mut episode = Episode::new(scenario, config)?;
    while episode.step(policy)?.is_none() {}
    Ok(episode.report(&policy.name()))
}
