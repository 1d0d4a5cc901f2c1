use std::fmt;

use chrono::{DateTime, SecondsFormat, TimeDelta, Utc};
use serde::{Deserialize, Serialize};

use super::candidates::{find_path_candidates, CandidateRequest, CandidateScorer, RouteCostScorer};
use super::{
    AssistanceError, AssistanceResponse, InvalidReason, Mode, PathCandidate, VehicleState,
};
use crate::map::{footprint_collides, revert_patch, LaneletMap, MapPatch, OccupancyGrid};
use crate::motion::PlannerParams;
use crate::odd::{CostWeights, OddProfile};
use crate::route::DEFAULT_K;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SessionState {
    Idle,
    CandidatesPending,
    AwaitingOperator,
    Executing,
    Resolved,
    Mrm,
}

impl SessionState {
    pub const ALL: [SessionState; 6] = [
        SessionState::Idle,
        SessionState::CandidatesPending,
        SessionState::AwaitingOperator,
        SessionState::Executing,
        SessionState::Resolved,
        SessionState::Mrm,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            SessionState::Idle => "idle",
            SessionState::CandidatesPending => "candidates_pending",
            SessionState::AwaitingOperator => "awaiting_operator",
            SessionState::Executing => "executing",
            SessionState::Resolved => "resolved",
            SessionState::Mrm => "mrm",
        }
    }
}

impl fmt::Display for SessionState {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EventKind {
    AssistanceNeeded,
    CandidatesReady,
    GenerationFailed,
    ValidResponse,
    InvalidResponse,
    RejectAll,
    TriggerResolved,
    MrmTrigger,
    ReRequest,
    ResponseTimeout,
}

impl EventKind {
    pub const ALL: [EventKind; 10] = [
        EventKind::AssistanceNeeded,
        EventKind::CandidatesReady,
        EventKind::GenerationFailed,
        EventKind::ValidResponse,
        EventKind::InvalidResponse,
        EventKind::RejectAll,
        EventKind::TriggerResolved,
        EventKind::MrmTrigger,
        EventKind::ReRequest,
        EventKind::ResponseTimeout,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EventKind::AssistanceNeeded => "assistance_needed",
            EventKind::CandidatesReady => "candidates_ready",
            EventKind::GenerationFailed => "generation_failed",
            EventKind::ValidResponse => "valid_response",
            EventKind::InvalidResponse => "invalid_response",
            EventKind::RejectAll => "reject_all",
            EventKind::TriggerResolved => "trigger_resolved",
            EventKind::MrmTrigger => "mrm_trigger",
            EventKind::ReRequest => "re_request",
            EventKind::ResponseTimeout => "response_timeout",
        }
    }
}

impl fmt::Display for EventKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// The transition table. `None` marks a protocol violation.
pub fn next_state(state: SessionState, event: EventKind) -> Option<SessionState> {
    use EventKind as E;
    use SessionState as S;
    match (state, event) {
        (_, E::MrmTrigger) => Some(S::Mrm),
        (S::Idle, E::AssistanceNeeded) => Some(S::CandidatesPending),
        (S::CandidatesPending, E::CandidatesReady) => Some(S::AwaitingOperator),
        (S::CandidatesPending, E::GenerationFailed) => Some(S::Mrm),
        (S::AwaitingOperator, E::ValidResponse) => Some(S::Executing),
        (S::AwaitingOperator, E::InvalidResponse) => Some(S::AwaitingOperator),
        (S::AwaitingOperator, E::RejectAll) => Some(S::CandidatesPending),
        (S::AwaitingOperator, E::ResponseTimeout) => Some(S::Mrm),
        (
            S::CandidatesPending | S::AwaitingOperator | S::Executing | S::Mrm,
            E::TriggerResolved,
        ) => Some(S::Resolved),
        (S::Mrm, E::ReRequest) => Some(S::CandidatesPending),
        _ => None,
    }
}

/// Who caused a transition.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "id")]
pub enum Actor {
    Vehicle,
    Operator(String),
    Timer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogEntry {
    /// Simulation seconds since the epoch of the run.
    pub t: f64,
    pub from: SessionState,
    pub event: EventKind,
    pub to: SessionState,
    pub actor: Actor,
}

#[derive(Serialize, Deserialize)]
struct LogLine {
    t: String,
    from: SessionState,
    event: EventKind,
    to: SessionState,
}

fn timestamp(t: f64) -> String {
    let micros = (t * 1e6).round() as i64;
    (DateTime::<Utc>::UNIX_EPOCH + TimeDelta::microseconds(micros))
        .to_rfc3339_opts(SecondsFormat::Millis, true)
}

impl LogEntry {
    /// One JSON-lines record: `{"t", "from", "event", "to"}`.
    pub fn to_json_line(&self) -> String {
        serde_json::to_string(&LogLine {
            t: timestamp(self.t),
            from: self.from,
            event: self.event,
            to: self.to,
        })
        .expect("log line serializes")
    }

    /// Parses a record written by [`LogEntry::to_json_line`]. The actor is
    /// not part of the exported form and comes back as the vehicle.
    pub fn from_json_line(line: &str) -> Result<Self, String> {
        let l: LogLine = serde_json::from_str(line).map_err(|e| e.to_string())?;
        let t = DateTime::parse_from_rfc3339(&l.t).map_err(|e| e.to_string())?;
        let micros = t
            .signed_duration_since(DateTime::<Utc>::UNIX_EPOCH)
            .num_microseconds()
            .ok_or("timestamp out of range")?;
        Ok(Self {
            t: micros as f64 / 1e6,
            from: l.from,
            event: l.event,
            to: l.to,
            actor: Actor::Vehicle,
        })
    }
}

/// Re-runs a log from `idle`, checking every recorded transition against the
/// table, and returns the final state.
pub fn replay(log: &[LogEntry]) -> Result<SessionState, AssistanceError> {
    let mut state = SessionState::Idle;
    for entry in log {
        match next_state(state, entry.event) {
            Some(to) if entry.from == state && entry.to == to => state = to,
            _ => {
                return Err(AssistanceError::Protocol {
                    state,
                    event: entry.event,
                })
            }
        }
    }
    Ok(state)
}

/// Proof that a response passed validation for the current candidate set.
/// Only [`validate_response`] creates one.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidatedSelection {
    response: AssistanceResponse,
    generation: u64,
}

impl ValidatedSelection {
    pub fn response(&self) -> &AssistanceResponse {
        &self.response
    }
}

/// Externally triggered events. Candidate generation outcomes are logged by
/// the session itself.
#[derive(Debug, Clone, PartialEq)]
pub enum Event {
    AssistanceNeeded,
    ValidResponse(ValidatedSelection),
    InvalidResponse,
    RejectAll,
    TriggerResolved,
    MrmTrigger,
    ReRequest,
    ResponseTimeout,
}

impl Event {
    pub fn kind(&self) -> EventKind {
        match self {
            Event::AssistanceNeeded => EventKind::AssistanceNeeded,
            Event::ValidResponse(_) => EventKind::ValidResponse,
            Event::InvalidResponse => EventKind::InvalidResponse,
            Event::RejectAll => EventKind::RejectAll,
            Event::TriggerResolved => EventKind::TriggerResolved,
            Event::MrmTrigger => EventKind::MrmTrigger,
            Event::ReRequest => EventKind::ReRequest,
            Event::ResponseTimeout => EventKind::ResponseTimeout,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionConfig {
    pub nominal: OddProfile,
    pub extended: OddProfile,
    pub weights: CostWeights,
    pub k: usize,
    pub planner: PlannerParams,
    pub block_threshold: f64,
    /// Seconds an open request may wait for the operator.
    pub response_timeout: f64,
}

impl Default for SessionConfig {
    fn default() -> Self {
        Self {
            nominal: OddProfile::nominal(),
            extended: OddProfile::extended(),
            weights: CostWeights::default(),
            k: DEFAULT_K,
            planner: PlannerParams::default(),
            block_threshold: 0.5,
            response_timeout: 120.0,
        }
    }
}

/// One assistance episode for one vehicle.
pub struct AssistanceSession {
    id: String,
    config: SessionConfig,
    state: SessionState,
    map: LaneletMap,
    grid: OccupancyGrid,
    vehicle: VehicleState,
    candidates: Vec<PathCandidate>,
    map_patch: Option<MapPatch>,
    generation: u64,
    selection: Option<AssistanceResponse>,
    awaiting_since: Option<f64>,
    log: Vec<LogEntry>,
    scorer: Box<dyn CandidateScorer + Send + Sync>,
}

impl fmt::Debug for AssistanceSession {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("AssistanceSession")
            .field("id", &self.id)
            .field("state", &self.state)
            .field("candidates", &self.candidates.len())
            .field("generation", &self.generation)
            .finish()
    }
}

impl AssistanceSession {
    pub fn new(
        id: impl Into<String>,
        map: LaneletMap,
        grid: OccupancyGrid,
        vehicle: VehicleState,
        config: SessionConfig,
    ) -> Self {
        Self {
            id: id.into(),
            config,
            state: SessionState::Idle,
            map,
            grid,
            vehicle,
            candidates: Vec::new(),
            map_patch: None,
            generation: 0,
            selection: None,
            awaiting_since: None,
            log: Vec::new(),
            scorer: Box::new(RouteCostScorer),
        }
    }

    pub fn with_scorer(mut self, scorer: impl CandidateScorer + Send + Sync + 'static) -> Self {
        self.scorer = Box::new(scorer);
        self
    }

    pub fn id(&self) -> &str {
        &self.id
    }

    pub fn state(&self) -> SessionState {
        self.state
    }

    pub fn config(&self) -> &SessionConfig {
        &self.config
    }

    /// The working map, carrying the temporary patch while one is active.
    pub fn map(&self) -> &LaneletMap {
        &self.map
    }

    pub fn grid(&self) -> &OccupancyGrid {
        &self.grid
    }

    pub fn vehicle(&self) -> &VehicleState {
        &self.vehicle
    }

    pub fn candidates(&self) -> &[PathCandidate] {
        &self.candidates
    }

    pub fn map_patch(&self) -> Option<&MapPatch> {
        self.map_patch.as_ref()
    }

    /// Incremented whenever a new candidate set is offered.
    pub fn generation(&self) -> u64 {
        self.generation
    }

    /// The approved response while executing.
    pub fn selection(&self) -> Option<&AssistanceResponse> {
        self.selection.as_ref()
    }

    pub fn selected_candidate(&self) -> Option<&PathCandidate> {
        self.selection
            .as_ref()
            .and_then(|r| self.candidates.get(r.candidate_id))
    }

    pub fn event_log(&self) -> &[LogEntry] {
        &self.log
    }

    pub fn export_log(&self) -> String {
        self.log.iter().map(|e| e.to_json_line() + "\n").collect()
    }

    /// Replaces the perceived grid; takes effect at the next generation and
    /// validation.
    pub fn set_grid(&mut self, grid: OccupancyGrid) {
        self.grid = grid;
    }

    /// Updates the vehicle's kinematic state. The mode stays under session control.
    pub fn update_vehicle(
        &mut self,
        pose: crate::geometry::Pose,
        speed: f64,
        lanelet: crate::map::LaneletId,
    ) {
        self.vehicle.pose = pose;
        self.vehicle.speed = speed;
        self.vehicle.current_lanelet = lanelet;
    }

    fn transition(
        &mut self,
        event: EventKind,
        t: f64,
        actor: Actor,
    ) -> Result<SessionState, AssistanceError> {
        let from = self.state;
        let to = next_state(from, event).ok_or(AssistanceError::Protocol { state: from, event })?;
        self.state = to;
        self.log.push(LogEntry {
            t,
            from,
            event,
            to,
            actor,
        });
        self.vehicle.mode = match to {
            SessionState::Idle => self.vehicle.mode,
            SessionState::CandidatesPending | SessionState::AwaitingOperator => {
                Mode::AwaitingAssistance
            }
            SessionState::Executing => Mode::AssistedDriving,
            SessionState::Resolved => Mode::Autonomous,
            SessionState::Mrm => Mode::Mrm,
        };
        if to == SessionState::Mrm {
            self.vehicle.speed = 0.0;
        }
        self.awaiting_since = (to == SessionState::AwaitingOperator)
            .then(|| self.awaiting_since.filter(|_| from == to).unwrap_or(t));
        Ok(to)
    }

    fn revert(&mut self) -> Result<(), AssistanceError> {
        if let Some(patch) = self.map_patch.take() {
            revert_patch(&mut self.map, &patch)?;
        }
        Ok(())
    }

    fn generate(&mut self, t: f64) -> Result<SessionState, AssistanceError> {
        self.revert()?;
        self.selection = None;
        let request = CandidateRequest {
            nominal: &self.config.nominal,
            extended: &self.config.extended,
            weights: self.config.weights,
            k: self.config.k,
            planner: &self.config.planner,
            block_threshold: self.config.block_threshold,
        };
        let outcome = find_path_candidates(
            &self.vehicle,
            &mut self.map,
            &self.grid,
            &request,
            self.scorer.as_ref(),
        );
        match outcome {
            Ok((candidates, patch)) => {
                self.candidates = candidates;
                self.map_patch = Some(patch);
                self.generation += 1;
                self.transition(EventKind::CandidatesReady, t, Actor::Vehicle)
            }
            Err(e) => {
                self.candidates.clear();
                self.transition(EventKind::GenerationFailed, t, Actor::Vehicle)?;
                Err(e)
            }
        }
    }

    /// Applies an event at simulation time `t`.
    ///
    /// Events that enter `candidates_pending` run candidate generation right
    /// away; if it fails the session ends in `mrm` and the error is returned.
    /// Inapplicable events leave the session untouched.
    pub fn advance(
        &mut self,
        event: Event,
        t: f64,
        actor: Actor,
    ) -> Result<SessionState, AssistanceError> {
        let kind = event.kind();
        if next_state(self.state, kind).is_none() {
            return Err(AssistanceError::Protocol {
                state: self.state,
                event: kind,
            });
        }
        if let Event::ValidResponse(selection) = &event {
            if selection.generation != self.generation {
                return Err(AssistanceError::Protocol {
                    state: self.state,
                    event: kind,
                });
            }
        }
        let to = self.transition(kind, t, actor)?;
        match event {
            Event::ValidResponse(selection) => self.selection = Some(selection.response),
            Event::TriggerResolved => {
                self.revert()?;
            }
            _ => {}
        }
        if to == SessionState::CandidatesPending {
            return self.generate(t);
        }
        Ok(to)
    }

    /// Validates an operator response and applies the matching event.
    pub fn respond(
        &mut self,
        response: &AssistanceResponse,
        t: f64,
    ) -> Result<SessionState, AssistanceError> {
        let actor = Actor::Operator(response.operator_id.clone());
        match validate_response(self, response) {
            Ok(selection) => self.advance(Event::ValidResponse(selection), t, actor),
            Err(e @ AssistanceError::NotValid(_)) => {
                self.advance(Event::InvalidResponse, t, actor)?;
                Err(e)
            }
            Err(e) => Err(e),
        }
    }

    /// Fires the response timeout once it has elapsed.
    pub fn tick(&mut self, t: f64) -> Option<SessionState> {
        let since = self.awaiting_since?;
        if self.state == SessionState::AwaitingOperator && t - since >= self.config.response_timeout
        {
            return self.advance(Event::ResponseTimeout, t, Actor::Timer).ok();
        }
        None
    }

    /// When the open request started waiting for the operator.
    pub fn awaiting_since(&self) -> Option<f64> {
        self.awaiting_since
    }
}

/// Accepts a response iff the candidate exists, every modification it needs
/// is acknowledged, and its path is still free on the current grid.
pub fn validate_response(
    session: &AssistanceSession,
    response: &AssistanceResponse,
) -> Result<ValidatedSelection, AssistanceError> {
    if session.state != SessionState::AwaitingOperator {
        return Err(AssistanceError::Protocol {
            state: session.state,
            event: EventKind::ValidResponse,
        });
    }
    let candidate = session
        .candidates
        .get(response.candidate_id)
        .ok_or(AssistanceError::NotValid(InvalidReason::UnknownCandidate))?;
    if !candidate
        .odd_modifications
        .is_subset(&response.approved_modifications)
    {
        return Err(AssistanceError::NotValid(
            InvalidReason::ModificationsNotAcknowledged,
        ));
    }
    let footprint = session.config.planner.footprint;
    if candidate
        .path
        .poses
        .iter()
        .any(|p| footprint_collides(&session.grid, p, &footprint))
    {
        return Err(AssistanceError::NotValid(InvalidReason::StalePath));
    }
    Ok(ValidatedSelection {
        response: response.clone(),
        generation: session.generation,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn timestamps_are_iso8601() {
        assert_eq!(timestamp(0.0), "1970-01-01T00:00:00.000Z");
        assert_eq!(timestamp(125.25), "1970-01-01T00:02:05.250Z");
    }

    #[test]
    fn log_lines_round_trip() {
        let e = LogEntry {
            t: 3.5,
            from: SessionState::Idle,
            event: EventKind::AssistanceNeeded,
            to: SessionState::CandidatesPending,
            actor: Actor::Vehicle,
        };
        let line = e.to_json_line();
        assert_eq!(
            line,
            r#"{"t":"1970-01-01T00:00:03.500Z","from":"idle","event":"assistance_needed","to":"candidates_pending"}"#
        );
        assert_eq!(LogEntry::from_json_line(&line).unwrap(), e);
    }

    #[test]
    fn table_spot_checks() {
        use EventKind as E;
        use SessionState as S;
        assert_eq!(next_state(S::Idle, E::ValidResponse), None);
        assert_eq!(next_state(S::Executing, E::MrmTrigger), Some(S::Mrm));
        assert_eq!(next_state(S::Mrm, E::ReRequest), Some(S::CandidatesPending));
        assert_eq!(next_state(S::Resolved, E::AssistanceNeeded), None);
    }
}
