//! The remote-assistance session: candidate generation, operator response
//! validation and the state machine that gates path execution.

mod candidates;
mod session;

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::Pose;
use crate::map::LaneletId;
use crate::motion::GeometricPath;
use crate::odd::OddParameterKind;
use crate::route::Route;

pub use candidates::{find_path_candidates, CandidateRequest, CandidateScorer, RouteCostScorer};
pub use session::{
    next_state, replay, validate_response, Actor, AssistanceSession, Event, EventKind, LogEntry,
    SessionConfig, SessionState, ValidatedSelection,
};

/// Literal message of every rejected operator response.
pub const ASSISTANCE_NOT_VALID: &str = "Assistance not valid";
/// Literal message when no candidate survives generation.
pub const ZERO_CANDIDATES: &str = "Zero candidates found";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Autonomous,
    AwaitingAssistance,
    AssistedDriving,
    Mrm,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VehicleState {
    pub pose: Pose,
    pub speed: f64,
    pub current_lanelet: LaneletId,
    pub goal_lanelet: LaneletId,
    pub mode: Mode,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PathCandidate {
    pub candidate_id: usize,
    pub route: Route,
    pub path: GeometricPath,
    pub odd_modifications: BTreeSet<OddParameterKind>,
    pub cost_score: f64,
    pub preferred: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssistanceResponse {
    pub candidate_id: usize,
    pub approved_modifications: BTreeSet<OddParameterKind>,
    #[serde(default)]
    pub operator_id: String,
}

/// Why a response was turned down.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InvalidReason {
    UnknownCandidate,
    ModificationsNotAcknowledged,
    StalePath,
}

impl InvalidReason {
    pub fn as_str(self) -> &'static str {
        match self {
            InvalidReason::UnknownCandidate => "unknown_candidate",
            InvalidReason::ModificationsNotAcknowledged => "modifications_not_acknowledged",
            InvalidReason::StalePath => "stale_path",
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum AssistanceError {
    #[error("Assistance not valid")]
    NotValid(InvalidReason),
    #[error("Zero candidates found")]
    ZeroCandidates,
    #[error("event {event} not applicable in state {state}")]
    Protocol {
        state: SessionState,
        event: EventKind,
    },
    #[error("vehicle is not awaiting assistance")]
    NotAwaitingAssistance,
    #[error(transparent)]
    Map(#[from] crate::map::MapError),
    #[error(transparent)]
    Route(#[from] crate::route::RouteError),
}

impl AssistanceError {
    /// Machine-readable reason for rejected responses.
    pub fn reason(&self) -> Option<InvalidReason> {
        match self {
            AssistanceError::NotValid(r) => Some(*r),
            _ => None,
        }
    }
}
