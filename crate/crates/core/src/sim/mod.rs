//! Desk-scale simulation: scenarios, a kinematic path follower, disengagement
//! detection, scripted operators and the end-to-end episode loop.

mod disengage;
mod episode;
mod follower;
mod policy;
mod scenario;

pub use disengage::{
    blocked_ahead, detect_disengagement, DISENGAGEMENT_LOOKAHEAD, GOAL_REACHED_TOLERANCE,
};
pub use episode::{
    run_scenario, CandidateSummary, Distances, Episode, EpisodeConfig, EpisodeReport, Offer,
    Outcome, PhaseTimes, SimError,
};
pub use follower::{
    track_path, track_reference, FollowerParams, PathTracker, Reference, SimState, TrackError,
    TrackOutcome, TrackStep,
};
pub use policy::{approve, Decision, OperatorPolicy, ScriptedPolicy};
pub use scenario::{Scenario, ScenarioDocument, ScenarioError, ScenarioObstacle};
