//! Dynamic collaborative path planning for remote assistance of automated vehicles.

pub mod assistance;
pub mod fixtures;
pub mod gateway;
pub mod geometry;
pub mod map;
pub mod motion;
pub mod odd;
pub mod route;
pub mod sim;

pub use assistance::{
    AssistanceResponse, AssistanceSession, Mode, PathCandidate, SessionState, VehicleState,
};
pub use geometry::{Pose, Vec2};
pub use map::{LaneletId, LaneletMap, OccupancyGrid};
pub use motion::{GeometricPath, PlannerParams};
pub use odd::{CostWeights, OddParameterKind, OddProfile};
pub use route::Route;
