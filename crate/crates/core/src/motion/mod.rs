//! Continuous path generation along a lanelet route.

mod planner;
pub mod reeds_shepp;
mod waypoints;

pub use crate::geometry::Pose;
pub use planner::{
    plan_path, GeometricPath, GoalTolerance, PlannerError, PlannerParams, POSE_SPACING,
};
pub use reeds_shepp::{
    advance, reeds_shepp, reeds_shepp_length, Gear, PathSample, PathSegment, ReedsSheppPath, Steer,
};
pub use waypoints::{route_centerline, route_to_waypoints};
