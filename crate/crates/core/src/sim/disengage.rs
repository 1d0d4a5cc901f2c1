use std::collections::{BTreeSet, VecDeque};

use crate::assistance::VehicleState;
use crate::map::{blocked_stations, LaneletId, LaneletMap, MapError, OccupancyGrid};
use crate::odd::{drivable_area, OddProfile};

/// How far ahead perceived blockages count.
pub const DISENGAGEMENT_LOOKAHEAD: f64 = 15.0;
/// Distance before the end of the goal lanelet that counts as arrival.
pub const GOAL_REACHED_TOLERANCE: f64 = 1.0;

/// Lanelets blocked within `lookahead` of the vehicle.
///
/// On the current lanelet only blockages ahead of the vehicle count; on
/// others, any blocked cross-section within straight-line reach does.
pub fn blocked_ahead(
    vehicle: &VehicleState,
    map: &LaneletMap,
    grid: &OccupancyGrid,
    lookahead: f64,
    block_threshold: f64,
) -> Result<BTreeSet<LaneletId>, MapError> {
    let current = map.lanelet(vehicle.current_lanelet)?;
    let p = vehicle.pose.position();
    let (s_vehicle, _) = current.project(p);
    let stations = blocked_stations(map, grid, block_threshold)?;
    Ok(stations
        .into_iter()
        .filter(|(id, sts)| {
            if *id == current.id() {
                sts.iter()
                    .any(|b| b.station > s_vehicle && b.station - s_vehicle <= lookahead)
            } else {
                sts.iter().any(|b| b.point.distance(p) <= lookahead)
            }
        })
        .map(|(id, _)| id)
        .collect())
}

/// True iff no nominal route from the current to the goal lanelet avoids the
/// blockages perceived within `lookahead`.
pub fn detect_disengagement(
    vehicle: &VehicleState,
    map: &LaneletMap,
    grid: &OccupancyGrid,
    nominal: &OddProfile,
    lookahead: f64,
    block_threshold: f64,
) -> Result<bool, MapError> {
    let current = map.lanelet(vehicle.current_lanelet)?;
    map.lanelet(vehicle.goal_lanelet)?;
    if current.id() == vehicle.goal_lanelet {
        let (s, _) = current.project(vehicle.pose.position());
        if current.length() - s <= GOAL_REACHED_TOLERANCE {
            return Ok(false);
        }
    }
    let blocked = blocked_ahead(vehicle, map, grid, lookahead, block_threshold)?;
    let area: BTreeSet<LaneletId> = drivable_area(map, nominal)
        .difference(&blocked)
        .copied()
        .collect();
    if !area.contains(&current.id()) {
        return Ok(true);
    }
    let mut seen = BTreeSet::from([current.id()]);
    let mut queue = VecDeque::from([current.id()]);
    while let Some(id) = queue.pop_front() {
        if id == vehicle.goal_lanelet {
            return Ok(false);
        }
        for s in map.lanelet(id)?.successors() {
            if area.contains(s) && seen.insert(*s) {
                queue.push_back(*s);
            }
        }
    }
    Ok(true)
}
