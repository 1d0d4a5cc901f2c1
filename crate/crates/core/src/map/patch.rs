use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use super::{Cell, Lanelet, LaneletId, LaneletMap, MapError, OccupancyGrid};
use crate::geometry::Vec2;

/// Record of a temporary map update; reverting it restores the blocked flags.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MapPatch {
    pub blocked_lanelet_ids: BTreeSet<LaneletId>,
    pub created_at_version: u64,
}

impl MapPatch {
    pub fn is_empty(&self) -> bool {
        self.blocked_lanelet_ids.is_empty()
    }
}

/// A centerline station at which grid obstacles cover enough of the lane width.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockedStation {
    pub station: f64,
    pub point: Vec2,
    pub occupied_fraction: f64,
}

/// Fraction of the segment `a -> b` that runs through occupied cells.
///
/// The segment is split at every grid line it crosses; each piece lies in
/// exactly one cell. Points outside the grid count as free.
pub(crate) fn occupied_fraction(grid: &OccupancyGrid, a: Vec2, b: Vec2) -> f64 {
    let total = a.distance(b);
    if total <= 0.0 {
        return match grid.cell_at(a) {
            Some(Cell::Occupied) => 1.0,
            _ => 0.0,
        };
    }
    let origin = grid.origin();
    let res = grid.resolution();
    let d = b - a;
    let mut cuts = vec![0.0, 1.0];
    for (p0, dp, o) in [(a.x, d.x, origin.x), (a.y, d.y, origin.y)] {
        if dp.abs() < 1e-15 {
            continue;
        }
        let (lo, hi) = if dp > 0.0 {
            (p0, p0 + dp)
        } else {
            (p0 + dp, p0)
        };
        let first = ((lo - o) / res).ceil() as i64;
        let last = ((hi - o) / res).floor() as i64;
        for k in first..=last {
            let t = (o + k as f64 * res - p0) / dp;
            if t > 0.0 && t < 1.0 {
                cuts.push(t);
            }
        }
    }
    cuts.sort_by(f64::total_cmp);
    let mut covered = 0.0;
    for w in cuts.windows(2) {
        if w[1] - w[0] <= 0.0 {
            continue;
        }
        let mid = a + d * ((w[0] + w[1]) / 2.0);
        if grid.cell_at(mid) == Some(Cell::Occupied) {
            covered += w[1] - w[0];
        }
    }
    covered
}

fn lanelet_blocked_stations(
    lanelet: &Lanelet,
    grid: &OccupancyGrid,
    min_occupied_fraction: f64,
) -> Vec<BlockedStation> {
    let step = grid.resolution() / 2.0;
    let n = (lanelet.length() / step).ceil().max(1.0) as usize;
    (0..=n)
        .filter_map(|i| {
            let s = lanelet.length() * i as f64 / n as f64;
            let (left, right) = lanelet.cross_section(s);
            let fraction = occupied_fraction(grid, left, right);
            (fraction >= min_occupied_fraction).then(|| BlockedStation {
                station: s,
                point: lanelet.point_at(s).0,
                occupied_fraction: fraction,
            })
        })
        .collect()
}

/// Stations, per lanelet, where occupied cells cover at least
/// `min_occupied_fraction` of the lane cross-section. Lanelets without such a
/// station are omitted.
pub fn blocked_stations(
    map: &LaneletMap,
    grid: &OccupancyGrid,
    min_occupied_fraction: f64,
) -> Result<BTreeMap<LaneletId, Vec<BlockedStation>>, MapError> {
    if !(min_occupied_fraction > 0.0 && min_occupied_fraction <= 1.0) {
        return Err(MapError::InvalidThreshold(min_occupied_fraction));
    }
    if !grid.extent().overlaps(&map.aabb()) {
        return Err(MapError::FrameMismatch);
    }
    Ok(map
        .lanelets()
        .filter(|l| l.aabb().overlaps(&grid.extent()))
        .map(|l| {
            (
                l.id(),
                lanelet_blocked_stations(l, grid, min_occupied_fraction),
            )
        })
        .filter(|(_, stations)| !stations.is_empty())
        .collect())
}

/// Marks every lanelet blocked by grid obstacles and bumps the map version.
///
/// The returned patch lists only lanelets this call newly blocked, so
/// reverting it leaves earlier blocks untouched.
pub fn update_map(
    map: &mut LaneletMap,
    grid: &OccupancyGrid,
    min_occupied_fraction: f64,
) -> Result<MapPatch, MapError> {
    let stations = blocked_stations(map, grid, min_occupied_fraction)?;
    let newly_blocked: BTreeSet<LaneletId> = stations
        .keys()
        .copied()
        .filter(|id| !map.get(*id).is_some_and(Lanelet::is_blocked))
        .collect();
    for id in &newly_blocked {
        map.set_blocked(*id, true);
    }
    map.bump_version();
    Ok(MapPatch {
        blocked_lanelet_ids: newly_blocked,
        created_at_version: map.version(),
    })
}

/// Undoes a patch. Only the most recent update can be reverted.
pub fn revert_patch(map: &mut LaneletMap, patch: &MapPatch) -> Result<(), MapError> {
    if map.version() != patch.created_at_version {
        return Err(MapError::StalePatch {
            patch_version: patch.created_at_version,
            map_version: map.version(),
        });
    }
    for id in &patch.blocked_lanelet_ids {
        map.set_blocked(*id, false);
    }
    map.bump_version();
    Ok(())
}
