//! Small reference scenarios shared by tests, benches and the simulator.
//!
//! All of them use a 200 x 200 grid at 0.4 m with origin (-5, -40), so the
//! grid covers x in [-5, 75] and y in [-40, 40].

use std::collections::BTreeSet;

use crate::geometry::{Pose, Vec2};
use crate::map::{Cell, Lanelet, LaneletId, LaneletMap, OccupancyGrid, OrientedRect};
use crate::odd::OddParameterKind;

pub const LANE_WIDTH: f64 = 3.5;
pub const GRID_ORIGIN: Vec2 = Vec2 { x: -5.0, y: -40.0 };
pub const GRID_RESOLUTION: f64 = 0.4;
pub const GRID_CELLS: usize = 200;

#[derive(Debug, Clone)]
pub struct Fixture {
    pub name: &'static str,
    pub description: &'static str,
    pub map: LaneletMap,
    /// Static grid without the scenario obstacles.
    pub base_grid: OccupancyGrid,
    pub obstacles: Vec<OrientedRect>,
    pub start_pose: Pose,
    pub start_lanelet: LaneletId,
    pub goal_lanelet: LaneletId,
}

impl Fixture {
    /// The grid as perceived with every obstacle present.
    pub fn grid(&self) -> OccupancyGrid {
        let mut grid = self.base_grid.clone();
        for o in &self.obstacles {
            grid.fill_rect(o, Cell::Occupied);
        }
        grid
    }
}

fn lane(id: u64, points: &[(f64, f64)], successors: &[u64], tags: &[OddParameterKind]) -> Lanelet {
    Lanelet::from_centerline(
        LaneletId(id),
        points.iter().map(|&(x, y)| Vec2::new(x, y)).collect(),
        LANE_WIDTH,
        successors.iter().copied().map(LaneletId).collect(),
        tags.iter().copied().collect::<BTreeSet<_>>(),
    )
    .expect("fixture lanelet is valid")
}

fn empty_grid() -> OccupancyGrid {
    OccupancyGrid::free(GRID_ORIGIN, GRID_RESOLUTION, GRID_CELLS, GRID_CELLS).unwrap()
}

fn block(x0: f64, x1: f64, y: f64) -> OrientedRect {
    OrientedRect {
        center: Vec2::new((x0 + x1) / 2.0, y),
        length: x1 - x0,
        width: LANE_WIDTH,
        heading: 0.0,
    }
}

use OddParameterKind::{ParkingArea, RegularRoad, Sidewalk, SolidLineCrossing};

/// A three-lanelet road whose middle lanelet is blocked, with a parking
/// strip on the right and a sidewalk on the left as detours.
pub fn two_detours() -> Fixture {
    let map = LaneletMap::from_lanelets([
        lane(1, &[(0.0, 0.0), (20.0, 0.0)], &[2, 4, 5], &[RegularRoad]),
        lane(2, &[(20.0, 0.0), (50.0, 0.0)], &[3], &[RegularRoad]),
        lane(3, &[(50.0, 0.0), (70.0, 0.0)], &[], &[RegularRoad]),
        lane(
            4,
            &[(20.0, 0.0), (30.0, -3.5), (40.0, -3.5), (50.0, 0.0)],
            &[3],
            &[ParkingArea],
        ),
        lane(
            5,
            &[(20.0, 0.0), (30.0, 3.5), (40.0, 3.5), (50.0, 0.0)],
            &[3],
            &[Sidewalk],
        ),
    ])
    .unwrap();
    Fixture {
        name: "two_detours",
        description: "blocked lane with a parking-strip detour and a sidewalk detour",
        map,
        base_grid: empty_grid(),
        obstacles: vec![block(33.0, 37.0, 0.0)],
        start_pose: Pose::new(2.0, 0.0, 0.0),
        start_lanelet: LaneletId(1),
        goal_lanelet: LaneletId(3),
    }
}

/// The only detour crosses a solid line into a parking strip and back; a
/// sidewalk further out is blocked as well.
pub fn single_detour() -> Fixture {
    let map = LaneletMap::from_lanelets([
        lane(1, &[(0.0, 0.0), (20.0, 0.0)], &[2, 11, 21], &[RegularRoad]),
        lane(2, &[(20.0, 0.0), (50.0, 0.0)], &[3], &[RegularRoad]),
        lane(3, &[(50.0, 0.0), (70.0, 0.0)], &[], &[RegularRoad]),
        lane(11, &[(20.0, 0.0), (30.0, 3.5)], &[12], &[SolidLineCrossing]),
        lane(12, &[(30.0, 3.5), (40.0, 3.5)], &[13], &[ParkingArea]),
        lane(13, &[(40.0, 3.5), (50.0, 0.0)], &[3], &[SolidLineCrossing]),
        lane(21, &[(20.0, 0.0), (30.0, 7.0)], &[22], &[Sidewalk]),
        lane(22, &[(30.0, 7.0), (40.0, 7.0)], &[23], &[Sidewalk]),
        lane(23, &[(40.0, 7.0), (50.0, 0.0)], &[3], &[Sidewalk]),
    ])
    .unwrap();
    Fixture {
        name: "single_detour",
        description: "single detour over a solid line and a parking strip",
        map,
        base_grid: empty_grid(),
        obstacles: vec![block(33.0, 37.0, 0.0), block(33.0, 37.0, 7.0)],
        start_pose: Pose::new(2.0, 0.0, 0.0),
        start_lanelet: LaneletId(1),
        goal_lanelet: LaneletId(3),
    }
}

/// One straight lanelet of the given length along the x axis, no obstacles.
pub fn straight_corridor(length: f64) -> Fixture {
    let map =
        LaneletMap::from_lanelets([lane(1, &[(0.0, 0.0), (length, 0.0)], &[], &[RegularRoad])])
            .unwrap();
    Fixture {
        name: "straight",
        description: "straight empty corridor",
        map,
        base_grid: empty_grid(),
        obstacles: Vec::new(),
        start_pose: Pose::new(0.0, 0.0, 0.0),
        start_lanelet: LaneletId(1),
        goal_lanelet: LaneletId(1),
    }
}

/// A corridor fully walled across halfway.
pub fn walled_corridor(length: f64) -> Fixture {
    let mut f = straight_corridor(length);
    f.name = "walled";
    f.description = "straight corridor walled across";
    f.obstacles.push(OrientedRect {
        center: Vec2::new(length / 2.0, 0.0),
        length: 1.0,
        width: 20.0,
        heading: 0.0,
    });
    f
}

/// A square lattice of two-way streets, `n x n` intersections 10 m apart,
/// every lanelet a straight segment. Used for routing benchmarks.
pub fn lattice(n: usize) -> LaneletMap {
    let index = |i: usize, j: usize| (i * n + j) as u64;
    // each directed street gets id 1 + 4 * node + direction
    let mut lanelets = Vec::new();
    let dirs: [(i64, i64); 4] = [(1, 0), (-1, 0), (0, 1), (0, -1)];
    let id_of = |i: usize, j: usize, d: usize| 1 + 4 * index(i, j) + d as u64;
    for i in 0..n {
        for j in 0..n {
            for (d, (di, dj)) in dirs.iter().enumerate() {
                let (ti, tj) = (i as i64 + di, j as i64 + dj);
                if ti < 0 || tj < 0 || ti >= n as i64 || tj >= n as i64 {
                    continue;
                }
                let (ti, tj) = (ti as usize, tj as usize);
                let successors: Vec<u64> = (0..4)
                    .filter(|&e| {
                        let (ui, uj) = (ti as i64 + dirs[e].0, tj as i64 + dirs[e].1);
                        // no U-turns
                        e != (d ^ 1) && ui >= 0 && uj >= 0 && ui < n as i64 && uj < n as i64
                    })
                    .map(|e| id_of(ti, tj, e))
                    .collect();
                let from = (10.0 * i as f64, 10.0 * j as f64);
                let to = (10.0 * ti as f64, 10.0 * tj as f64);
                // shift sideways so opposite directions do not overlap
                let (ox, oy) = (-(*dj as f64) * 1.0, *di as f64 * 1.0);
                let tag = if (i + j + d) % 7 == 0 {
                    ParkingArea
                } else {
                    RegularRoad
                };
                lanelets.push(
                    Lanelet::from_centerline(
                        LaneletId(id_of(i, j, d)),
                        vec![
                            Vec2::new(from.0 + ox, from.1 + oy),
                            Vec2::new(to.0 + ox, to.1 + oy),
                        ],
                        2.0,
                        successors.into_iter().map(LaneletId).collect(),
                        BTreeSet::from([tag]),
                    )
                    .unwrap(),
                );
            }
        }
    }
    LaneletMap::from_lanelets(lanelets).unwrap()
}
