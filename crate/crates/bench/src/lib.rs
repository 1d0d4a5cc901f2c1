//! Inputs shared by the criterion benches under `benches/`.

use dcpp_core::fixtures::{self, Fixture};
use dcpp_core::map::{LaneletId, LaneletMap};
use dcpp_core::motion::PlannerParams;
use dcpp_core::route::Route;

/// Lattice map with more than a thousand lanelets, plus its corner-to-corner query.
pub fn large_map() -> (LaneletMap, LaneletId, LaneletId) {
    let map = fixtures::lattice(17);
    let goal = map
        .lanelets()
        .map(|l| l.id())
        .max()
        .expect("non-empty lattice");
    (map, LaneletId(1), goal)
}

/// The two-detour fixture and both of its detour routes.
pub fn two_detour_request() -> (Fixture, Vec<Route>) {
    let route = |ids: &[u64]| Route {
        lanelet_ids: ids.iter().copied().map(LaneletId).collect(),
        total_cost: 0.0,
        total_distance: 0.0,
    };
    (
        fixtures::two_detours(),
        vec![route(&[1, 4, 3]), route(&[1, 5, 3])],
    )
}

pub fn planner(seed: u64, iterations: usize) -> PlannerParams {
    PlannerParams {
        rng_seed: seed,
        max_iterations: iterations,
        ..PlannerParams::default()
    }
}
