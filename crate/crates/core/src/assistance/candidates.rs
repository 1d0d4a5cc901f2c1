use std::collections::BTreeSet;

use tracing::{debug, warn};

use super::{AssistanceError, Mode, PathCandidate, VehicleState};
use crate::map::{revert_patch, update_map, LaneletMap, MapPatch, OccupancyGrid};
use crate::motion::{plan_path, GeometricPath, PlannerParams};
use crate::odd::{drivable_area, modifications_for, CostWeights, OddParameterKind, OddProfile};
use crate::route::{k_best_routes, Route, RoutingGraph};

/// Scores a planned candidate; lower is better.
///
/// The default uses the route cost. Implementations may weigh path length,
/// obstacle clearance or the number of modifications instead.
pub trait CandidateScorer {
    fn score(
        &self,
        route: &Route,
        path: &GeometricPath,
        modifications: &BTreeSet<OddParameterKind>,
    ) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct RouteCostScorer;

impl CandidateScorer for RouteCostScorer {
    fn score(&self, route: &Route, _: &GeometricPath, _: &BTreeSet<OddParameterKind>) -> f64 {
        route.total_cost
    }
}

/// Everything candidate generation needs besides the vehicle, map and grid.
#[derive(Debug, Clone)]
pub struct CandidateRequest<'a> {
    pub nominal: &'a OddProfile,
    pub extended: &'a OddProfile,
    pub weights: CostWeights,
    pub k: usize,
    pub planner: &'a PlannerParams,
    /// Share of a lane cross-section that must be occupied to block it.
    pub block_threshold: f64,
}

/// Updates the map from the grid, finds the k best routes under the extended
/// profile and plans a path along each.
///
/// Returns the candidates ranked by score together with the map patch; on
/// error the patch is already reverted. Routes whose planning fails are
/// dropped.
pub fn find_path_candidates(
    vehicle: &VehicleState,
    map: &mut LaneletMap,
    grid: &OccupancyGrid,
    request: &CandidateRequest<'_>,
    scorer: &dyn CandidateScorer,
) -> Result<(Vec<PathCandidate>, MapPatch), AssistanceError> {
    if vehicle.mode != Mode::AwaitingAssistance {
        return Err(AssistanceError::NotAwaitingAssistance);
    }
    let patch = update_map(map, grid, request.block_threshold)?;
    match rank_candidates(vehicle, map, grid, request, scorer) {
        Ok(c) if !c.is_empty() => Ok((c, patch)),
        Ok(_) => {
            revert_patch(map, &patch)?;
            Err(AssistanceError::ZeroCandidates)
        }
        Err(e) => {
            revert_patch(map, &patch)?;
            Err(e)
        }
    }
}

fn rank_candidates(
    vehicle: &VehicleState,
    map: &LaneletMap,
    grid: &OccupancyGrid,
    request: &CandidateRequest<'_>,
    scorer: &dyn CandidateScorer,
) -> Result<Vec<PathCandidate>, AssistanceError> {
    let area = drivable_area(map, request.extended);
    if !area.contains(&vehicle.current_lanelet) || !area.contains(&vehicle.goal_lanelet) {
        return Ok(Vec::new());
    }
    let graph = RoutingGraph::build(map, &area, request.extended, &request.weights)?;
    let routes = k_best_routes(
        &graph,
        vehicle.current_lanelet,
        vehicle.goal_lanelet,
        request.k,
    )?;
    debug!(routes = routes.len(), "phase one done");

    let mut candidates = Vec::new();
    for (rank, route) in routes.into_iter().enumerate() {
        let params = PlannerParams {
            rng_seed: request.planner.rng_seed.wrapping_add(rank as u64),
            ..request.planner.clone()
        };
        let path = match plan_path(&route, map, grid, vehicle.pose, &params) {
            Ok(p) => p,
            Err(e) => {
                warn!(?route.lanelet_ids, error = %e, "dropping route");
                continue;
            }
        };
        let mut odd_modifications = BTreeSet::new();
        for id in &route.lanelet_ids {
            odd_modifications.extend(modifications_for(
                map.lanelet(*id)?,
                request.nominal,
                request.extended,
            ));
        }
        let cost_score = scorer.score(&route, &path, &odd_modifications);
        candidates.push(PathCandidate {
            candidate_id: rank,
            route,
            path,
            odd_modifications,
            cost_score,
            preferred: false,
        });
    }
    // stable: equal scores keep route rank order
    candidates.sort_by(|a, b| a.cost_score.total_cmp(&b.cost_score));
    for (i, c) in candidates.iter_mut().enumerate() {
        c.candidate_id = i;
        c.preferred = i == 0;
    }
    Ok(candidates)
}
