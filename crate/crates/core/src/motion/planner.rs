//! RRT* over the occupancy grid with Reeds-Shepp steering.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::reeds_shepp::{reeds_shepp, Gear, PathSegment, ReedsSheppPath};
use super::waypoints::route_to_waypoints;
use crate::geometry::{angle_diff, polyline_length, polyline_point_at, Aabb, Polygon, Pose, Vec2};
use crate::map::{footprint_collides, Footprint, LaneletMap, MapError, OccupancyGrid};
use crate::route::Route;

/// Spacing of the poses in a returned path.
pub const POSE_SPACING: f64 = 0.5;

/// Nodes, closest by position, considered when extending the tree.
const NEAREST_CANDIDATES: usize = 24;

/// Meters of position error traded for one radian of heading error in the
/// neighbor-ball metric.
const HEADING_WEIGHT: f64 = 1.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GoalTolerance {
    pub position: f64,
    pub heading: f64,
}

impl Default for GoalTolerance {
    fn default() -> Self {
        Self {
            position: 0.5,
            heading: 0.2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PlannerParams {
    pub r_min: f64,
    pub footprint: Footprint,
    pub max_iterations: usize,
    pub goal_tolerance: GoalTolerance,
    pub rng_seed: u64,
    pub waypoint_spacing: f64,
    /// Constant of the shrinking neighbor ball, meters.
    pub neighbor_gamma: f64,
    /// Longest tree extension per iteration, meters.
    pub steer_step: f64,
    /// Cost multiplier for distance driven in reverse.
    pub reverse_penalty: f64,
    /// Dilation of the route lanelets that bounds every path pose, meters.
    pub corridor_margin: f64,
    /// Extra margin around the footprint kept free while planning, meters.
    /// Waived within one vehicle length of the start.
    pub clearance: f64,
}

impl Default for PlannerParams {
    fn default() -> Self {
        Self {
            r_min: 5.0,
            footprint: Footprint::default(),
            max_iterations: 5000,
            goal_tolerance: GoalTolerance::default(),
            rng_seed: 42,
            waypoint_spacing: 2.0,
            neighbor_gamma: 10.0,
            steer_step: 4.0,
            reverse_penalty: 2.0,
            corridor_margin: 0.5,
            clearance: 0.2,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<(), PlannerError> {
        let positive = [
            ("r_min", self.r_min),
            ("footprint.length", self.footprint.length),
            ("footprint.width", self.footprint.width),
            ("goal_tolerance.position", self.goal_tolerance.position),
            ("goal_tolerance.heading", self.goal_tolerance.heading),
            ("waypoint_spacing", self.waypoint_spacing),
            ("neighbor_gamma", self.neighbor_gamma),
            ("steer_step", self.steer_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(PlannerError::InvalidParams(format!(
                    "{name} must be positive"
                )));
            }
        }
        if self.max_iterations == 0 {
            return Err(PlannerError::InvalidParams(
                "max_iterations must be positive".into(),
            ));
        }
        if self.goal_tolerance.position >= self.waypoint_spacing {
            return Err(PlannerError::InvalidParams(
                "goal_tolerance.position must be below waypoint_spacing".into(),
            ));
        }
        if !(self.reverse_penalty >= 1.0 && self.reverse_penalty.is_finite()) {
            return Err(PlannerError::InvalidParams(
                "reverse_penalty must be at least 1".into(),
            ));
        }
        if !(self.corridor_margin >= 0.0 && self.corridor_margin.is_finite()) {
            return Err(PlannerError::InvalidParams(
                "corridor_margin must be non-negative".into(),
            ));
        }
        if !(self.clearance >= 0.0 && self.clearance.is_finite()) {
            return Err(PlannerError::InvalidParams(
                "clearance must be non-negative".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum PlannerError {
    #[error("start in collision")]
    StartInCollision,
    #[error("start outside the route corridor")]
    StartOutsideCorridor,
    #[error("no path found")]
    NoPathFound,
    #[error("empty route")]
    EmptyRoute,
    #[error("invalid planner parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Map(#[from] MapError),
}

/// A kinematically feasible path as a chain of Reeds-Shepp primitives.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeometricPath {
    /// Poses at most [`POSE_SPACING`] apart, from start to goal.
    pub poses: Vec<Pose>,
    /// Gear used to reach each pose; the first entry is the initial gear.
    pub gears: Vec<Gear>,
    pub segments: Vec<PathSegment>,
    /// Turning radius of the curved segments.
    pub radius: f64,
    pub length: f64,
    /// Tree cost, with reverse distance penalized.
    pub cost: f64,
}

impl GeometricPath {
    pub fn start(&self) -> Pose {
        self.poses[0]
    }

    pub fn goal(&self) -> Pose {
        *self.poses.last().unwrap()
    }

    /// The path as one continuous primitive sequence from the start pose.
    pub fn reference(&self) -> ReedsSheppPath {
        ReedsSheppPath::from_segments(self.start(), self.radius, self.segments.clone())
    }

    pub fn reverse_length(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.gear == Gear::Reverse)
            .map(|s| s.length)
            .sum()
    }

    pub fn cusps(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].gear != w[1].gear)
            .count()
    }
}

/// Union of the route lanelet polygons, dilated by a margin.
struct Corridor {
    polygons: Vec<(Polygon, Aabb)>,
    margin: f64,
    bounds: Aabb,
}

impl Corridor {
    fn new(route: &Route, map: &LaneletMap, margin: f64) -> Result<Self, MapError> {
        let mut polygons = Vec::new();
        let mut bounds = Aabb::empty();
        for id in &route.lanelet_ids {
            let l = map.lanelet(*id)?;
            let aabb = l.aabb().expanded(margin);
            bounds = bounds.union(&aabb);
            polygons.push((l.polygon().clone(), aabb));
        }
        Ok(Self {
            polygons,
            margin,
            bounds,
        })
    }

    fn contains(&self, p: Vec2) -> bool {
        self.polygons
            .iter()
            .any(|(poly, aabb)| aabb.contains(p) && poly.contains_dilated(p, self.margin))
    }
}

struct Sampler {
    line: Vec<Vec2>,
    line_length: f64,
    half_width: f64,
    goal: Pose,
}

impl Sampler {
    fn sample(&self, rng: &mut ChaCha8Rng, corridor: &Corridor) -> Pose {
        let u: f64 = rng.random();
        if u < 0.7 {
            let s = rng.random_range(0.0..=self.line_length);
            let (p, t) = polyline_point_at(&self.line, s);
            let offset = rng.random_range(-self.half_width..=self.half_width);
            let q = p + t.perp() * offset;
            let heading = t.angle() + rng.random_range(-0.3..=0.3);
            Pose::new(q.x, q.y, heading)
        } else if u < 0.9 {
            let b = corridor.bounds;
            let mut q = Vec2::new(0.0, 0.0);
            for _ in 0..32 {
                q = Vec2::new(
                    rng.random_range(b.min.x..=b.max.x),
                    rng.random_range(b.min.y..=b.max.y),
                );
                if corridor.contains(q) {
                    break;
                }
            }
            let heading = rng.random_range(-std::f64::consts::PI..std::f64::consts::PI);
            Pose::new(q.x, q.y, heading)
        } else {
            self.goal
        }
    }
}

struct Node {
    pose: Pose,
    parent: Option<usize>,
    cost: f64,
    edge: Option<ReedsSheppPath>,
    children: Vec<usize>,
}

struct Tree<'a> {
    nodes: Vec<Node>,
    grid: &'a OccupancyGrid,
    corridor: Corridor,
    params: &'a PlannerParams,
    check_step: f64,
    padded: Footprint,
}

impl Tree<'_> {
    fn pose_valid(&self, pose: &Pose) -> bool {
        if !self.corridor.contains(pose.position()) {
            return false;
        }
        if !footprint_collides(self.grid, pose, &self.padded) {
            return true;
        }
        let near_start = pose.distance(&self.nodes[0].pose) <= self.params.footprint.length;
        near_start && !footprint_collides(self.grid, pose, &self.params.footprint)
    }

    fn edge_free(&self, path: &ReedsSheppPath) -> bool {
        path.sample(self.check_step)
            .iter()
            .skip(1)
            .all(|s| self.pose_valid(&s.pose))
    }

    fn edge_cost(&self, path: &ReedsSheppPath) -> f64 {
        path.length() + (self.params.reverse_penalty - 1.0) * path.reverse_length()
    }

    fn metric(a: &Pose, b: &Pose) -> f64 {
        a.distance(b) + HEADING_WEIGHT * angle_diff(a.heading, b.heading).abs()
    }

    /// Node with the cheapest Reeds-Shepp connection to `pose`, searched
    /// among the closest nodes by position.
    fn nearest(&self, pose: &Pose) -> usize {
        let mut by_distance: Vec<(f64, usize)> = self
            .nodes
            .iter()
            .enumerate()
            .map(|(i, n)| (n.pose.distance(pose), i))
            .collect();
        let k = NEAREST_CANDIDATES.min(by_distance.len());
        by_distance.select_nth_unstable_by(k - 1, |a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        by_distance.truncate(k);
        by_distance.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        let mut best = (f64::INFINITY, by_distance[0].1);
        for &(d, i) in &by_distance {
            // Reeds-Shepp cost is never below the straight-line distance
            if d >= best.0 {
                break;
            }
            let c = self.edge_cost(&reeds_shepp(self.nodes[i].pose, *pose, self.params.r_min));
            if c < best.0 {
                best = (c, i);
            }
        }
        best.1
    }

    fn near(&self, pose: &Pose) -> Vec<usize> {
        let n = (self.nodes.len() + 1) as f64;
        let radius = self.params.neighbor_gamma * (n.ln() / n).cbrt();
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, node)| {
                node.pose.distance(pose) <= radius && Self::metric(&node.pose, pose) <= radius
            })
            .map(|(i, _)| i)
            .collect()
    }

    fn add(&mut self, parent: usize, edge: ReedsSheppPath, pose: Pose, cost: f64) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node {
            pose,
            parent: Some(parent),
            cost,
            edge: Some(edge),
            children: Vec::new(),
        });
        self.nodes[parent].children.push(id);
        id
    }

    fn reparent(&mut self, node: usize, parent: usize, edge: ReedsSheppPath, cost: f64) {
        if let Some(old) = self.nodes[node].parent {
            self.nodes[old].children.retain(|&c| c != node);
        }
        let delta = cost - self.nodes[node].cost;
        self.nodes[node].parent = Some(parent);
        self.nodes[node].edge = Some(edge);
        self.nodes[parent].children.push(node);
        let mut stack = vec![node];
        while let Some(n) = stack.pop() {
            self.nodes[n].cost += delta;
            stack.extend(self.nodes[n].children.iter().copied());
        }
    }

    /// Edges from the root to `node`, in driving order.
    fn edges_to(&self, mut node: usize) -> Vec<&ReedsSheppPath> {
        let mut edges = Vec::new();
        while let Some(parent) = self.nodes[node].parent {
            edges.push(self.nodes[node].edge.as_ref().unwrap());
            node = parent;
        }
        edges.reverse();
        edges
    }
}

fn within_tolerance(a: &Pose, goal: &Pose, tol: &GoalTolerance) -> bool {
    a.distance(goal) <= tol.position && angle_diff(a.heading, goal.heading).abs() <= tol.heading
}

/// Plans a collision-free path from `start` along `route` to the end of its
/// last lanelet.
pub fn plan_path(
    route: &Route,
    map: &LaneletMap,
    grid: &OccupancyGrid,
    start: Pose,
    params: &PlannerParams,
) -> Result<GeometricPath, PlannerError> {
    params.validate()?;
    if route.lanelet_ids.is_empty() {
        return Err(PlannerError::EmptyRoute);
    }
    let waypoints = route_to_waypoints(route, map, params.waypoint_spacing, Some(start))?;
    let goal = *waypoints.last().unwrap();
    let corridor = Corridor::new(route, map, params.corridor_margin)?;
    let widths: Vec<f64> = route
        .lanelet_ids
        .iter()
        .map(|id| map.lanelet(*id).map(|l| l.mean_width()))
        .collect::<Result<_, _>>()?;
    let line: Vec<Vec2> = waypoints.iter().map(Pose::position).collect();
    let sampler = Sampler {
        line_length: polyline_length(&line),
        line,
        half_width: widths.iter().sum::<f64>() / widths.len() as f64,
        goal,
    };

    let mut tree = Tree {
        nodes: vec![Node {
            pose: start,
            parent: None,
            cost: 0.0,
            edge: None,
            children: Vec::new(),
        }],
        grid,
        corridor,
        params,
        check_step: grid.resolution().min(POSE_SPACING),
        padded: Footprint {
            length: params.footprint.length + 2.0 * params.clearance,
            width: params.footprint.width + 2.0 * params.clearance,
        },
    };
    if footprint_collides(grid, &start, &params.footprint) {
        return Err(PlannerError::StartInCollision);
    }
    if !tree.corridor.contains(start.position()) {
        return Err(PlannerError::StartOutsideCorridor);
    }

    let mut rng = ChaCha8Rng::seed_from_u64(params.rng_seed);
    let mut goal_nodes = Vec::new();
    if within_tolerance(&start, &goal, &params.goal_tolerance) {
        goal_nodes.push(0);
    }
    let r = params.r_min;

    for _ in 0..params.max_iterations {
        let target = sampler.sample(&mut rng, &tree.corridor);
        let nearest = tree.nearest(&target);
        let mut edge = reeds_shepp(tree.nodes[nearest].pose, target, r);
        if edge.length() > params.steer_step {
            edge = edge.truncated(params.steer_step);
        }
        if edge.length() < 1e-6 || !tree.edge_free(&edge) {
            continue;
        }
        let new_pose = edge.end_pose();

        // choose the cheapest collision-free parent among the neighbors
        let near = tree.near(&new_pose);
        let mut parent = nearest;
        let mut cost = tree.nodes[nearest].cost + tree.edge_cost(&edge);
        for &i in &near {
            // straight-line distance bounds the connection cost from below
            if i == nearest || tree.nodes[i].cost + tree.nodes[i].pose.distance(&new_pose) >= cost {
                continue;
            }
            let e = reeds_shepp(tree.nodes[i].pose, new_pose, r);
            let c = tree.nodes[i].cost + tree.edge_cost(&e);
            if c < cost && tree.edge_free(&e) {
                parent = i;
                cost = c;
                edge = e;
            }
        }
        let new = tree.add(parent, edge, new_pose, cost);

        for &i in &near {
            if i == parent
                || cost + new_pose.distance(&tree.nodes[i].pose) >= tree.nodes[i].cost - 1e-12
            {
                continue;
            }
            let e = reeds_shepp(new_pose, tree.nodes[i].pose, r);
            let c = cost + tree.edge_cost(&e);
            if c < tree.nodes[i].cost - 1e-12 && tree.edge_free(&e) {
                tree.reparent(i, new, e, c);
            }
        }

        if within_tolerance(&new_pose, &goal, &params.goal_tolerance) {
            goal_nodes.push(new);
        } else if new_pose.distance(&goal) <= params.steer_step {
            let e = reeds_shepp(new_pose, goal, r);
            if e.length() <= 2.0 * params.steer_step && tree.edge_free(&e) {
                let c = cost + tree.edge_cost(&e);
                goal_nodes.push(tree.add(new, e, goal, c));
            }
        }
    }

    let best = goal_nodes
        .iter()
        .copied()
        .min_by(|&a, &b| {
            tree.nodes[a]
                .cost
                .total_cmp(&tree.nodes[b].cost)
                .then(a.cmp(&b))
        })
        .ok_or(PlannerError::NoPathFound)?;
    Ok(assemble(&tree, best, start, params.r_min))
}

fn assemble(tree: &Tree, goal: usize, start: Pose, radius: f64) -> GeometricPath {
    let edges = tree.edges_to(goal);
    let mut poses = vec![start];
    let mut gears = vec![edges
        .first()
        .and_then(|e| e.segments().first())
        .map_or(Gear::Forward, |s| s.gear)];
    let mut segments = Vec::new();
    for edge in &edges {
        for s in edge.sample(POSE_SPACING).into_iter().skip(1) {
            poses.push(s.pose);
            gears.push(s.gear);
        }
        segments.extend_from_slice(edge.segments());
    }
    GeometricPath {
        poses,
        gears,
        length: segments.iter().map(|s| s.length).sum(),
        segments,
        radius,
        cost: tree.nodes[goal].cost,
    }
}
