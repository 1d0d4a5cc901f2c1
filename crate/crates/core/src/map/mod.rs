//! Lane-level map model, occupancy grid and the temporary obstacle patch.

mod grid;
mod patch;

pub use grid::{
    footprint_collides, footprint_collides_with, Cell, CollisionPolicy, Footprint, GridError,
    OccupancyGrid, OrientedRect,
};
pub use patch::{blocked_stations, revert_patch, update_map, BlockedStation, MapPatch};

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{
    offset_polyline, polyline_length, polyline_point_at, project_onto_polyline, Aabb, Polygon, Vec2,
};
use crate::odd::OddParameterKind;

#[derive(
    Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize, Default,
)]
#[serde(transparent)]
pub struct LaneletId(pub u64);

impl fmt::Display for LaneletId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum MapError {
    #[error("map document schema violation: {0}")]
    Schema(String),
    #[error("duplicate lanelet id {0}")]
    DuplicateId(LaneletId),
    #[error("dangling successor {successor} referenced by lanelet {lanelet}")]
    DanglingSuccessor {
        lanelet: LaneletId,
        successor: LaneletId,
    },
    #[error("degenerate geometry in lanelet {lanelet}: {reason}")]
    DegenerateGeometry { lanelet: LaneletId, reason: String },
    #[error("unknown lanelet {0}")]
    UnknownLanelet(LaneletId),
    #[error("frame mismatch: occupancy grid does not overlap the map extent")]
    FrameMismatch,
    #[error("min_occupied_fraction must lie in (0, 1], got {0}")]
    InvalidThreshold(f64),
    #[error(
        "stale patch: created at map version {patch_version}, map is at version {map_version}"
    )]
    StalePatch {
        patch_version: u64,
        map_version: u64,
    },
}

/// An atomic drivable map segment.
#[derive(Debug, Clone, PartialEq)]
pub struct Lanelet {
    id: LaneletId,
    centerline: Vec<Vec2>,
    left_boundary: Vec<Vec2>,
    right_boundary: Vec<Vec2>,
    successors: Vec<LaneletId>,
    odd_tags: BTreeSet<OddParameterKind>,
    blocked: bool,
    polygon: Polygon,
    length: f64,
}

impl Lanelet {
    /// Builds a lanelet, checking its standalone invariants.
    pub fn new(
        id: LaneletId,
        centerline: Vec<Vec2>,
        left_boundary: Vec<Vec2>,
        right_boundary: Vec<Vec2>,
        successors: Vec<LaneletId>,
        odd_tags: BTreeSet<OddParameterKind>,
    ) -> Result<Self, MapError> {
        let degenerate = |reason: &str| MapError::DegenerateGeometry {
            lanelet: id,
            reason: reason.to_string(),
        };
        if centerline.len() < 2 {
            return Err(degenerate("centerline needs at least 2 points"));
        }
        if left_boundary.len() < 2 || right_boundary.len() < 2 {
            return Err(degenerate("boundaries need at least 2 points each"));
        }
        if centerline
            .iter()
            .chain(&left_boundary)
            .chain(&right_boundary)
            .any(|p| !p.is_finite())
        {
            return Err(degenerate("non-finite coordinate"));
        }
        let length = polyline_length(&centerline);
        if length <= 0.0 {
            return Err(degenerate("centerline has zero length"));
        }
        if odd_tags.is_empty() {
            return Err(MapError::Schema(format!(
                "lanelet {id}: odd_tags must not be empty"
            )));
        }
        let mut ring = left_boundary.clone();
        ring.extend(right_boundary.iter().rev().copied());
        let polygon = Polygon::new(ring);
        if !polygon.is_simple() {
            return Err(degenerate("boundary polygon self-intersects"));
        }
        Ok(Self {
            id,
            centerline,
            left_boundary,
            right_boundary,
            successors,
            odd_tags,
            blocked: false,
            polygon,
            length,
        })
    }

    /// Builds a lanelet whose boundaries are offset `width / 2` to either side
    /// of the centerline.
    pub fn from_centerline(
        id: LaneletId,
        centerline: Vec<Vec2>,
        width: f64,
        successors: Vec<LaneletId>,
        odd_tags: BTreeSet<OddParameterKind>,
    ) -> Result<Self, MapError> {
        let left = offset_polyline(&centerline, width / 2.0);
        let right = offset_polyline(&centerline, -width / 2.0);
        Self::new(id, centerline, left, right, successors, odd_tags)
    }

    pub fn id(&self) -> LaneletId {
        self.id
    }

    pub fn centerline(&self) -> &[Vec2] {
        &self.centerline
    }

    pub fn left_boundary(&self) -> &[Vec2] {
        &self.left_boundary
    }

    pub fn right_boundary(&self) -> &[Vec2] {
        &self.right_boundary
    }

    pub fn successors(&self) -> &[LaneletId] {
        &self.successors
    }

    pub fn odd_tags(&self) -> &BTreeSet<OddParameterKind> {
        &self.odd_tags
    }

    pub fn is_blocked(&self) -> bool {
        self.blocked
    }

    pub fn polygon(&self) -> &Polygon {
        &self.polygon
    }

    /// Centerline arc length in meters.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Centerline point and unit tangent at arc length `s`.
    pub fn point_at(&self, s: f64) -> (Vec2, Vec2) {
        polyline_point_at(&self.centerline, s)
    }

    /// Arc length of the projection of `p` onto the centerline, and its lateral distance.
    pub fn project(&self, p: Vec2) -> (f64, f64) {
        let (_, s, d) = project_onto_polyline(&self.centerline, p);
        (s, d)
    }

    /// Endpoints of the lane cross-section through the centerline at `s`
    /// (left boundary point, right boundary point).
    pub fn cross_section(&self, s: f64) -> (Vec2, Vec2) {
        let (c, tangent) = self.point_at(s);
        let normal = tangent.perp();
        let left = ray_hit(&self.left_boundary, c, normal)
            .unwrap_or_else(|| project_onto_polyline(&self.left_boundary, c).0);
        let right = ray_hit(&self.right_boundary, c, -normal)
            .unwrap_or_else(|| project_onto_polyline(&self.right_boundary, c).0);
        (left, right)
    }

    /// Mean drivable width sampled along the lanelet.
    pub fn mean_width(&self) -> f64 {
        let n = 8;
        (0..=n)
            .map(|i| {
                let (l, r) = self.cross_section(self.length * i as f64 / n as f64);
                l.distance(r)
            })
            .sum::<f64>()
            / (n + 1) as f64
    }

    pub fn aabb(&self) -> Aabb {
        self.polygon.aabb()
    }
}

/// First hit of the ray `origin + t * dir` (t >= 0) with a polyline.
fn ray_hit(polyline: &[Vec2], origin: Vec2, dir: Vec2) -> Option<Vec2> {
    let mut best: Option<(f64, Vec2)> = None;
    for w in polyline.windows(2) {
        let seg = w[1] - w[0];
        let denom = dir.cross(seg);
        if denom.abs() < 1e-12 {
            continue;
        }
        let rel = w[0] - origin;
        let t = rel.cross(seg) / denom;
        let u = rel.cross(dir) / denom;
        if t >= -1e-9 && (-1e-9..=1.0 + 1e-9).contains(&u) && best.map_or(true, |(bt, _)| t < bt) {
            best = Some((t, origin + dir * t));
        }
    }
    best.map(|(_, p)| p)
}

/// The directed lane graph with geometry and ODD tags per lanelet.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LaneletMap {
    lanelets: BTreeMap<LaneletId, Lanelet>,
    version: u64,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct MapDocument {
    lanelets: Vec<LaneletDocument>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LaneletDocument {
    id: u64,
    centerline: Vec<Vec2>,
    left: Vec<Vec2>,
    right: Vec<Vec2>,
    successors: Vec<u64>,
    odd_tags: Vec<OddParameterKind>,
}

impl LaneletMap {
    /// Assembles a map and verifies referential integrity.
    pub fn from_lanelets(lanelets: impl IntoIterator<Item = Lanelet>) -> Result<Self, MapError> {
        let mut map = BTreeMap::new();
        for lanelet in lanelets {
            let id = lanelet.id;
            if map.insert(id, lanelet).is_some() {
                return Err(MapError::DuplicateId(id));
            }
        }
        for lanelet in map.values() {
            if let Some(&successor) = lanelet.successors.iter().find(|s| !map.contains_key(s)) {
                return Err(MapError::DanglingSuccessor {
                    lanelet: lanelet.id,
                    successor,
                });
            }
        }
        Ok(Self {
            lanelets: map,
            version: 0,
        })
    }

    pub fn get(&self, id: LaneletId) -> Option<&Lanelet> {
        self.lanelets.get(&id)
    }

    pub fn lanelet(&self, id: LaneletId) -> Result<&Lanelet, MapError> {
        self.get(id).ok_or(MapError::UnknownLanelet(id))
    }

    pub fn contains(&self, id: LaneletId) -> bool {
        self.lanelets.contains_key(&id)
    }

    /// Lanelets in ascending id order.
    pub fn lanelets(&self) -> impl Iterator<Item = &Lanelet> {
        self.lanelets.values()
    }

    pub fn len(&self) -> usize {
        self.lanelets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lanelets.is_empty()
    }

    pub fn version(&self) -> u64 {
        self.version
    }

    pub fn blocked_ids(&self) -> BTreeSet<LaneletId> {
        self.lanelets()
            .filter(|l| l.blocked)
            .map(|l| l.id)
            .collect()
    }

    pub fn edge_count(&self) -> usize {
        self.lanelets().map(|l| l.successors.len()).sum()
    }

    pub fn aabb(&self) -> Aabb {
        self.lanelets()
            .map(Lanelet::aabb)
            .fold(Aabb::empty(), |acc, bb| acc.union(&bb))
    }

    /// Lanelets whose polygon contains `p`, in id order.
    pub fn lanelets_at(&self, p: Vec2) -> impl Iterator<Item = &Lanelet> {
        self.lanelets().filter(move |l| l.polygon.contains(p))
    }

    pub(crate) fn set_blocked(&mut self, id: LaneletId, blocked: bool) {
        if let Some(l) = self.lanelets.get_mut(&id) {
            l.blocked = blocked;
        }
    }

    pub(crate) fn bump_version(&mut self) {
        self.version += 1;
    }

    pub fn to_json(&self) -> String {
        let doc = MapDocument {
            lanelets: self
                .lanelets()
                .map(|l| LaneletDocument {
                    id: l.id.0,
                    centerline: l.centerline.clone(),
                    left: l.left_boundary.clone(),
                    right: l.right_boundary.clone(),
                    successors: l.successors.iter().map(|s| s.0).collect(),
                    odd_tags: l.odd_tags.iter().copied().collect(),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&doc).expect("map serializes")
    }
}

/// Parses and validates a map document.
pub fn load_map(source: &str) -> Result<LaneletMap, MapError> {
    let doc: MapDocument =
        serde_json::from_str(source).map_err(|e| MapError::Schema(e.to_string()))?;
    let lanelets = doc
        .lanelets
        .into_iter()
        .map(|l| {
            let id = LaneletId(l.id);
            if l.odd_tags.is_empty() {
                return Err(MapError::Schema(format!(
                    "lanelet {id}: field `odd_tags` must not be empty"
                )));
            }
            Lanelet::new(
                id,
                l.centerline,
                l.left,
                l.right,
                l.successors.into_iter().map(LaneletId).collect(),
                l.odd_tags.into_iter().collect(),
            )
        })
        .collect::<Result<Vec<_>, _>>()?;
    LaneletMap::from_lanelets(lanelets)
}
