use base64::engine::general_purpose::STANDARD as BASE64;
use base64::Engine;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{Aabb, Pose, Vec2};

/// Occupancy state of one grid cell. Wire codes: 0 free, 1 occupied, 2 unknown.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Cell {
    Free,
    Occupied,
    Unknown,
}

impl Cell {
    pub fn code(self) -> u8 {
        match self {
            Cell::Free => 0,
            Cell::Occupied => 1,
            Cell::Unknown => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Cell> {
        match code {
            0 => Some(Cell::Free),
            1 => Some(Cell::Occupied),
            2 => Some(Cell::Unknown),
            _ => None,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum GridError {
    #[error("grid document schema violation: {0}")]
    Schema(String),
    #[error("resolution must be finite and > 0, got {0}")]
    Resolution(f64),
    #[error("cell payload has {found} cells, header declares {width}x{height}")]
    CellCount {
        width: usize,
        height: usize,
        found: usize,
    },
    #[error("invalid cell code {0}")]
    CellCode(u8),
}

/// How the collision predicate treats cells that are not known to be free.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CollisionPolicy {
    pub unknown_is_occupied: bool,
    pub outside_is_occupied: bool,
}

impl Default for CollisionPolicy {
    fn default() -> Self {
        Self {
            unknown_is_occupied: true,
            outside_is_occupied: true,
        }
    }
}

/// Vehicle footprint rectangle, centered on the pose.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Footprint {
    pub length: f64,
    pub width: f64,
}

impl Default for Footprint {
    fn default() -> Self {
        Self {
            length: 4.5,
            width: 1.9,
        }
    }
}

/// An oriented rectangle in the world frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OrientedRect {
    pub center: Vec2,
    pub length: f64,
    pub width: f64,
    #[serde(default)]
    pub heading: f64,
}

impl OrientedRect {
    pub fn at_pose(pose: &Pose, footprint: &Footprint) -> Self {
        Self {
            center: pose.position(),
            length: footprint.length,
            width: footprint.width,
            heading: pose.heading,
        }
    }

    /// Corners in counter-clockwise order.
    pub fn corners(&self) -> [Vec2; 4] {
        let u = Vec2::from_angle(self.heading) * (self.length / 2.0);
        let v = Vec2::from_angle(self.heading).perp() * (self.width / 2.0);
        [
            self.center + u + v,
            self.center - u + v,
            self.center - u - v,
            self.center + u - v,
        ]
    }

    pub fn aabb(&self) -> Aabb {
        Aabb::from_points(&self.corners())
    }

    /// Separating-axis test against an axis-aligned box; touching counts.
    pub fn intersects_box(&self, lo: Vec2, hi: Vec2) -> bool {
        let corners = self.corners();
        // box axes
        let (mut min_x, mut max_x, mut min_y, mut max_y) = (
            f64::INFINITY,
            f64::NEG_INFINITY,
            f64::INFINITY,
            f64::NEG_INFINITY,
        );
        for c in &corners {
            min_x = min_x.min(c.x);
            max_x = max_x.max(c.x);
            min_y = min_y.min(c.y);
            max_y = max_y.max(c.y);
        }
        if max_x < lo.x || min_x > hi.x || max_y < lo.y || min_y > hi.y {
            return false;
        }
        // rectangle axes
        let box_corners = [lo, Vec2::new(hi.x, lo.y), hi, Vec2::new(lo.x, hi.y)];
        let u = Vec2::from_angle(self.heading);
        let v = u.perp();
        for (axis, half) in [(u, self.length / 2.0), (v, self.width / 2.0)] {
            let c = self.center.dot(axis);
            let (mut lo_p, mut hi_p) = (f64::INFINITY, f64::NEG_INFINITY);
            for b in &box_corners {
                let p = b.dot(axis);
                lo_p = lo_p.min(p);
                hi_p = hi_p.max(p);
            }
            if hi_p < c - half || lo_p > c + half {
                return false;
            }
        }
        true
    }
}

/// Rasterized obstacle field in the world frame.
#[derive(Debug, Clone, PartialEq)]
pub struct OccupancyGrid {
    origin: Vec2,
    resolution: f64,
    width: usize,
    height: usize,
    cells: Vec<Cell>,
    // summed-area tables over (occupied) and (occupied or unknown)
    occupied_sat: Vec<u32>,
    blocked_sat: Vec<u32>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum CellPayload {
    Inline(Vec<u8>),
    Base64(String),
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct GridDocument {
    origin: Vec2,
    resolution: f64,
    width: usize,
    height: usize,
    cells: CellPayload,
}

impl OccupancyGrid {
    pub fn new(
        origin: Vec2,
        resolution: f64,
        width: usize,
        height: usize,
        cells: Vec<Cell>,
    ) -> Result<Self, GridError> {
        if !(resolution.is_finite() && resolution > 0.0) {
            return Err(GridError::Resolution(resolution));
        }
        if !origin.is_finite() {
            return Err(GridError::Schema("origin must be finite".into()));
        }
        if cells.len() != width * height {
            return Err(GridError::CellCount {
                width,
                height,
                found: cells.len(),
            });
        }
        let mut grid = Self {
            origin,
            resolution,
            width,
            height,
            cells,
            occupied_sat: Vec::new(),
            blocked_sat: Vec::new(),
        };
        grid.rebuild_tables();
        Ok(grid)
    }

    /// A grid with every cell free.
    pub fn free(
        origin: Vec2,
        resolution: f64,
        width: usize,
        height: usize,
    ) -> Result<Self, GridError> {
        Self::new(
            origin,
            resolution,
            width,
            height,
            vec![Cell::Free; width * height],
        )
    }

    /// Parses a grid document. `cells` may be an inline array of codes or a
    /// base64 string of one byte per cell.
    pub fn from_json(text: &str) -> Result<Self, GridError> {
        let doc: GridDocument =
            serde_json::from_str(text).map_err(|e| GridError::Schema(e.to_string()))?;
        let codes = match doc.cells {
            CellPayload::Inline(codes) => codes,
            CellPayload::Base64(text) => BASE64
                .decode(text.as_bytes())
                .map_err(|e| GridError::Schema(format!("cells: {e}")))?,
        };
        let cells = codes
            .into_iter()
            .map(|c| Cell::from_code(c).ok_or(GridError::CellCode(c)))
            .collect::<Result<Vec<_>, _>>()?;
        Self::new(doc.origin, doc.resolution, doc.width, doc.height, cells)
    }

    /// Serializes with a base64 cell payload.
    pub fn to_json(&self) -> String {
        let codes: Vec<u8> = self.cells.iter().map(|c| c.code()).collect();
        let doc = GridDocument {
            origin: self.origin,
            resolution: self.resolution,
            width: self.width,
            height: self.height,
            cells: CellPayload::Base64(BASE64.encode(codes)),
        };
        serde_json::to_string(&doc).expect("grid serializes")
    }

    pub fn origin(&self) -> Vec2 {
        self.origin
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn cells(&self) -> &[Cell] {
        &self.cells
    }

    pub fn extent(&self) -> Aabb {
        Aabb {
            min: self.origin,
            max: self.origin
                + Vec2::new(
                    self.width as f64 * self.resolution,
                    self.height as f64 * self.resolution,
                ),
        }
    }

    pub fn cell(&self, ix: usize, iy: usize) -> Cell {
        self.cells[iy * self.width + ix]
    }

    pub fn set(&mut self, ix: usize, iy: usize, cell: Cell) {
        self.cells[iy * self.width + ix] = cell;
        self.rebuild_tables();
    }

    /// Cell index containing a world point, if inside the grid.
    pub fn cell_index(&self, p: Vec2) -> Option<(usize, usize)> {
        let fx = ((p.x - self.origin.x) / self.resolution).floor();
        let fy = ((p.y - self.origin.y) / self.resolution).floor();
        if fx < 0.0 || fy < 0.0 || fx >= self.width as f64 || fy >= self.height as f64 {
            return None;
        }
        Some((fx as usize, fy as usize))
    }

    pub fn cell_at(&self, p: Vec2) -> Option<Cell> {
        self.cell_index(p).map(|(ix, iy)| self.cell(ix, iy))
    }

    /// World-frame lower and upper corners of a cell.
    pub fn cell_bounds(&self, ix: usize, iy: usize) -> (Vec2, Vec2) {
        let lo = self.origin + Vec2::new(ix as f64, iy as f64) * self.resolution;
        (lo, lo + Vec2::new(self.resolution, self.resolution))
    }

    pub fn cell_center(&self, ix: usize, iy: usize) -> Vec2 {
        let (lo, hi) = self.cell_bounds(ix, iy);
        lo.lerp(hi, 0.5)
    }

    /// Marks every cell touched by the rectangle with `cell`.
    pub fn fill_rect(&mut self, rect: &OrientedRect, cell: Cell) {
        if let Some((ix0, iy0, ix1, iy1)) = self.cell_range(&rect.aabb()) {
            for iy in iy0..=iy1 {
                for ix in ix0..=ix1 {
                    let (lo, hi) = self.cell_bounds(ix, iy);
                    // conservative rasterization, but a shared edge alone does not mark a cell
                    let shrink = Vec2::new(1e-9, 1e-9);
                    if rect.intersects_box(lo + shrink, hi - shrink) {
                        self.cells[iy * self.width + ix] = cell;
                    }
                }
            }
        }
        self.rebuild_tables();
    }

    /// Clamped inclusive cell range covering a box; `None` if disjoint.
    fn cell_range(&self, bb: &Aabb) -> Option<(usize, usize, usize, usize)> {
        if !bb.overlaps(&self.extent()) {
            return None;
        }
        let to_ix = |x: f64, n: usize| -> usize {
            (((x) / self.resolution).floor().max(0.0) as usize).min(n - 1)
        };
        Some((
            to_ix(bb.min.x - self.origin.x, self.width),
            to_ix(bb.min.y - self.origin.y, self.height),
            to_ix(bb.max.x - self.origin.x, self.width),
            to_ix(bb.max.y - self.origin.y, self.height),
        ))
    }

    fn rebuild_tables(&mut self) {
        let (w, h) = (self.width, self.height);
        let mut occ = vec![0u32; (w + 1) * (h + 1)];
        let mut blk = vec![0u32; (w + 1) * (h + 1)];
        for iy in 0..h {
            for ix in 0..w {
                let c = self.cells[iy * w + ix];
                let o = u32::from(c == Cell::Occupied);
                let b = u32::from(c != Cell::Free);
                let i = (iy + 1) * (w + 1) + ix + 1;
                occ[i] = o + occ[i - 1] + occ[i - (w + 1)] - occ[i - (w + 1) - 1];
                blk[i] = b + blk[i - 1] + blk[i - (w + 1)] - blk[i - (w + 1) - 1];
            }
        }
        self.occupied_sat = occ;
        self.blocked_sat = blk;
    }

    fn count(table: &[u32], w: usize, ix0: usize, iy0: usize, ix1: usize, iy1: usize) -> u32 {
        let stride = w + 1;
        let at = |x: usize, y: usize| table[y * stride + x];
        at(ix1 + 1, iy1 + 1) + at(ix0, iy0) - at(ix0, iy1 + 1) - at(ix1 + 1, iy0)
    }

    fn is_blocking(&self, cell: Cell, policy: &CollisionPolicy) -> bool {
        match cell {
            Cell::Free => false,
            Cell::Occupied => true,
            Cell::Unknown => policy.unknown_is_occupied,
        }
    }

    fn rect_collides(&self, rect: &OrientedRect, policy: &CollisionPolicy) -> bool {
        let bb = rect.aabb();
        let extent = self.extent();
        let inside = bb.min.x >= extent.min.x
            && bb.min.y >= extent.min.y
            && bb.max.x <= extent.max.x
            && bb.max.y <= extent.max.y;
        if !inside && policy.outside_is_occupied {
            return true;
        }
        let Some((ix0, iy0, ix1, iy1)) = self.cell_range(&bb) else {
            return false;
        };
        let table = if policy.unknown_is_occupied {
            &self.blocked_sat
        } else {
            &self.occupied_sat
        };
        if Self::count(table, self.width, ix0, iy0, ix1, iy1) == 0 {
            return false;
        }
        for iy in iy0..=iy1 {
            for ix in ix0..=ix1 {
                if self.is_blocking(self.cell(ix, iy), policy) {
                    let (lo, hi) = self.cell_bounds(ix, iy);
                    if rect.intersects_box(lo, hi) {
                        return true;
                    }
                }
            }
        }
        false
    }
}

/// Whether the footprint at `pose` touches any blocking cell, under the
/// default policy (unknown cells and space outside the grid block).
pub fn footprint_collides(grid: &OccupancyGrid, pose: &Pose, footprint: &Footprint) -> bool {
    footprint_collides_with(grid, pose, footprint, &CollisionPolicy::default())
}

pub fn footprint_collides_with(
    grid: &OccupancyGrid,
    pose: &Pose,
    footprint: &Footprint,
    policy: &CollisionPolicy,
) -> bool {
    grid.rect_collides(&OrientedRect::at_pose(pose, footprint), policy)
}
