//! Shortest paths for a car that can drive forward and backward with a
//! bounded turning radius.
//!
//! The closed-form word family follows Reeds and Shepp (1990) as organised in
//! OMPL: eighteen base words, each tried with time-flip, reflection and, for
//! the asymmetric ones, backwards evaluation. All internal lengths are in
//! units of the turning radius.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::geometry::{normalize_angle, Pose};

const ZERO: f64 = 10.0 * f64::EPSILON;
const HALF_PI: f64 = 0.5 * PI;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Steer {
    Left,
    Straight,
    Right,
}

impl Steer {
    /// Signed curvature at unit turning radius.
    pub fn curvature(self) -> f64 {
        match self {
            Steer::Left => 1.0,
            Steer::Straight => 0.0,
            Steer::Right => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Gear {
    Forward,
    Reverse,
}

impl Gear {
    pub fn sign(self) -> f64 {
        match self {
            Gear::Forward => 1.0,
            Gear::Reverse => -1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PathSegment {
    pub steer: Steer,
    pub gear: Gear,
    /// Arc length in meters, never negative.
    pub length: f64,
}

/// A pose along a path together with the gear used to arrive there.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PathSample {
    pub pose: Pose,
    pub gear: Gear,
    /// Arc length from the path start.
    pub station: f64,
}

/// Moves `pose` along one primitive by signed length `v` (negative reverses).
pub fn advance(pose: &Pose, steer: Steer, v: f64, radius: f64) -> Pose {
    let phi = pose.heading;
    match steer {
        Steer::Straight => Pose::new(pose.x + v * phi.cos(), pose.y + v * phi.sin(), phi),
        Steer::Left => {
            let end = phi + v / radius;
            Pose::new(
                pose.x + radius * (end.sin() - phi.sin()),
                pose.y + radius * (phi.cos() - end.cos()),
                end,
            )
        }
        Steer::Right => {
            let end = phi - v / radius;
            Pose::new(
                pose.x + radius * (phi.sin() - end.sin()),
                pose.y + radius * (end.cos() - phi.cos()),
                end,
            )
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ReedsSheppPath {
    start: Pose,
    radius: f64,
    segments: Vec<PathSegment>,
}

impl ReedsSheppPath {
    /// Builds a path from explicit segments.
    pub fn from_segments(start: Pose, radius: f64, segments: Vec<PathSegment>) -> Self {
        Self {
            start,
            radius,
            segments,
        }
    }

    pub fn start(&self) -> Pose {
        self.start
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn segments(&self) -> &[PathSegment] {
        &self.segments
    }

    pub fn length(&self) -> f64 {
        self.segments.iter().map(|s| s.length).sum()
    }

    /// Number of gear changes.
    pub fn cusps(&self) -> usize {
        self.segments
            .windows(2)
            .filter(|w| w[0].gear != w[1].gear)
            .count()
    }

    /// Length driven in reverse.
    pub fn reverse_length(&self) -> f64 {
        self.segments
            .iter()
            .filter(|s| s.gear == Gear::Reverse)
            .map(|s| s.length)
            .sum()
    }

    /// Compact word such as `L+S+R-`.
    pub fn word(&self) -> String {
        self.segments
            .iter()
            .map(|s| {
                let c = match s.steer {
                    Steer::Left => 'L',
                    Steer::Straight => 'S',
                    Steer::Right => 'R',
                };
                let g = if s.gear == Gear::Forward { '+' } else { '-' };
                format!("{c}{g}")
            })
            .collect()
    }

    pub fn end_pose(&self) -> Pose {
        self.segments.iter().fold(self.start, |p, s| {
            advance(&p, s.steer, s.gear.sign() * s.length, self.radius)
        })
    }

    /// Pose and gear at arc length `station`, clamped to the path.
    pub fn pose_at(&self, station: f64) -> (Pose, Gear) {
        let mut remaining = station.max(0.0);
        let mut pose = self.start;
        let mut gear = self.segments.first().map_or(Gear::Forward, |s| s.gear);
        for seg in &self.segments {
            gear = seg.gear;
            let v = remaining.min(seg.length);
            pose = advance(&pose, seg.steer, seg.gear.sign() * v, self.radius);
            remaining -= v;
            if remaining <= 0.0 {
                break;
            }
        }
        (pose, gear)
    }

    /// Samples spaced at most `step` apart, including both ends and every
    /// segment boundary.
    pub fn sample(&self, step: f64) -> Vec<PathSample> {
        assert!(step > 0.0, "sample step must be positive");
        let first_gear = self.segments.first().map_or(Gear::Forward, |s| s.gear);
        let mut out = vec![PathSample {
            pose: self.start,
            gear: first_gear,
            station: 0.0,
        }];
        let mut pose = self.start;
        let mut station = 0.0;
        for seg in &self.segments {
            let n = (seg.length / step).ceil().max(1.0) as usize;
            for i in 1..=n {
                let v = seg.length * i as f64 / n as f64;
                out.push(PathSample {
                    pose: advance(&pose, seg.steer, seg.gear.sign() * v, self.radius),
                    gear: seg.gear,
                    station: station + v,
                });
            }
            pose = advance(&pose, seg.steer, seg.gear.sign() * seg.length, self.radius);
            station += seg.length;
        }
        out
    }

    /// The prefix of this path no longer than `max_length`.
    pub fn truncated(&self, max_length: f64) -> Self {
        let mut remaining = max_length.max(0.0);
        let mut segments = Vec::new();
        for seg in &self.segments {
            if remaining <= 0.0 {
                break;
            }
            let length = seg.length.min(remaining);
            segments.push(PathSegment { length, ..*seg });
            remaining -= length;
        }
        Self {
            start: self.start,
            radius: self.radius,
            segments,
        }
    }
}

/// Shortest Reeds-Shepp path from `from` to `to` at turning radius `radius`.
pub fn reeds_shepp(from: Pose, to: Pose, radius: f64) -> ReedsSheppPath {
    assert!(radius > 0.0, "turning radius must be positive");
    let local = from.relative(&to);
    if let Some(d) = collinear(&local) {
        let segments = if d == 0.0 {
            Vec::new()
        } else {
            vec![PathSegment {
                steer: S,
                gear: if d < 0.0 {
                    Gear::Reverse
                } else {
                    Gear::Forward
                },
                length: d.abs(),
            }]
        };
        return ReedsSheppPath {
            start: from,
            radius,
            segments,
        };
    }
    let word = solve(local.x / radius, local.y / radius, local.heading);
    let segments = word
        .steer
        .iter()
        .zip(word.lengths)
        .filter(|(_, v)| v.abs() >= 1e-10)
        .map(|(&steer, v)| PathSegment {
            steer,
            gear: if v < 0.0 {
                Gear::Reverse
            } else {
                Gear::Forward
            },
            length: v.abs() * radius,
        })
        .collect();
    ReedsSheppPath {
        start: from,
        radius,
        segments,
    }
}

/// Length of the shortest path; cheaper than building it.
pub fn reeds_shepp_length(from: Pose, to: Pose, radius: f64) -> f64 {
    let local = from.relative(&to);
    match collinear(&local) {
        Some(d) => d.abs(),
        None => solve(local.x / radius, local.y / radius, local.heading).total * radius,
    }
}

/// Signed distance to a goal straight ahead or behind with the same heading.
/// Answered without rescaling so the length is exact.
fn collinear(local: &Pose) -> Option<f64> {
    (local.y == 0.0 && normalize_angle(local.heading) == 0.0).then_some(local.x)
}

use Steer::{Left as L, Right as R, Straight as S};

const WORDS: [&[Steer]; 18] = [
    &[L, R, L],
    &[R, L, R],
    &[L, R, L, R],
    &[R, L, R, L],
    &[L, R, S, L],
    &[R, L, S, R],
    &[L, S, R, L],
    &[R, S, L, R],
    &[L, R, S, R],
    &[R, L, S, L],
    &[R, S, R, L],
    &[L, S, L, R],
    &[L, S, R],
    &[R, S, L],
    &[L, S, L],
    &[R, S, R],
    &[L, R, S, L, R],
    &[R, L, S, R, L],
];

struct Word {
    steer: &'static [Steer],
    lengths: [f64; 5],
    total: f64,
}

impl Word {
    fn none() -> Self {
        Self {
            steer: WORDS[0],
            lengths: [0.0; 5],
            total: f64::INFINITY,
        }
    }

    fn offer(&mut self, kind: usize, lengths: &[f64]) {
        let total: f64 = lengths.iter().map(|v| v.abs()).sum();
        if total < self.total {
            let mut l = [0.0; 5];
            l[..lengths.len()].copy_from_slice(lengths);
            *self = Self {
                steer: WORDS[kind],
                lengths: l,
                total,
            };
        }
    }
}

fn mod2pi(x: f64) -> f64 {
    let v = x % (2.0 * PI);
    if v < -PI {
        v + 2.0 * PI
    } else if v > PI {
        v - 2.0 * PI
    } else {
        v
    }
}

fn polar(x: f64, y: f64) -> (f64, f64) {
    (x.hypot(y), y.atan2(x))
}

fn tau_omega(u: f64, v: f64, xi: f64, eta: f64, phi: f64) -> (f64, f64) {
    let delta = mod2pi(u - v);
    let a = u.sin() - delta.sin();
    let b = u.cos() - delta.cos() - 1.0;
    let t1 = (eta * a - xi * b).atan2(xi * a + eta * b);
    let t2 = 2.0 * (delta.cos() - v.cos() - u.cos()) + 3.0;
    let tau = if t2 < 0.0 {
        mod2pi(t1 + PI)
    } else {
        mod2pi(t1)
    };
    (tau, mod2pi(tau - u + v - phi))
}

/// Goal in the unit-radius start frame, with the sine and cosine of its heading.
#[derive(Clone, Copy)]
struct Local {
    x: f64,
    y: f64,
    phi: f64,
    sin: f64,
    cos: f64,
}

type Formula = fn(Local) -> Option<(f64, f64, f64)>;

fn lp_sp_lp(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let (u, t) = polar(x - g.sin, y - 1.0 + g.cos);
    if t >= -ZERO {
        let v = mod2pi(phi - t);
        if v >= -ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_sp_rp(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let (u1, t1) = polar(x + g.sin, y - 1.0 - g.cos);
    let u1 = u1 * u1;
    if u1 >= 4.0 {
        let u = (u1 - 4.0).sqrt();
        let theta = 2.0f64.atan2(u);
        let t = mod2pi(t1 + theta);
        let v = mod2pi(t - phi);
        if t >= -ZERO && v >= -ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_l(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let (u1, theta) = polar(x - g.sin, y - 1.0 + g.cos);
    if u1 <= 4.0 {
        let u = -2.0 * (0.25 * u1).asin();
        let t = mod2pi(theta + 0.5 * u + PI);
        let v = mod2pi(phi - t + u);
        if t >= -ZERO && u <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rup_lum_rm(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let xi = x + g.sin;
    let eta = y - 1.0 - g.cos;
    let rho = 0.25 * (2.0 + xi.hypot(eta));
    if rho <= 1.0 {
        let u = rho.acos();
        let (t, v) = tau_omega(u, -u, xi, eta, phi);
        if t >= -ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rum_lum_rp(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let xi = x + g.sin;
    let eta = y - 1.0 - g.cos;
    let rho = (20.0 - xi * xi - eta * eta) / 16.0;
    if (0.0..=1.0).contains(&rho) {
        let u = -rho.acos();
        if u >= -0.5 * PI {
            let (t, v) = tau_omega(u, u, xi, eta, phi);
            if t >= -ZERO && v >= -ZERO {
                return Some((t, u, v));
            }
        }
    }
    None
}

fn lp_rm_sm_lm(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let (rho, theta) = polar(x - g.sin, y - 1.0 + g.cos);
    if rho >= 2.0 {
        let r = (rho * rho - 4.0).sqrt();
        let u = 2.0 - r;
        let t = mod2pi(theta + r.atan2(-2.0));
        let v = mod2pi(phi - 0.5 * PI - t);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_sm_rm(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let xi = x + g.sin;
    let eta = y - 1.0 - g.cos;
    let (rho, theta) = polar(-eta, xi);
    if rho >= 2.0 {
        let t = theta;
        let u = 2.0 - rho;
        let v = mod2pi(t + 0.5 * PI - phi);
        if t >= -ZERO && u <= ZERO && v <= ZERO {
            return Some((t, u, v));
        }
    }
    None
}

fn lp_rm_s_lm_rp(g: Local) -> Option<(f64, f64, f64)> {
    let Local { x, y, phi, .. } = g;
    let xi = x + g.sin;
    let eta = y - 1.0 - g.cos;
    let (rho, _) = polar(xi, eta);
    if rho >= 2.0 {
        let u = 4.0 - (rho * rho - 4.0).sqrt();
        if u <= ZERO {
            let t = mod2pi(((4.0 - u) * xi - 2.0 * eta).atan2(-2.0 * xi + (u - 4.0) * eta));
            let v = mod2pi(t - phi);
            if t >= -ZERO && v >= -ZERO {
                return Some((t, u, v));
            }
        }
    }
    None
}

/// Evaluates `f` under the four symmetries: identity, time-flip, reflection
/// and both. `build` maps `(t, u, v)` to segment lengths; reflection swaps
/// `kind` for its mirrored word `kind + 1`.
fn with_symmetries<const N: usize>(
    best: &mut Word,
    f: Formula,
    kind: usize,
    g: Local,
    build: impl Fn(f64, f64, f64) -> [f64; N],
) {
    for (sx, sy, sphi, flip, k) in [
        (1.0, 1.0, 1.0, 1.0, kind),
        (-1.0, 1.0, -1.0, -1.0, kind),
        (1.0, -1.0, -1.0, 1.0, kind + 1),
        (-1.0, -1.0, 1.0, -1.0, kind + 1),
    ] {
        // sine is odd and cosine even, so the flipped heading needs no new trig
        let h = Local {
            x: sx * g.x,
            y: sy * g.y,
            phi: sphi * g.phi,
            sin: sphi * g.sin,
            cos: g.cos,
        };
        if let Some((t, u, v)) = f(h) {
            let mut lengths = build(t, u, v);
            lengths.iter_mut().for_each(|l| *l *= flip);
            best.offer(k, &lengths);
        }
    }
}

fn solve(x: f64, y: f64, phi: f64) -> Word {
    let mut best = Word::none();
    let (sin, cos) = phi.sin_cos();
    let fwd = Local {
        x,
        y,
        phi,
        sin,
        cos,
    };
    let back = Local {
        x: x * cos + y * sin,
        y: x * sin - y * cos,
        ..fwd
    };

    // CSC
    with_symmetries(&mut best, lp_sp_lp, 14, fwd, |t, u, v| [t, u, v]);
    with_symmetries(&mut best, lp_sp_rp, 12, fwd, |t, u, v| [t, u, v]);
    // CCC
    with_symmetries(&mut best, lp_rm_l, 0, fwd, |t, u, v| [t, u, v]);
    with_symmetries(&mut best, lp_rm_l, 0, back, |t, u, v| [v, u, t]);
    // CCCC
    with_symmetries(&mut best, lp_rup_lum_rm, 2, fwd, |t, u, v| [t, u, -u, v]);
    with_symmetries(&mut best, lp_rum_lum_rp, 2, fwd, |t, u, v| [t, u, u, v]);
    // CCSC and CSCC
    with_symmetries(&mut best, lp_rm_sm_lm, 4, fwd, |t, u, v| {
        [t, -HALF_PI, u, v]
    });
    with_symmetries(&mut best, lp_rm_sm_rm, 8, fwd, |t, u, v| {
        [t, -HALF_PI, u, v]
    });
    with_symmetries(&mut best, lp_rm_sm_lm, 6, back, |t, u, v| {
        [v, u, -HALF_PI, t]
    });
    with_symmetries(&mut best, lp_rm_sm_rm, 10, back, |t, u, v| {
        [v, u, -HALF_PI, t]
    });
    // CCSCC
    with_symmetries(&mut best, lp_rm_s_lm_rp, 16, fwd, |t, u, v| {
        [t, -HALF_PI, u, -HALF_PI, v]
    });
    best
}
