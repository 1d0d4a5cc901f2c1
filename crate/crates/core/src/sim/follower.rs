//! Kinematic path follower: curvature feedforward from the reference plus a
//! pure-pursuit correction toward a point one lookahead ahead.
//!
//! Reverse sections are tracked in a flipped frame (heading + π), so the
//! control law only ever sees forward motion.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{angle_diff, normalize_angle, Pose, Vec2};
use crate::motion::{advance, Gear, GeometricPath, ReedsSheppPath};

/// Spacing of the dense reference samples.
const REF_STEP: f64 = 0.05;
/// Remaining section length below which a section counts as done.
const END_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FollowerParams {
    pub lookahead: f64,
    /// Largest curvature the vehicle can command, 1/m.
    pub max_curvature: f64,
    /// Reverse speed as a fraction of the commanded speed.
    pub reverse_speed_factor: f64,
    /// Cross-track error that aborts tracking.
    pub divergence_limit: f64,
}

impl Default for FollowerParams {
    fn default() -> Self {
        Self {
            lookahead: 3.0,
            max_curvature: 0.25,
            reverse_speed_factor: 0.5,
            divergence_limit: 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
pub enum TrackError {
    #[error("cross-track error {cross_track:.3} m exceeds the divergence limit")]
    Diverged { cross_track: f64 },
    #[error("tracking did not finish within {ticks} ticks")]
    Stalled { ticks: u64 },
    #[error("dt and speed must be positive")]
    InvalidStep,
}

#[derive(Debug, Clone, Copy)]
struct RefSample {
    /// Pose in the travel frame: heading points along the motion.
    pose: Pose,
    station: f64,
    curvature: f64,
}

#[derive(Debug, Clone)]
struct Section {
    gear: Gear,
    samples: Vec<RefSample>,
}

impl Section {
    fn length(&self) -> f64 {
        self.samples.last().map_or(0.0, |s| s.station)
    }

    fn interpolate(&self, station: f64) -> RefSample {
        let len = self.length();
        if station >= len {
            let last = *self.samples.last().unwrap();
            let d = station - len;
            let p = last.pose.position() + last.pose.direction() * d;
            return RefSample {
                pose: Pose::new(p.x, p.y, last.pose.heading),
                station,
                curvature: 0.0,
            };
        }
        let s = station.max(0.0);
        let i = self
            .samples
            .partition_point(|r| r.station <= s)
            .clamp(1, self.samples.len() - 1);
        let (a, b) = (self.samples[i - 1], self.samples[i]);
        let t = if b.station > a.station {
            (s - a.station) / (b.station - a.station)
        } else {
            0.0
        };
        let p = a.pose.position().lerp(b.pose.position(), t);
        RefSample {
            pose: Pose::new(
                p.x,
                p.y,
                a.pose.heading + angle_diff(b.pose.heading, a.pose.heading) * t,
            ),
            station: s,
            curvature: a.curvature,
        }
    }

    /// Closest station to `p` among samples in `[lo, hi]`, refined on the
    /// neighbouring chords.
    fn project(&self, p: Vec2, lo: f64, hi: f64) -> f64 {
        let start = self
            .samples
            .partition_point(|r| r.station < lo)
            .saturating_sub(1);
        let end = self
            .samples
            .partition_point(|r| r.station <= hi)
            .max(start + 1);
        let mut best = (f64::INFINITY, 0.0);
        for w in self.samples[start..end.min(self.samples.len())].windows(2) {
            let (a, b) = (w[0].pose.position(), w[1].pose.position());
            let ab = b - a;
            let l2 = ab.dot(ab);
            let t = if l2 > 0.0 {
                ((p - a).dot(ab) / l2).clamp(0.0, 1.0)
            } else {
                0.0
            };
            let d = p.distance(a + ab * t);
            if d < best.0 {
                best = (d, w[0].station + t * (w[1].station - w[0].station));
            }
        }
        best.1
    }
}

/// A reference split into constant-gear sections.
#[derive(Debug, Clone)]
pub struct Reference {
    sections: Vec<Section>,
}

fn travel_pose(pose: Pose, gear: Gear) -> Pose {
    match gear {
        Gear::Forward => pose,
        Gear::Reverse => Pose::new(pose.x, pose.y, pose.heading + PI),
    }
}

impl Reference {
    pub fn from_reeds_shepp(path: &ReedsSheppPath) -> Self {
        let mut sections: Vec<Section> = Vec::new();
        let mut pose = path.start();
        for seg in path.segments() {
            if seg.length <= 0.0 {
                continue;
            }
            let curvature = seg.gear.sign() * seg.steer.curvature() / path.radius();
            if sections.last().map_or(true, |s| s.gear != seg.gear) {
                sections.push(Section {
                    gear: seg.gear,
                    samples: vec![RefSample {
                        pose: travel_pose(pose, seg.gear),
                        station: 0.0,
                        curvature,
                    }],
                });
            }
            let section = sections.last_mut().unwrap();
            // the sample at a primitive boundary carries the curvature that follows it
            section.samples.last_mut().unwrap().curvature = curvature;
            let base = section.length();
            let n = (seg.length / REF_STEP).ceil().max(1.0) as usize;
            for i in 1..=n {
                let v = seg.length * i as f64 / n as f64;
                let p = advance(&pose, seg.steer, seg.gear.sign() * v, path.radius());
                section.samples.push(RefSample {
                    pose: travel_pose(p, seg.gear),
                    station: base + v,
                    curvature,
                });
            }
            pose = advance(
                &pose,
                seg.steer,
                seg.gear.sign() * seg.length,
                path.radius(),
            );
        }
        Self { sections }
    }

    pub fn from_path(path: &GeometricPath) -> Self {
        Self::from_reeds_shepp(&path.reference())
    }

    /// A forward reference along a polyline; curvature comes from heading
    /// change over a 1 m window.
    pub fn from_polyline(points: &[Vec2]) -> Self {
        let mut resampled: Vec<(Vec2, f64)> = Vec::new();
        for w in points.windows(2) {
            let len = w[0].distance(w[1]);
            if len <= 0.0 {
                continue;
            }
            let n = (len / REF_STEP).ceil() as usize;
            let start = if resampled.is_empty() { 0 } else { 1 };
            let base = resampled.last().map_or(0.0, |r| r.1);
            for i in start..=n {
                let t = i as f64 / n as f64;
                resampled.push((w[0].lerp(w[1], t), base + len * t));
            }
        }
        if resampled.len() < 2 {
            return Self {
                sections: Vec::new(),
            };
        }
        let heading = |i: usize| {
            let (a, b) = if i + 1 < resampled.len() {
                (resampled[i].0, resampled[i + 1].0)
            } else {
                (resampled[i - 1].0, resampled[i].0)
            };
            (b - a).angle()
        };
        let half = (0.5 / REF_STEP).round() as usize;
        let n = resampled.len();
        let samples = (0..n)
            .map(|i| {
                let (lo, hi) = (i.saturating_sub(half), (i + half).min(n - 1));
                let ds = resampled[hi].1 - resampled[lo].1;
                let curvature = if ds > 0.0 {
                    angle_diff(heading(hi), heading(lo)) / ds
                } else {
                    0.0
                };
                let (p, station) = resampled[i];
                RefSample {
                    pose: Pose::new(p.x, p.y, heading(i)),
                    station,
                    curvature,
                }
            })
            .collect();
        Self {
            sections: vec![Section {
                gear: Gear::Forward,
                samples,
            }],
        }
    }

    pub fn length(&self) -> f64 {
        self.sections.iter().map(Section::length).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.length() <= 0.0
    }
}

/// Result of one control tick.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackStep {
    pub pose: Pose,
    pub gear: Gear,
    /// Unsigned distance to the reference before the move.
    pub cross_track: f64,
    /// Distance travelled during the tick.
    pub distance: f64,
    pub arrived: bool,
}

#[derive(Debug, Clone)]
pub struct PathTracker {
    reference: Reference,
    params: FollowerParams,
    section: usize,
    station: f64,
    localized: bool,
    done_length: f64,
}

fn arc(pose: Pose, curvature: f64, ds: f64) -> Pose {
    if curvature.abs() < 1e-9 {
        let d = pose.direction() * ds;
        return Pose::new(pose.x + d.x, pose.y + d.y, pose.heading);
    }
    let h1 = pose.heading + curvature * ds;
    Pose::new(
        pose.x + (h1.sin() - pose.heading.sin()) / curvature,
        pose.y - (h1.cos() - pose.heading.cos()) / curvature,
        h1,
    )
}

/// Pure-pursuit curvature from `pose` toward `target`.
fn pursuit(pose: Pose, target: Vec2) -> f64 {
    let d = target - pose.position();
    let l2 = d.dot(d);
    if l2 < 1e-12 {
        return 0.0;
    }
    let lateral = pose.direction().cross(d);
    2.0 * lateral / l2
}

impl PathTracker {
    pub fn new(reference: Reference, params: FollowerParams) -> Self {
        let mut t = Self {
            reference,
            params,
            section: 0,
            station: 0.0,
            localized: false,
            done_length: 0.0,
        };
        t.skip_finished_sections();
        t
    }

    fn skip_finished_sections(&mut self) {
        while let Some(sec) = self.reference.sections.get(self.section) {
            if sec.length() - self.station > END_TOLERANCE {
                break;
            }
            self.done_length += sec.length();
            self.section += 1;
            self.station = 0.0;
        }
    }

    pub fn is_done(&self) -> bool {
        self.section >= self.reference.sections.len()
    }

    /// Arc length covered so far along the reference.
    pub fn progress(&self) -> f64 {
        (self.done_length + self.station).min(self.reference.length())
    }

    pub fn length(&self) -> f64 {
        self.reference.length()
    }

    /// Gear of the active section.
    pub fn gear(&self) -> Gear {
        self.reference
            .sections
            .get(self.section)
            .map_or(Gear::Forward, |s| s.gear)
    }

    /// Advances the vehicle by one tick at `speed` (m/s, forward magnitude).
    pub fn step(&mut self, pose: Pose, speed: f64, dt: f64) -> Result<TrackStep, TrackError> {
        if !(speed > 0.0 && dt > 0.0) {
            return Err(TrackError::InvalidStep);
        }
        let Some(sec) = self.reference.sections.get(self.section) else {
            return Ok(TrackStep {
                pose,
                gear: Gear::Forward,
                cross_track: 0.0,
                distance: 0.0,
                arrived: true,
            });
        };
        let vpose = travel_pose(pose, sec.gear);
        let p = vpose.position();
        let s = if self.localized {
            sec.project(p, self.station - 1.0, self.station + 2.0 + speed * dt)
                .max(self.station)
        } else {
            self.localized = true;
            sec.project(p, f64::NEG_INFINITY, f64::INFINITY)
        };
        let here = sec.interpolate(s);
        let cross_track = here.pose.position().distance(p);
        if cross_track > self.params.divergence_limit {
            return Err(TrackError::Diverged { cross_track });
        }

        let target = sec.interpolate(s + self.params.lookahead).pose.position();
        let correction = pursuit(vpose, target) - pursuit(here.pose, target);
        let curvature = (here.curvature + correction)
            .clamp(-self.params.max_curvature, self.params.max_curvature);

        let v = match sec.gear {
            Gear::Forward => speed,
            Gear::Reverse => speed * self.params.reverse_speed_factor,
        };
        let ds = (v * dt).min((sec.length() - s).max(0.0));
        let moved = arc(vpose, curvature, ds);
        let gear = sec.gear;
        let new_pose = match gear {
            Gear::Forward => moved,
            Gear::Reverse => Pose::new(moved.x, moved.y, moved.heading - PI),
        };
        self.station = s + ds;
        let before = self.section;
        self.skip_finished_sections();
        if self.section != before {
            self.localized = false;
        }
        Ok(TrackStep {
            pose: Pose::new(new_pose.x, new_pose.y, normalize_angle(new_pose.heading)),
            gear,
            cross_track,
            distance: ds,
            arrived: self.is_done(),
        })
    }
}

/// Simulation clock plus vehicle pose and progress along the active path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimState {
    pub time: f64,
    pub pose: Pose,
    pub speed: f64,
    pub path_progress: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrackOutcome {
    pub state: SimState,
    pub ticks: u64,
    pub max_cross_track: f64,
    pub distance: f64,
    /// Pose after every tick.
    pub trace: Vec<Pose>,
}

/// Follows `path` from `sim.pose` to its end.
pub fn track_path(
    sim: &SimState,
    path: &GeometricPath,
    dt: f64,
    speed: f64,
    params: &FollowerParams,
) -> Result<TrackOutcome, TrackError> {
    track_reference(sim, Reference::from_path(path), dt, speed, params)
}

pub fn track_reference(
    sim: &SimState,
    reference: Reference,
    dt: f64,
    speed: f64,
    params: &FollowerParams,
) -> Result<TrackOutcome, TrackError> {
    if !(speed > 0.0 && dt > 0.0) {
        return Err(TrackError::InvalidStep);
    }
    let slowest = speed * params.reverse_speed_factor.min(1.0) * dt;
    let budget = (reference.length() / slowest).ceil() as u64 * 2 + 100;
    let mut tracker = PathTracker::new(reference, *params);
    let mut state = SimState {
        path_progress: Some(0.0),
        ..sim.clone()
    };
    let mut out = TrackOutcome {
        state: state.clone(),
        ticks: 0,
        max_cross_track: 0.0,
        distance: 0.0,
        trace: Vec::new(),
    };
    while !tracker.is_done() {
        if out.ticks >= budget {
            return Err(TrackError::Stalled { ticks: out.ticks });
        }
        let step = tracker.step(state.pose, speed, dt)?;
        out.ticks += 1;
        out.max_cross_track = out.max_cross_track.max(step.cross_track);
        out.distance += step.distance;
        out.trace.push(step.pose);
        state.time = sim.time + out.ticks as f64 * dt;
        state.pose = step.pose;
        state.speed = speed;
        state.path_progress = Some(tracker.progress());
    }
    state.speed = 0.0;
    out.state = state;
    Ok(out)
}
