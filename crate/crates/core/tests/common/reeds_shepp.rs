//! Numerical Reeds-Shepp oracle: solves the endpoint equations of every
//! candidate word with damped Newton iterations from many starts and keeps
//! the shortest root. It knows nothing about the closed-form formulas, only
//! the word shapes.

use std::f64::consts::{FRAC_PI_2, PI};

use dcpp_core::geometry::{angle_diff, Pose};
use dcpp_core::motion::{advance, Steer};
use rand::Rng;
use rand_chacha::ChaCha8Rng;

use Steer::{Left as L, Right as R, Straight as S};

/// Segment length as `coef * param[index] + constant`.
#[derive(Clone, Copy)]
enum Len {
    Param(usize, f64),
    Fixed(f64),
}

struct System {
    steer: Vec<Steer>,
    lengths: Vec<Len>,
    /// Whether each of the three parameters is an arc (else a straight).
    arc: [bool; 3],
}

fn systems() -> Vec<System> {
    use Len::{Fixed, Param};
    let mut out = Vec::new();
    let p = |i| Param(i, 1.0);
    for steer in [[L, S, L], [L, S, R], [R, S, L], [R, S, R]] {
        out.push(System {
            steer: steer.to_vec(),
            lengths: vec![p(0), p(1), p(2)],
            arc: [true, false, true],
        });
    }
    for steer in [[L, R, L], [R, L, R]] {
        out.push(System {
            steer: steer.to_vec(),
            lengths: vec![p(0), p(1), p(2)],
            arc: [true, true, true],
        });
    }
    for steer in [[L, R, L, R], [R, L, R, L]] {
        for sign in [1.0, -1.0] {
            out.push(System {
                steer: steer.to_vec(),
                lengths: vec![p(0), p(1), Param(1, sign), p(2)],
                arc: [true, true, true],
            });
        }
    }
    for steer in [[L, R, S, L], [L, R, S, R], [R, L, S, R], [R, L, S, L]] {
        for q in [FRAC_PI_2, -FRAC_PI_2] {
            out.push(System {
                steer: steer.to_vec(),
                lengths: vec![p(0), Fixed(q), p(1), p(2)],
                arc: [true, false, true],
            });
        }
    }
    for steer in [[L, S, R, L], [L, S, L, R], [R, S, L, R], [R, S, R, L]] {
        for q in [FRAC_PI_2, -FRAC_PI_2] {
            out.push(System {
                steer: steer.to_vec(),
                lengths: vec![p(0), p(1), Fixed(q), p(2)],
                arc: [true, false, true],
            });
        }
    }
    for steer in [[L, R, S, L, R], [R, L, S, R, L]] {
        for q1 in [FRAC_PI_2, -FRAC_PI_2] {
            for q2 in [FRAC_PI_2, -FRAC_PI_2] {
                out.push(System {
                    steer: steer.to_vec(),
                    lengths: vec![p(0), Fixed(q1), p(1), Fixed(q2), p(2)],
                    arc: [true, false, true],
                });
            }
        }
    }
    out
}

impl System {
    fn segment_lengths(&self, params: &[f64; 3]) -> Vec<f64> {
        self.lengths
            .iter()
            .map(|l| match *l {
                Len::Param(i, c) => c * params[i],
                Len::Fixed(v) => v,
            })
            .collect()
    }

    /// Residual against `goal` (unit radius, start at the origin) and its Jacobian.
    fn evaluate(&self, params: &[f64; 3], goal: &Pose) -> ([f64; 3], [[f64; 3]; 3]) {
        let lengths = self.segment_lengths(params);
        let mut ends = Vec::with_capacity(lengths.len());
        let mut pose = Pose::new(0.0, 0.0, 0.0);
        for (steer, v) in self.steer.iter().zip(&lengths) {
            pose = advance(&pose, *steer, *v, 1.0);
            ends.push(pose);
        }
        let residual = [
            pose.x - goal.x,
            pose.y - goal.y,
            angle_diff(pose.heading, goal.heading),
        ];
        let mut jac = [[0.0; 3]; 3];
        for (i, (steer, end)) in self.steer.iter().zip(&ends).enumerate() {
            let Len::Param(j, c) = self.lengths[i] else {
                continue;
            };
            let k = steer.curvature();
            let d = [
                end.heading.cos() - k * (pose.y - end.y),
                end.heading.sin() + k * (pose.x - end.x),
                k,
            ];
            for row in 0..3 {
                jac[row][j] += c * d[row];
            }
        }
        (residual, jac)
    }
}

fn solve3(a: [[f64; 3]; 3], b: [f64; 3]) -> Option<[f64; 3]> {
    let det = |m: [[f64; 3]; 3]| {
        m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
            - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
            + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
    };
    let d = det(a);
    if d.abs() < 1e-14 {
        return None;
    }
    let mut x = [0.0; 3];
    for (col, xi) in x.iter_mut().enumerate() {
        let mut m = a;
        for row in 0..3 {
            m[row][col] = b[row];
        }
        *xi = det(m) / d;
    }
    Some(x)
}

fn norm(r: &[f64; 3]) -> f64 {
    r.iter().map(|v| v * v).sum::<f64>().sqrt()
}

fn newton(system: &System, goal: &Pose, mut params: [f64; 3]) -> Option<f64> {
    let (mut r, mut j) = system.evaluate(&params, goal);
    for _ in 0..60 {
        if norm(&r) < 1e-12 {
            let len = system
                .segment_lengths(&params)
                .iter()
                .map(|v| v.abs())
                .sum();
            return Some(len);
        }
        let step = solve3(j, [-r[0], -r[1], -r[2]])?;
        let mut alpha = 1.0;
        loop {
            let trial = [
                params[0] + alpha * step[0],
                params[1] + alpha * step[1],
                params[2] + alpha * step[2],
            ];
            let (tr, tj) = system.evaluate(&trial, goal);
            if norm(&tr) < norm(&r) {
                params = trial;
                r = tr;
                j = tj;
                break;
            }
            alpha *= 0.5;
            if alpha < 1e-6 {
                return None;
            }
        }
        if params.iter().any(|p| p.abs() > 50.0) {
            return None;
        }
    }
    None
}

/// Shortest path length at unit radius found by multi-start Newton.
pub fn oracle_length(goal: &Pose, rng: &mut ChaCha8Rng) -> f64 {
    let reach = goal.x.hypot(goal.y) + 2.0;
    let mut best = f64::INFINITY;
    for system in systems() {
        for _ in 0..48 {
            let mut start = [0.0; 3];
            for (i, s) in start.iter_mut().enumerate() {
                *s = if system.arc[i] {
                    rng.random_range(-PI..PI)
                } else {
                    rng.random_range(-reach..reach)
                };
            }
            if let Some(len) = newton(&system, goal, start) {
                best = best.min(len);
            }
        }
    }
    best
}

pub fn random_pose(rng: &mut ChaCha8Rng, extent: f64) -> Pose {
    Pose::new(
        rng.random_range(-extent..extent),
        rng.random_range(-extent..extent),
        rng.random_range(-PI..PI),
    )
}
