#![allow(dead_code)]

use modelswitch::dynamics::{Control, JointState, State};
use modelswitch::sim::{build_scenario, ScenarioConfig, ScenarioKind};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// A scenario's initial state with both cars moved to random nearby poses.
pub fn random_state(cfg: &ScenarioConfig, rng: &mut ChaCha8Rng) -> JointState {
    let mut s = cfg.initial_state();
    let lanes = &cfg.setup.env.lanes;
    let lo = lanes.iter().cloned().fold(f64::INFINITY, f64::min) - 0.5;
    let hi = lanes.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + 0.5;
    s.robot = State::new(
        s.robot.x + rng.gen_range(-5.0..5.0),
        rng.gen_range(lo..hi),
        rng.gen_range(-0.15..0.15),
        rng.gen_range(3.0..11.0),
    );
    s.human = State::new(
        s.robot.x + rng.gen_range(-12.0..12.0),
        rng.gen_range(lo..hi),
        rng.gen_range(-0.15..0.15),
        rng.gen_range(3.0..11.0),
    );
    s
}

pub fn random_controls(cfg: &ScenarioConfig, k: usize, rng: &mut ChaCha8Rng, fraction: f64) -> Vec<Control> {
    let b = cfg.setup.robot_box;
    (0..k)
        .map(|_| {
            Control::new(
                rng.gen_range(-1.0..1.0) * b.steer_max * fraction,
                rng.gen_range(-1.0..1.0) * b.accel_max * fraction,
            )
        })
        .collect()
}

pub fn scenarios() -> Vec<ScenarioConfig> {
    ScenarioKind::ALL.iter().map(|k| build_scenario(*k, 0)).collect()
}

/// Central-difference gradient.
pub fn central_diff(f: impl Fn(&[f64]) -> f64, u: &[f64], h: f64) -> Vec<f64> {
    let mut x = u.to_vec();
    (0..u.len())
        .map(|i| {
            x[i] = u[i] + h;
            let up = f(&x);
            x[i] = u[i] - h;
            let down = f(&x);
            x[i] = u[i];
            (up - down) / (2.0 * h)
        })
        .collect()
}

/// Largest coordinate error, relative to the larger gradient's max norm
/// (floored at 1 so near-zero gradients are compared absolutely).
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    let scale = a.iter().chain(b).fold(1.0_f64, |m, v| m.max(v.abs()));
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max) / scale
}

/// Solve `A x = b` by Gaussian elimination with partial pivoting.
pub fn solve(a: &[Vec<f64>], b: &[f64]) -> Vec<f64> {
    let n = b.len();
    let mut m: Vec<Vec<f64>> = a.iter().zip(b).map(|(r, v)| r.iter().cloned().chain([*v]).collect()).collect();
    for c in 0..n {
        let p = (c..n).max_by(|i, j| m[*i][c].abs().total_cmp(&m[*j][c].abs())).unwrap();
        m.swap(c, p);
        for r in c + 1..n {
            let f = m[r][c] / m[c][c];
            for k in c..=n {
                m[r][k] -= f * m[c][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for r in (0..n).rev() {
        let s: f64 = (r + 1..n).map(|k| m[r][k] * x[k]).sum();
        x[r] = (m[r][n] - s) / m[r][r];
    }
    x
}
