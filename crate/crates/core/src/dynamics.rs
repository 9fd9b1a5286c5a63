//! Kinematic bicycle model with friction, integrated by explicit Euler.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffopt::{Bounds, Scalar};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DynamicsError {
    #[error("non-finite state or control: {0}")]
    InvalidState(String),
    #[error("horizon mismatch: {what} has length {got}, expected {expected}")]
    Dimension {
        what: &'static str,
        expected: usize,
        got: usize,
    },
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct State<T = f64> {
    pub x: T,
    pub y: T,
    pub heading: T,
    pub speed: T,
}

impl State<f64> {
    pub fn new(x: f64, y: f64, heading: f64, speed: f64) -> Self {
        Self {
            x,
            y,
            heading,
            speed,
        }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.heading.is_finite() && self.speed.is_finite()
    }

    pub fn lift<T: Scalar>(&self) -> State<T> {
        State {
            x: T::cst(self.x),
            y: T::cst(self.y),
            heading: T::cst(self.heading),
            speed: T::cst(self.speed),
        }
    }

    pub fn distance(&self, other: &State) -> f64 {
        (self.x - other.x).hypot(self.y - other.y)
    }
}

impl<T: Scalar> State<T> {
    pub fn value(&self) -> State<f64> {
        State {
            x: self.x.value(),
            y: self.y.value(),
            heading: self.heading.value(),
            speed: self.speed.value(),
        }
    }
}

/// Steering input (yaw-rate gain, multiplied by speed) and acceleration.
#[derive(Clone, Copy, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Control<T = f64> {
    pub steer: T,
    pub accel: T,
}

impl Control<f64> {
    pub const ZERO: Control = Control {
        steer: 0.0,
        accel: 0.0,
    };

    pub fn new(steer: f64, accel: f64) -> Self {
        Self { steer, accel }
    }

    pub fn lift<T: Scalar>(&self) -> Control<T> {
        Control {
            steer: T::cst(self.steer),
            accel: T::cst(self.accel),
        }
    }

    pub fn norm(&self) -> f64 {
        self.steer.hypot(self.accel)
    }
}

impl<T: Scalar> Control<T> {
    pub fn value(&self) -> Control<f64> {
        Control {
            steer: self.steer.value(),
            accel: self.accel.value(),
        }
    }
}

/// Symmetric box on each control channel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    pub steer_max: f64,
    pub accel_max: f64,
}

impl Default for ControlBox {
    fn default() -> Self {
        Self {
            steer_max: 0.15,
            accel_max: 4.0,
        }
    }
}

impl ControlBox {
    pub fn contains(&self, u: &Control) -> bool {
        u.steer.abs() <= self.steer_max && u.accel.abs() <= self.accel_max
    }

    pub fn clamp(&self, u: Control) -> Control {
        Control {
            steer: u.steer.clamp(-self.steer_max, self.steer_max),
            accel: u.accel.clamp(-self.accel_max, self.accel_max),
        }
    }

    /// Box over a flattened `[steer, accel, steer, accel, ...]` sequence.
    pub fn bounds(&self, horizon: usize) -> Bounds {
        self.scaled_bounds(horizon, 1.0)
    }

    pub fn scaled_bounds(&self, horizon: usize, fraction: f64) -> Bounds {
        let half: Vec<f64> = (0..horizon)
            .flat_map(|_| [self.steer_max * fraction, self.accel_max * fraction])
            .collect();
        Bounds::symmetric(&half)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SpeedFloor {
    /// `max(v, 0)`; used when simulating.
    Hard,
    /// `softplus(k v) / k`; differentiable stand-in used inside planning.
    Smooth { sharpness: f64 },
    /// No floor; reverse driving allowed.
    Reverse,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DynamicsParams {
    /// Friction coefficient (1/s).
    pub friction: f64,
    /// Integration step (s).
    pub dt: f64,
    #[serde(default = "default_floor")]
    pub floor: SpeedFloor,
}

fn default_floor() -> SpeedFloor {
    SpeedFloor::Hard
}

impl Default for DynamicsParams {
    fn default() -> Self {
        Self {
            friction: 0.1,
            dt: 0.1,
            floor: SpeedFloor::Hard,
        }
    }
}

impl DynamicsParams {
    pub fn validate(&self) -> Result<(), DynamicsError> {
        if !(self.friction >= 0.0 && self.friction.is_finite()) || !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(DynamicsError::InvalidState(format!(
                "friction {} / dt {} out of range",
                self.friction, self.dt
            )));
        }
        Ok(())
    }

    /// The same model with the hard speed clamp replaced by a smooth floor.
    pub fn for_planning(&self) -> Self {
        match self.floor {
            SpeedFloor::Hard => Self {
                floor: SpeedFloor::Smooth { sharpness: 20.0 },
                ..*self
            },
            _ => *self,
        }
    }
}

/// One explicit Euler step of the bicycle model, generic over the scalar type.
#[inline]
pub fn advance<T: Scalar>(s: &State<T>, u: &Control<T>, p: &DynamicsParams) -> State<T> {
    let dt = p.dt;
    let v = s.speed;
    let speed = v + (u.accel - v * p.friction) * dt;
    let speed = match p.floor {
        SpeedFloor::Hard => {
            if speed.value() < 0.0 {
                T::zero()
            } else {
                speed
            }
        }
        SpeedFloor::Smooth { sharpness } => (speed * sharpness).softplus() / sharpness,
        SpeedFloor::Reverse => speed,
    };
    State {
        x: s.x + v * s.heading.cos() * dt,
        y: s.y + v * s.heading.sin() * dt,
        heading: s.heading + v * u.steer * dt,
        speed,
    }
}

/// Checked single step on plain values.
pub fn step(s: &State, u: &Control, p: &DynamicsParams) -> Result<State, DynamicsError> {
    if !s.is_finite() || !u.steer.is_finite() || !u.accel.is_finite() {
        return Err(DynamicsError::InvalidState(format!("{s:?} / {u:?}")));
    }
    p.validate()?;
    let next = advance(s, u, p);
    if !next.is_finite() {
        return Err(DynamicsError::InvalidState(format!("{next:?}")));
    }
    Ok(next)
}

/// The robot, the modeled human and any scripted traffic.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JointState {
    pub robot: State,
    pub human: State,
    #[serde(default)]
    pub others: Vec<State>,
}

/// Precomputed control sequence replayed by a scripted car.
#[derive(Clone, Debug, PartialEq, Default, Serialize, Deserialize)]
pub struct Route {
    pub controls: Vec<Control>,
}

impl Route {
    /// Control that holds the current speed against friction.
    pub fn cruise(speed: f64, friction: f64, len: usize) -> Self {
        Self {
            controls: vec![Control::new(0.0, friction * speed); len],
        }
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    /// Control at absolute step `t`; the route holds its last control once
    /// exhausted.
    pub fn at(&self, t: usize) -> Control {
        self.controls
            .get(t)
            .or(self.controls.last())
            .copied()
            .unwrap_or(Control::ZERO)
    }
}

/// Joint trajectory `[s0, s1, ..., sK]` under the given controls. Routes are
/// read from index 0 and must cover the horizon.
pub fn rollout(
    s0: &JointState,
    robot: &[Control],
    human: &[Control],
    routes: &[Route],
    p: &DynamicsParams,
) -> Result<Vec<JointState>, DynamicsError> {
    let k = robot.len();
    if human.len() != k {
        return Err(DynamicsError::Dimension {
            what: "human controls",
            expected: k,
            got: human.len(),
        });
    }
    if routes.len() != s0.others.len() {
        return Err(DynamicsError::Dimension {
            what: "routes",
            expected: s0.others.len(),
            got: routes.len(),
        });
    }
    if let Some(r) = routes.iter().find(|r| r.len() < k) {
        return Err(DynamicsError::Dimension {
            what: "route controls",
            expected: k,
            got: r.len(),
        });
    }
    let mut traj = Vec::with_capacity(k + 1);
    traj.push(s0.clone());
    for t in 0..k {
        let cur = &traj[t];
        let next = JointState {
            robot: step(&cur.robot, &robot[t], p)?,
            human: step(&cur.human, &human[t], p)?,
            others: cur
                .others
                .iter()
                .zip(routes)
                .map(|(s, r)| step(s, &r.controls[t], p))
                .collect::<Result<_, _>>()?,
        };
        traj.push(next);
    }
    Ok(traj)
}

/// Scripted-traffic states for `steps` steps starting at absolute time `t0`:
/// `out[τ][car]`, with `out[0]` equal to `others`.
pub fn traffic_forecast(
    others: &[State],
    routes: &[Route],
    t0: usize,
    steps: usize,
    p: &DynamicsParams,
) -> Vec<Vec<State>> {
    let mut out = Vec::with_capacity(steps + 1);
    out.push(others.to_vec());
    for tau in 0..steps {
        let next = out[tau]
            .iter()
            .zip(routes)
            .map(|(s, r)| advance(s, &r.at(t0 + tau), p))
            .collect();
        out.push(next);
    }
    out
}

pub fn flatten(controls: &[Control]) -> Vec<f64> {
    controls.iter().flat_map(|c| [c.steer, c.accel]).collect()
}

pub fn unflatten<T: Scalar>(flat: &[T]) -> Vec<Control<T>> {
    flat.chunks_exact(2)
        .map(|c| Control {
            steer: c[0],
            accel: c[1],
        })
        .collect()
}
