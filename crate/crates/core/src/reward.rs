//! Driving features and the linear rewards built from them.
//!
//! Both cars score the world with the same feature registry, each from its
//! own point of view ("ego") and with its own weight vector. Features are
//! evaluated on the state reached after applying the controls, and every
//! positional term averages the current position with an anticipated one
//! (`position + (headway · v_x, lookahead · v_y)`), so a one-step reward still reacts to
//! steering and acceleration.
//!
//! The registry order below is part of the config-file contract; bump
//! [`FEATURE_REGISTRY_VERSION`] whenever it changes.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffopt::Scalar;
use crate::dynamics::{advance, Control, DynamicsError, DynamicsParams, JointState, Route, State};

pub const FEATURE_REGISTRY_VERSION: u32 = 1;

/// Feature registry, in weight-vector order.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Feature {
    /// `v·cos(heading − road heading)`
    Progress,
    /// `−softplus(v − speed limit)`
    Overspeed,
    /// Negative squared offset to the nearest lane centerline (product form).
    LaneLateral,
    /// Negative squared heading error.
    Heading,
    /// Gaussian well around the ego's goal lane, shifted to be `≤ 0`.
    GoalLane,
    /// Negative Gaussian proximity to the other interactive car.
    CollisionAgent,
    /// Negative Gaussian proximity to scripted traffic.
    CollisionTraffic,
    /// Negative Gaussian proximity to cones.
    Cones,
    /// Softplus penalty for leaving the road.
    Boundary,
    /// `−‖u‖²` of the ego's control.
    Effort,
    /// The other car's goal-lane well (a courtesy term).
    OtherGoalLane,
}

pub const FEATURES: [Feature; 11] = [
    Feature::Progress,
    Feature::Overspeed,
    Feature::LaneLateral,
    Feature::Heading,
    Feature::GoalLane,
    Feature::CollisionAgent,
    Feature::CollisionTraffic,
    Feature::Cones,
    Feature::Boundary,
    Feature::Effort,
    Feature::OtherGoalLane,
];

pub const NUM_FEATURES: usize = FEATURES.len();

impl Feature {
    pub fn index(self) -> usize {
        FEATURES.iter().position(|f| *f == self).unwrap()
    }
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RewardError {
    #[error("weight vector has {got} entries, registry has {expected}")]
    Dimension { expected: usize, got: usize },
    #[error("invalid environment: {0}")]
    Environment(String),
    #[error(transparent)]
    Dynamics(#[from] DynamicsError),
}

/// Linear reward coefficients, one per registry feature.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct FeatureWeights(pub Vec<f64>);

impl FeatureWeights {
    pub fn zeros() -> Self {
        Self(vec![0.0; NUM_FEATURES])
    }

    pub fn unit(f: Feature) -> Self {
        let mut w = Self::zeros();
        w.0[f.index()] = 1.0;
        w
    }

    pub fn from_pairs(pairs: &[(Feature, f64)]) -> Self {
        let mut w = Self::zeros();
        for (f, v) in pairs {
            w.0[f.index()] = *v;
        }
        w
    }

    pub fn get(&self, f: Feature) -> f64 {
        self.0[f.index()]
    }

    pub fn scaled(&self, c: f64) -> Self {
        Self(self.0.iter().map(|w| w * c).collect())
    }

    pub fn validate(&self) -> Result<(), RewardError> {
        if self.0.len() != NUM_FEATURES {
            return Err(RewardError::Dimension {
                expected: NUM_FEATURES,
                got: self.0.len(),
            });
        }
        if self.0.iter().any(|w| !w.is_finite()) {
            return Err(RewardError::Environment("non-finite weight".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Agent {
    Robot,
    Human,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cone {
    pub x: f64,
    pub y: f64,
    pub radius: f64,
}

/// Road geometry and the constants the features read.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Environment {
    /// Lane centerlines (lateral coordinate, m). The road runs along +x.
    pub lanes: Vec<f64>,
    pub lane_width: f64,
    pub road_min_y: f64,
    pub road_max_y: f64,
    #[serde(default)]
    pub cones: Vec<Cone>,
    pub speed_limit: f64,
    /// Index into `lanes` of the lane each car wants to be in.
    pub robot_goal_lane: usize,
    pub human_goal_lane: usize,
    /// Lateral anticipation (s) for positional features.
    pub lookahead: f64,
    /// Longitudinal anticipation (s), a following-distance headway.
    #[serde(default = "default_headway")]
    pub headway: f64,
    pub car_length: f64,
    pub car_width: f64,
    /// Longitudinal / lateral length scales of the car-car proximity Gaussian.
    pub proximity_long: f64,
    pub proximity_lat: f64,
}

impl Default for Environment {
    fn default() -> Self {
        Self {
            lanes: vec![0.0, 4.0],
            lane_width: 4.0,
            road_min_y: -2.0,
            road_max_y: 6.0,
            cones: vec![],
            speed_limit: 10.0,
            robot_goal_lane: 0,
            human_goal_lane: 1,
            lookahead: 0.5,
            headway: 1.5,
            car_length: 4.0,
            car_width: 2.0,
            proximity_long: 5.0,
            proximity_lat: 1.6,
        }
    }
}

fn default_headway() -> f64 {
    1.5
}

const BOUNDARY_SHARPNESS: f64 = 4.0;

impl Environment {
    pub fn validate(&self) -> Result<(), RewardError> {
        if self.lanes.is_empty() {
            return Err(RewardError::Environment("at least one lane required".into()));
        }
        if self.cones.iter().any(|c| !(c.radius > 0.0)) {
            return Err(RewardError::Environment("cone radius must be positive".into()));
        }
        if self.robot_goal_lane >= self.lanes.len() || self.human_goal_lane >= self.lanes.len() {
            return Err(RewardError::Environment("goal lane out of range".into()));
        }
        let positive = [
            self.lane_width,
            self.speed_limit,
            self.car_length,
            self.car_width,
            self.proximity_long,
            self.proximity_lat,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) || self.lookahead < 0.0 || self.headway < 0.0 || self.road_max_y <= self.road_min_y {
            return Err(RewardError::Environment("non-positive geometry constant".into()));
        }
        Ok(())
    }

    pub fn goal_y(&self, who: Agent) -> f64 {
        match who {
            Agent::Robot => self.lanes[self.robot_goal_lane],
            Agent::Human => self.lanes[self.human_goal_lane],
        }
    }

    /// Separation between two car footprints treated as axis-aligned boxes;
    /// negative when they overlap.
    pub fn footprint_gap(&self, a: &State, b: &State) -> f64 {
        let dx = (a.x - b.x).abs() - self.car_length;
        let dy = (a.y - b.y).abs() - self.car_width;
        dx.max(dy)
    }

    fn lane_lateral<T: Scalar>(&self, y: T) -> T {
        let mut prod = T::cst(1.0);
        for c in &self.lanes {
            prod *= (y - *c).sq();
        }
        let norm = self.lane_width.powi(2 * (self.lanes.len() as i32 - 1));
        -(prod / norm)
    }

    fn goal_well<T: Scalar>(&self, y: T, goal: f64) -> T {
        (-((y - goal).sq() / (self.lane_width * self.lane_width))).exp() - 1.0
    }

    fn boundary<T: Scalar>(&self, y: T) -> T {
        let hw = 0.5 * self.car_width;
        let over = ((y + hw - self.road_max_y) * BOUNDARY_SHARPNESS).softplus();
        let under = ((T::cst(self.road_min_y + hw) - y) * BOUNDARY_SHARPNESS).softplus();
        -(over + under) / BOUNDARY_SHARPNESS
    }

    fn car_proximity<T: Scalar>(&self, dx: T, dy: T) -> T {
        (-(dx.sq() / (self.proximity_long * self.proximity_long)
            + dy.sq() / (self.proximity_lat * self.proximity_lat)))
            .exp()
    }

    fn cone_proximity<T: Scalar>(&self, px: T, py: T) -> T {
        let hw = 0.5 * self.car_width;
        let mut total = T::zero();
        for c in &self.cones {
            let rho = c.radius + hw;
            total += (-(((px - c.x).sq() + (py - c.y).sq()) / (rho * rho))).exp();
        }
        total
    }
}

/// Current and anticipated position of a car.
#[derive(Clone, Copy)]
struct Footprint<T> {
    now: (T, T),
    ahead: (T, T),
}

impl<T: Scalar> Footprint<T> {
    fn of(s: &State<T>, env: &Environment) -> Self {
        Self {
            now: (s.x, s.y),
            ahead: (
                s.x + s.speed * s.heading.cos() * env.headway,
                s.y + s.speed * s.heading.sin() * env.lookahead,
            ),
        }
    }

    fn mean<F: Fn(T, T) -> T>(&self, f: F) -> T {
        (f(self.now.0, self.now.1) + f(self.ahead.0, self.ahead.1)) * 0.5
    }
}

/// Feature vector for `ego` at a post-step state. When `weights` is given,
/// features with zero weight are skipped (left at zero).
pub fn agent_features<T: Scalar>(
    env: &Environment,
    who: Agent,
    ego: &State<T>,
    other: &State<T>,
    traffic: &[State],
    ego_control: &Control<T>,
    weights: Option<&[f64]>,
) -> [T; NUM_FEATURES] {
    let on = |f: Feature| weights.map_or(true, |w| w[f.index()] != 0.0);
    let mut out = [T::zero(); NUM_FEATURES];
    let me = Footprint::of(ego, env);
    let other_who = match who {
        Agent::Robot => Agent::Human,
        Agent::Human => Agent::Robot,
    };

    if on(Feature::Progress) {
        out[0] = ego.speed * ego.heading.cos();
    }
    if on(Feature::Overspeed) {
        out[1] = -(ego.speed - env.speed_limit).softplus();
    }
    if on(Feature::LaneLateral) {
        out[2] = me.mean(|_, y| env.lane_lateral(y));
    }
    if on(Feature::Heading) {
        out[3] = -ego.heading.sq();
    }
    if on(Feature::GoalLane) {
        let goal = env.goal_y(who);
        out[4] = me.mean(|_, y| env.goal_well(y, goal));
    }
    if on(Feature::CollisionAgent) {
        let them = Footprint::of(other, env);
        out[5] = -(env.car_proximity(me.now.0 - them.now.0, me.now.1 - them.now.1)
            + env.car_proximity(me.ahead.0 - them.ahead.0, me.ahead.1 - them.ahead.1));
    }
    if on(Feature::CollisionTraffic) {
        let mut total = T::zero();
        for car in traffic {
            let them = Footprint::of(&car.lift::<T>(), env);
            total += env.car_proximity(me.now.0 - them.now.0, me.now.1 - them.now.1)
                + env.car_proximity(me.ahead.0 - them.ahead.0, me.ahead.1 - them.ahead.1);
        }
        out[6] = -total;
    }
    if on(Feature::Cones) {
        out[7] = -(env.cone_proximity(me.now.0, me.now.1) + env.cone_proximity(me.ahead.0, me.ahead.1));
    }
    if on(Feature::Boundary) {
        out[8] = env.boundary(ego.y);
    }
    if on(Feature::Effort) {
        out[9] = -(ego_control.steer.sq() + ego_control.accel.sq());
    }
    if on(Feature::OtherGoalLane) {
        let them = Footprint::of(other, env);
        let goal = env.goal_y(other_who);
        out[10] = them.mean(|_, y| env.goal_well(y, goal));
    }
    out
}

/// Everything a reward evaluation needs besides the cars and controls.
#[derive(Clone, Copy, Debug)]
pub struct RewardSpec<'a> {
    pub env: &'a Environment,
    pub weights: &'a FeatureWeights,
    pub who: Agent,
    pub params: &'a DynamicsParams,
}

impl<'a> RewardSpec<'a> {
    /// One generic step: advance both cars, score the successor state.
    /// `traffic_next` are the scripted cars after the same step.
    #[inline]
    pub fn step<T: Scalar>(
        &self,
        robot: &State<T>,
        human: &State<T>,
        u_robot: &Control<T>,
        u_human: &Control<T>,
        traffic_next: &[State],
    ) -> (State<T>, State<T>, T) {
        let r = advance(robot, u_robot, self.params);
        let h = advance(human, u_human, self.params);
        let (ego, other, u) = match self.who {
            Agent::Robot => (&r, &h, u_robot),
            Agent::Human => (&h, &r, u_human),
        };
        let w = &self.weights.0;
        let phi = agent_features(self.env, self.who, ego, other, traffic_next, u, Some(w));
        let mut total = T::zero();
        for k in 0..NUM_FEATURES {
            if w[k] != 0.0 {
                total += phi[k] * w[k];
            }
        }
        (r, h, total)
    }

    /// Horizon sum of step rewards. `traffic[τ]` holds the scripted cars at
    /// step τ (`traffic[0]` is the current time); it must have at least
    /// `u_robot.len() + 1` entries.
    pub fn horizon<T: Scalar>(
        &self,
        robot: State<T>,
        human: State<T>,
        u_robot: &[Control<T>],
        u_human: &[Control<T>],
        traffic: &[Vec<State>],
    ) -> T {
        let mut r = robot;
        let mut h = human;
        let mut total = T::zero();
        for k in 0..u_robot.len() {
            let (nr, nh, step) = self.step(&r, &h, &u_robot[k], &u_human[k], &traffic[k + 1]);
            total += step;
            r = nr;
            h = nh;
        }
        total
    }

    fn validate(&self) -> Result<(), RewardError> {
        self.weights.validate()?;
        self.env.validate()?;
        self.params.validate()?;
        Ok(())
    }
}

/// Features of the joint state `s` from `who`'s point of view, with the
/// controls that produced it.
pub fn features(s: &JointState, u_robot: &Control, u_human: &Control, env: &Environment, who: Agent) -> [f64; NUM_FEATURES] {
    let (ego, other, u) = match who {
        Agent::Robot => (&s.robot, &s.human, u_robot),
        Agent::Human => (&s.human, &s.robot, u_human),
    };
    agent_features(env, who, ego, other, &s.others, u, None)
}

/// Reward for one transition out of `s`. `traffic_controls` are the scripted
/// cars' controls for this step.
pub fn reward_step(
    s: &JointState,
    u_robot: &Control,
    u_human: &Control,
    traffic_controls: &[Control],
    spec: &RewardSpec,
) -> Result<f64, RewardError> {
    spec.validate()?;
    if traffic_controls.len() != s.others.len() {
        return Err(RewardError::Dimension {
            expected: s.others.len(),
            got: traffic_controls.len(),
        });
    }
    let traffic_next: Vec<State> = s
        .others
        .iter()
        .zip(traffic_controls)
        .map(|(c, u)| advance(c, u, spec.params))
        .collect();
    let (_, _, r) = spec.step(&s.robot, &s.human, u_robot, u_human, &traffic_next);
    Ok(r)
}

/// Sum of step rewards along the rollout from `s0`.
pub fn reward_horizon(
    s0: &JointState,
    u_robot: &[Control],
    u_human: &[Control],
    routes: &[Route],
    spec: &RewardSpec,
) -> Result<f64, RewardError> {
    spec.validate()?;
    let traj = crate::dynamics::rollout(s0, u_robot, u_human, routes, spec.params)?;
    let traffic: Vec<Vec<State>> = traj.iter().map(|s| s.others.clone()).collect();
    Ok(spec.horizon(s0.robot, s0.human, u_robot, u_human, &traffic))
}
