//! Online choice of the human model: a one-step estimate of what an
//! alternate model would have gained, net of its compute cost, and the
//! switch-up / switch-down policy built on it.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffopt::{build_surrogate, maximize_surrogate, Bounds, Dual, Scalar};
use crate::dynamics::{flatten, Control};
use crate::models::{predict, tom_response, Ladder, ModelSpec};
use crate::planner::Plan;
use crate::reward::Agent;
use crate::scene::Situation;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SwitcherError {
    #[error("lambda must be finite and non-negative, got {0}")]
    Lambda(f64),
    #[error("cooldown must be at least 1")]
    Cooldown,
    #[error("delta-u fraction must lie in (0, 1], got {0}")]
    DeltaU(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitcherConfig {
    /// Reward units charged per second of nominal compute.
    pub lambda: f64,
    /// Steps to wait between switch-down attempts.
    pub cooldown: usize,
    /// Half-width of the Δu box as a fraction of the robot's control box.
    pub delta_u_fraction: f64,
}

impl SwitcherConfig {
    pub fn with_lambda(lambda: f64) -> Self {
        Self {
            lambda,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), SwitcherError> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(SwitcherError::Lambda(self.lambda));
        }
        if self.cooldown < 1 {
            return Err(SwitcherError::Cooldown);
        }
        if !(self.delta_u_fraction > 0.0 && self.delta_u_fraction <= 1.0) {
            return Err(SwitcherError::DeltaU(self.delta_u_fraction));
        }
        Ok(())
    }
}

impl Default for SwitcherConfig {
    fn default() -> Self {
        Self {
            lambda: 0.0,
            cooldown: 3,
            delta_u_fraction: 0.25,
        }
    }
}

/// `∂ û_H[0] / ∂ û_R[0]`; rows are (steer, accel) of the human, columns of
/// the robot.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InfluenceJacobian(pub [[f64; 2]; 2]);

impl InfluenceJacobian {
    pub const ZERO: Self = Self([[0.0; 2]; 2]);

    pub fn apply<T: Scalar>(&self, d: [T; 2]) -> [T; 2] {
        let m = &self.0;
        [d[0] * m[0][0] + d[1] * m[0][1], d[0] * m[1][0] + d[1] * m[1][1]]
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().flatten().all(|v| *v == 0.0)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Decision {
    Stay,
    Up,
    Down,
}

/// The outcome of one switching check.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SwitchEvaluation {
    /// The rung that was evaluated, if any check ran.
    pub candidate: Option<ModelSpec>,
    pub delta_u: Control,
    /// First-control change under the current model's own prediction.
    pub baseline_delta_u: Control,
    pub influence: InfluenceJacobian,
    pub r_hat: f64,
    pub r_current: f64,
    pub delta_r_meta: f64,
    pub decision: Decision,
}

impl SwitchEvaluation {
    fn idle(r_current: f64) -> Self {
        Self {
            candidate: None,
            delta_u: Control::ZERO,
            baseline_delta_u: Control::ZERO,
            influence: InfluenceJacobian::ZERO,
            r_hat: r_current,
            r_current,
            delta_r_meta: 0.0,
            decision: Decision::Stay,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetaRewardRecord {
    pub reward: f64,
    pub model: ModelSpec,
    pub time_cost: f64,
    pub r_meta: f64,
}

impl MetaRewardRecord {
    pub fn new(reward: f64, model: ModelSpec, lambda: f64) -> Self {
        Self {
            reward,
            model,
            time_cost: model.time_cost,
            r_meta: reward - lambda * model.time_cost,
        }
    }
}

/// Sensitivity of model `m`'s first predicted human control to the robot's
/// first control, at `robot_plan`. Zero for models that ignore the plan.
pub fn influence_jacobian(sit: &Situation, robot_plan: &[Control], m: &ModelSpec) -> InfluenceJacobian {
    if !m.kind.responsive() {
        return InfluenceJacobian::ZERO;
    }
    let mut jac = [[0.0; 2]; 2];
    for col in 0..2 {
        let mut plan: Vec<Control<Dual<f64>>> = robot_plan.iter().map(|c| c.lift()).collect();
        if col == 0 {
            plan[0].steer.eps = 1.0;
        } else {
            plan[0].accel.eps = 1.0;
        }
        let h0 = tom_response(sit, &plan)[0];
        jac[0][col] = h0.steer.eps;
        jac[1][col] = h0.accel.eps;
    }
    if jac.iter().flatten().any(|v| !v.is_finite()) {
        return InfluenceJacobian::ZERO;
    }
    InfluenceJacobian(jac)
}

/// Box for Δu: the configured fraction of the control box, further cut so
/// that `u_R[0] + Δu` stays feasible.
fn delta_bounds(sit: &Situation, u0: &Control, cfg: &SwitcherConfig) -> Bounds {
    let full = sit.setup.robot_box.bounds(1);
    let frac = sit.setup.robot_box.scaled_bounds(1, cfg.delta_u_fraction);
    let u = flatten(&[*u0]);
    let lo = (0..2).map(|i| frac.lo[i].max(full.lo[i] - u[i]).min(0.0)).collect();
    let hi = (0..2).map(|i| frac.hi[i].min(full.hi[i] - u[i]).max(0.0)).collect();
    Bounds::new(lo, hi)
}

/// Robot first-control change that maximizes the quadratic model of the
/// one-step reward when the human plays `alt_first + influence·Δu`.
pub fn estimate_delta_control(
    sit: &Situation,
    current_plan: &Plan,
    alt_first: &Control,
    influence: &InfluenceJacobian,
    cfg: &SwitcherConfig,
) -> Control {
    let u0 = current_plan.robot[0];
    let objective = |d: &[Dual<Dual<f64>>]| {
        let shift = influence.apply([d[0], d[1]]);
        let ur = Control {
            steer: d[0] + u0.steer,
            accel: d[1] + u0.accel,
        };
        let uh = Control {
            steer: shift[0] + alt_first.steer,
            accel: shift[1] + alt_first.accel,
        };
        sit.step_reward(Agent::Robot, &ur, &uh)
    };
    match build_surrogate(objective, &[0.0, 0.0]) {
        Ok(q) => {
            let d = maximize_surrogate(&q, &delta_bounds(sit, &u0, cfg));
            Control::new(d[0], d[1])
        }
        Err(_) => Control::ZERO,
    }
}

/// Exact one-step robot reward after applying `delta_u`.
pub fn estimate_reward(
    sit: &Situation,
    current_plan: &Plan,
    delta_u: &Control,
    alt_first: &Control,
    influence: &InfluenceJacobian,
) -> f64 {
    let u0 = current_plan.robot[0];
    let shift = influence.apply([delta_u.steer, delta_u.accel]);
    let ur = Control::new(u0.steer + delta_u.steer, u0.accel + delta_u.accel);
    let uh = Control::new(alt_first.steer + shift[0], alt_first.accel + shift[1]);
    sit.step_reward(Agent::Robot, &ur, &uh)
}

pub fn delta_r_meta(r_hat: f64, r_current: f64, alt: &ModelSpec, cur: &ModelSpec, cfg: &SwitcherConfig) -> f64 {
    (r_hat - cfg.lambda * alt.time_cost) - (r_current - cfg.lambda * cur.time_cost)
}

/// Reward the robot gets from adapting its first control to the current
/// model's own prediction, scored against the observed human control.
/// `influence` is the current model's response to the robot. Both
/// checks compare against this, so the generic gain of one-step
/// re-optimization cancels and only the better prediction is credited.
pub fn baseline_reward(
    sit: &Situation,
    plan: &Plan,
    observed_uh: &Control,
    influence: &InfluenceJacobian,
    cfg: &SwitcherConfig,
) -> (Control, f64) {
    let delta_u = estimate_delta_control(sit, plan, &plan.human[0], influence, cfg);
    (delta_u, estimate_reward(sit, plan, &delta_u, observed_uh, influence))
}

/// Switch-up check against the top rung, treating the observed human
/// control as that model's prediction.
pub fn evaluate_up(
    sit: &Situation,
    plan: &Plan,
    observed_uh: &Control,
    ladder: &Ladder,
    current: usize,
    cfg: &SwitcherConfig,
) -> SwitchEvaluation {
    let top = *ladder.top();
    let cur = ladder.get(current);
    let own = influence_jacobian(sit, &plan.robot, cur);
    let (baseline_delta_u, r_current) = baseline_reward(sit, plan, observed_uh, &own, cfg);
    let influence = influence_jacobian(sit, &plan.robot, &top);
    let delta_u = estimate_delta_control(sit, plan, observed_uh, &influence, cfg);
    let r_hat = estimate_reward(sit, plan, &delta_u, observed_uh, &influence);
    let d = delta_r_meta(r_hat, r_current, &top, cur, cfg);
    SwitchEvaluation {
        candidate: Some(top),
        delta_u,
        baseline_delta_u,
        influence,
        r_hat,
        r_current,
        delta_r_meta: d,
        decision: if d > 0.0 { Decision::Up } else { Decision::Stay },
    }
}

/// Switch-down check against the rung just below: the robot adapts its
/// first control to that model's own prediction, and the result is scored
/// against what the human actually did.
pub fn evaluate_down(
    sit: &Situation,
    plan: &Plan,
    observed_uh: &Control,
    ladder: &Ladder,
    current: usize,
    cfg: &SwitcherConfig,
) -> SwitchEvaluation {
    let lower = *ladder.get(current - 1);
    let cur = ladder.get(current);
    let own = influence_jacobian(sit, &plan.robot, cur);
    let (baseline_delta_u, r_current) = baseline_reward(sit, plan, observed_uh, &own, cfg);
    let Ok(prediction) = predict(lower.kind, sit, &plan.robot) else {
        return SwitchEvaluation::idle(r_current);
    };
    let influence = influence_jacobian(sit, &plan.robot, &lower);
    let delta_u = estimate_delta_control(sit, plan, &prediction.controls[0], &influence, cfg);
    let r_hat = estimate_reward(sit, plan, &delta_u, observed_uh, &influence);
    let d = delta_r_meta(r_hat, r_current, &lower, cur, cfg);
    SwitchEvaluation {
        candidate: Some(lower),
        delta_u,
        baseline_delta_u,
        influence,
        r_hat,
        r_current,
        delta_r_meta: d,
        decision: if d > 0.0 { Decision::Down } else { Decision::Stay },
    }
}

/// One step of the switching policy. `steps_since_down` counts steps since
/// the last switch or failed down attempt.
pub fn decide(
    sit: &Situation,
    plan: &Plan,
    observed_uh: &Control,
    ladder: &Ladder,
    current: usize,
    cfg: &SwitcherConfig,
    steps_since_down: usize,
) -> SwitchEvaluation {
    let top = ladder.len() - 1;
    if current < top {
        let up = evaluate_up(sit, plan, observed_uh, ladder, current, cfg);
        if up.decision == Decision::Up || current == 0 {
            return up;
        }
    }
    if current > 0 && steps_since_down >= cfg.cooldown {
        return evaluate_down(sit, plan, observed_uh, ladder, current, cfg);
    }
    SwitchEvaluation::idle(sit.step_reward(Agent::Robot, &plan.robot[0], observed_uh))
}

/// Per-episode switching state.
#[derive(Clone, Debug, PartialEq)]
pub struct Switcher {
    pub ladder: Ladder,
    pub cfg: SwitcherConfig,
    pub rung: usize,
    pub steps_since_down: usize,
}

impl Switcher {
    pub fn new(ladder: Ladder, cfg: SwitcherConfig) -> Self {
        Self {
            ladder,
            cfg,
            rung: 0,
            steps_since_down: 0,
        }
    }

    pub fn current(&self) -> &ModelSpec {
        self.ladder.get(self.rung)
    }

    /// Run the check for this step and move to the chosen rung.
    pub fn observe(&mut self, sit: &Situation, plan: &Plan, observed_uh: &Control) -> SwitchEvaluation {
        let eval = decide(
            sit,
            plan,
            observed_uh,
            &self.ladder,
            self.rung,
            &self.cfg,
            self.steps_since_down,
        );
        let down_attempted = eval.candidate.is_some_and(|c| c.rung + 1 == self.rung);
        match eval.decision {
            Decision::Up => {
                self.rung = self.ladder.len() - 1;
                self.steps_since_down = 0;
            }
            Decision::Down => {
                self.rung -= 1;
                self.steps_since_down = 0;
            }
            Decision::Stay if down_attempted => self.steps_since_down = 0,
            Decision::Stay => self.steps_since_down += 1,
        }
        eval
    }
}
