//! Receding-horizon robot planning against a chosen human model.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::diffopt::{gd_maximize, value_and_gradient, Dual, Scalar};
use crate::dynamics::{flatten, unflatten, Control};
use crate::models::{predict, ModelError, ModelKind, ModelSpec};
use crate::reward::Agent;
use crate::scene::Situation;

/// A planned robot control sequence and the human prediction it was made
/// against.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Plan {
    pub robot: Vec<Control>,
    pub human: Vec<Control>,
    /// Robot horizon reward under the prediction.
    pub predicted_reward: f64,
    /// `r_R(s, robot[0], human[0])`.
    pub first_step_reward: f64,
    pub model: ModelSpec,
    pub planning_seconds: f64,
    /// Set when the optimizer aborted; the plan is then the last feasible one.
    pub error: Option<String>,
}

impl Plan {
    /// The plan advanced one step, last control repeated, for warm starting.
    pub fn shifted(&self) -> WarmStart {
        fn shift(u: &[Control]) -> Vec<Control> {
            let mut out: Vec<Control> = u.iter().skip(1).copied().collect();
            if let Some(last) = u.last() {
                out.push(*last);
            }
            out
        }
        WarmStart {
            robot: shift(&self.robot),
            human: Some(shift(&self.human)),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct WarmStart {
    pub robot: Vec<Control>,
    pub human: Option<Vec<Control>>,
}

pub fn execute_first(p: &Plan) -> Control {
    p.robot[0]
}

/// Robot horizon reward against a fixed human prediction.
pub fn fixed_prediction_objective<'s>(
    sit: &'s Situation<'s>,
    human: &'s [Control],
) -> impl Fn(&[Dual<f64>]) -> Dual<f64> + 's {
    let human_d: Vec<Control<Dual<f64>>> = human.iter().map(|c| c.lift()).collect();
    move |ur: &[Dual<f64>]| sit.horizon_reward(Agent::Robot, &unflatten(ur), &human_d)
}

/// One outer iteration of the nested ToM planner.
///
/// The human's response is one projected ascent step from the warm iterate
/// `human`, taken against the robot plan `robot`. Returns the robot objective
/// at `(robot, response)`, its exact gradient with respect to `robot` through
/// that response, and the response itself.
pub fn tom_outer_step(sit: &Situation, robot: &[f64], human: &[f64]) -> (f64, Vec<f64>, Vec<f64>) {
    let k = sit.horizon();
    let n = 2 * k;
    let budget = &sit.setup.budget;
    let hbounds = sit.setup.human_box.bounds(k);
    let metric = hbounds.step_metric();

    let robot_d: Vec<Control<Dual<f64>>> = unflatten(robot).iter().map(|c| c.lift()).collect();
    let (_, g_h) = value_and_gradient(
        |uh: &[Dual<f64>]| sit.horizon_reward(Agent::Human, &robot_d, &unflatten(uh)),
        human,
    );
    let mut response = vec![0.0; n];
    let mut active = vec![0.0; n];
    for j in 0..n {
        let raw = human[j] + budget.learn_rate * metric[j] * g_h[j];
        response[j] = raw.clamp(hbounds.lo[j], hbounds.hi[j]);
        active[j] = if raw == response[j] { 1.0 } else { 0.0 };
    }

    let mut joint = robot.to_vec();
    joint.extend_from_slice(&response);
    let (value, g) = value_and_gradient(
        |x: &[Dual<f64>]| sit.horizon_reward(Agent::Robot, &unflatten(&x[..n]), &unflatten(&x[n..])),
        &joint,
    );

    // d response / d robot, contracted with dR_R/d response:
    // lr · ∇_robot (v · ∇_human R_H), v_j = active_j · metric_j · dR_R/dh_j.
    let v: Vec<f64> = (0..n).map(|j| active[j] * metric[j] * g[n + j]).collect();
    let human_dd: Vec<Dual<Dual<f64>>> = (0..n).map(|j| Dual::lift(Dual::new(human[j], v[j]))).collect();
    let human_c = unflatten(&human_dd);
    let mut grad = g[..n].to_vec();
    if v.iter().any(|x| *x != 0.0) {
        let mut robot_dd: Vec<Dual<Dual<f64>>> = robot.iter().map(|r| Dual::lift(Dual::lift(*r))).collect();
        for i in 0..n {
            robot_dd[i].eps = Dual::cst(1.0);
            let out = sit.horizon_reward(Agent::Human, &unflatten(&robot_dd), &human_c);
            robot_dd[i].eps = Dual::cst(0.0);
            grad[i] += budget.learn_rate * out.eps.eps;
        }
    }
    (value, grad, response)
}

/// Plan for the current situation under model `m`.
pub fn plan(sit: &Situation, m: &ModelSpec, warm: Option<&WarmStart>) -> Plan {
    let started = Instant::now();
    let k = sit.horizon();
    let robot0 = match warm {
        Some(w) if w.robot.len() == k => sit.setup.robot_box_clamp(&w.robot),
        _ => vec![Control::ZERO; k],
    };
    let outcome = match m.kind {
        ModelKind::Naive | ModelKind::Turn => plan_against_fixed(sit, m.kind, &robot0),
        ModelKind::ToM => Ok(plan_nested(sit, &robot0, warm.and_then(|w| w.human.as_deref()))),
    };
    let (robot, human, error) = match outcome {
        Ok((r, h)) => (r, h, None),
        Err(e) => {
            let h = predict(ModelKind::Naive, sit, &robot0).map(|p| p.controls).unwrap_or_default();
            (robot0.clone(), h, Some(e.to_string()))
        }
    };
    let predicted_reward = sit.horizon_reward(Agent::Robot, &robot, &human);
    let first_step_reward = sit.step_reward(Agent::Robot, &robot[0], &human[0]);
    Plan {
        robot,
        human,
        predicted_reward,
        first_step_reward,
        model: *m,
        planning_seconds: started.elapsed().as_secs_f64(),
        error,
    }
}

fn plan_against_fixed(
    sit: &Situation,
    kind: ModelKind,
    robot0: &[Control],
) -> Result<(Vec<Control>, Vec<Control>), ModelError> {
    let human = predict(kind, sit, robot0)?.controls;
    let objective = fixed_prediction_objective(sit, &human);
    let res = gd_maximize(objective, &flatten(robot0), &sit.setup.budget, &sit.setup.robot_box.bounds(sit.horizon()))?;
    Ok((unflatten(&res.point), human))
}

fn plan_nested(sit: &Situation, robot0: &[Control], human0: Option<&[Control]>) -> (Vec<Control>, Vec<Control>) {
    let k = sit.horizon();
    let budget = &sit.setup.budget;
    let rbounds = sit.setup.robot_box.bounds(k);
    let metric = rbounds.step_metric();
    let mut robot = flatten(robot0);
    let mut human = match human0 {
        Some(h) if h.len() == k => flatten(&sit.setup.human_box_clamp(h)),
        _ => flatten(&predict(ModelKind::Naive, sit, robot0).map(|p| p.controls).unwrap_or_default()),
    };
    for _ in 0..budget.steps {
        let (_, grad, response) = tom_outer_step(sit, &robot, &human);
        for i in 0..robot.len() {
            robot[i] += budget.learn_rate * metric[i] * grad[i];
        }
        rbounds.project(&mut robot);
        human = response;
    }
    (unflatten(&robot), unflatten(&human))
}

impl crate::scene::Setup {
    fn robot_box_clamp(&self, u: &[Control]) -> Vec<Control> {
        u.iter().map(|c| self.robot_box.clamp(*c)).collect()
    }

    fn human_box_clamp(&self, u: &[Control]) -> Vec<Control> {
        u.iter().map(|c| self.human_box.clamp(*c)).collect()
    }
}

/// Scalar check used by tests: is every control finite?
pub fn is_finite_plan(p: &Plan) -> bool {
    p.robot
        .iter()
        .chain(&p.human)
        .all(|c| c.steer.value().is_finite() && c.accel.value().is_finite())
}
