//! The simulated human driver the robot interacts with.

use crate::diffopt::{gd_maximize, Dual, OptBudget};
use crate::dynamics::{flatten, unflatten, Control};
use crate::models::predict_naive;
use crate::reward::Agent;
use crate::scene::Situation;

/// A short-horizon reward maximizer that sees the robot's control for the
/// current step and assumes the robot keeps applying it.
#[derive(Clone, Debug, PartialEq)]
pub struct SimulatedHuman {
    pub budget: OptBudget,
}

impl SimulatedHuman {
    pub fn new(budget: OptBudget) -> Self {
        Self { budget }
    }

    /// Plan over the human's own horizon and return it; the first control is
    /// what the human does. `warm` is last step's plan, already shifted.
    pub fn plan(&self, sit: &Situation, robot_control: &Control, warm: Option<&[Control]>) -> Vec<Control> {
        let k = self.budget.horizon.min(sit.horizon());
        let bx = &sit.setup.human_box;
        let robot: Vec<Control<Dual<f64>>> = vec![sit.setup.robot_box.clamp(*robot_control).lift(); k];
        let init = match warm {
            Some(w) if w.len() >= k => w[..k].iter().map(|c| bx.clamp(*c)).collect(),
            _ => predict_naive(&sit.state.human, sit.setup.dynamics.friction, bx, k).controls,
        };
        let objective = |uh: &[Dual<f64>]| sit.horizon_reward(Agent::Human, &robot, &unflatten(uh));
        match gd_maximize(objective, &flatten(&init), &self.budget, &bx.bounds(k)) {
            Ok(a) => unflatten(&a.point),
            Err(_) => init,
        }
    }

    pub fn act(&self, sit: &Situation, robot_control: &Control, warm: Option<&[Control]>) -> Control {
        self.plan(sit, robot_control, warm)[0]
    }
}

/// A plan advanced by one step, last control repeated.
pub fn shift_plan(u: &[Control]) -> Vec<Control> {
    let mut out: Vec<Control> = u.iter().skip(1).copied().collect();
    if let Some(last) = u.last() {
        out.push(*last);
    }
    out
}
