//! Static planning configuration and the per-timestep view built from it.

use serde::{Deserialize, Serialize};

use crate::diffopt::{Dual, OptBudget, Scalar};
use crate::dynamics::{traffic_forecast, Control, ControlBox, DynamicsParams, JointState, Route, State};
use crate::reward::{Agent, Environment, FeatureWeights, RewardSpec};

/// Everything that stays fixed over an episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Setup {
    pub env: Environment,
    pub dynamics: DynamicsParams,
    pub robot_weights: FeatureWeights,
    pub human_weights: FeatureWeights,
    pub robot_box: ControlBox,
    pub human_box: ControlBox,
    pub budget: OptBudget,
}

/// The world at one timestep, as seen by the planner.
#[derive(Clone, Debug)]
pub struct Situation<'a> {
    pub setup: &'a Setup,
    pub state: JointState,
    /// Scripted traffic over the planning horizon, `traffic[τ][car]`.
    pub traffic: Vec<Vec<State>>,
    /// Dynamics used inside planning (smooth speed floor).
    pub params: DynamicsParams,
}

impl<'a> Situation<'a> {
    pub fn new(setup: &'a Setup, state: JointState, routes: &[Route], t: usize) -> Self {
        let params = setup.dynamics.for_planning();
        let traffic = traffic_forecast(&state.others, routes, t, setup.budget.horizon, &setup.dynamics);
        Self {
            setup,
            state,
            traffic,
            params,
        }
    }

    pub fn horizon(&self) -> usize {
        self.setup.budget.horizon
    }

    pub fn spec(&self, who: Agent) -> RewardSpec<'_> {
        RewardSpec {
            env: &self.setup.env,
            weights: match who {
                Agent::Robot => &self.setup.robot_weights,
                Agent::Human => &self.setup.human_weights,
            },
            who,
            params: &self.params,
        }
    }

    /// Horizon reward of `who` for the given control sequences.
    pub fn horizon_reward<T: Scalar>(&self, who: Agent, robot: &[Control<T>], human: &[Control<T>]) -> T {
        self.spec(who)
            .horizon(self.state.robot.lift(), self.state.human.lift(), robot, human, &self.traffic)
    }

    /// One-step reward of `who` from the current state.
    pub fn step_reward<T: Scalar>(&self, who: Agent, robot: &Control<T>, human: &Control<T>) -> T {
        let (_, _, r) = self.spec(who).step(
            &self.state.robot.lift(),
            &self.state.human.lift(),
            robot,
            human,
            &self.traffic[1],
        );
        r
    }
}

pub(crate) fn lift_controls<T: Scalar>(u: &[Control<T>]) -> Vec<Control<Dual<T>>> {
    u.iter()
        .map(|c| Control {
            steer: Dual::lift(c.steer),
            accel: Dual::lift(c.accel),
        })
        .collect()
}
