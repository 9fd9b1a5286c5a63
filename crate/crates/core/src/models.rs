//! The ladder of human predictors.
//!
//! * `Naive`: constant heading and speed.
//! * `Turn`: the human optimizes their own reward against a robot that is
//!   imagined to hold its velocity.
//! * `ToM`: the human best-responds to the robot's actual plan. The response
//!   is a fixed number of ascent steps, so it is a smooth function of the
//!   robot plan and can be differentiated through.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::diffopt::{ascend, gd_maximize, DiffOptError, Dual, Scalar};
use crate::dynamics::{flatten, unflatten, Control, ControlBox, State};
use crate::reward::Agent;
use crate::scene::{lift_controls, Situation};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ModelError {
    #[error(transparent)]
    Optimizer(#[from] DiffOptError),
    #[error("robot plan has {got} controls, horizon is {expected}")]
    Horizon { expected: usize, got: usize },
    #[error("invalid ladder: {0}")]
    Ladder(String),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum ModelKind {
    Naive,
    Turn,
    ToM,
}

impl ModelKind {
    /// Nominal cost multiple of a Naive plan.
    pub fn cost_ratio(self) -> f64 {
        match self {
            ModelKind::Naive => 1.0,
            ModelKind::Turn => 2.0,
            ModelKind::ToM => 4.0,
        }
    }

    /// Whether the prediction depends on the robot's plan.
    pub fn responsive(self) -> bool {
        matches!(self, ModelKind::ToM)
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ModelKind::Naive => "naive",
            ModelKind::Turn => "turn",
            ModelKind::ToM => "tom",
        })
    }
}

impl FromStr for ModelKind {
    type Err = ModelError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "naive" => Ok(ModelKind::Naive),
            "turn" => Ok(ModelKind::Turn),
            "tom" => Ok(ModelKind::ToM),
            other => Err(ModelError::Ladder(format!("unknown model '{other}'"))),
        }
    }
}

/// One rung of the ladder.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub kind: ModelKind,
    /// Nominal planning time T(M) in seconds.
    pub time_cost: f64,
    pub rung: usize,
}

pub fn nominal_cost(m: &ModelSpec) -> f64 {
    m.time_cost
}

/// Ordered set of models, cheapest first.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Ladder {
    rungs: Vec<ModelSpec>,
}

impl Ladder {
    /// Rungs with nominal costs `cost_ratio · t_base`.
    pub fn nominal(kinds: &[ModelKind], t_base: f64) -> Result<Self, ModelError> {
        Self::new(
            kinds
                .iter()
                .enumerate()
                .map(|(rung, kind)| ModelSpec {
                    kind: *kind,
                    time_cost: kind.cost_ratio() * t_base,
                    rung,
                })
                .collect(),
        )
    }

    pub fn new(rungs: Vec<ModelSpec>) -> Result<Self, ModelError> {
        if rungs.is_empty() {
            return Err(ModelError::Ladder("ladder is empty".into()));
        }
        for (i, m) in rungs.iter().enumerate() {
            if m.rung != i {
                return Err(ModelError::Ladder(format!("rung {} listed at position {i}", m.rung)));
            }
            if !(m.time_cost > 0.0 && m.time_cost.is_finite()) {
                return Err(ModelError::Ladder(format!("{} has non-positive cost", m.kind)));
            }
            if i > 0 && m.time_cost <= rungs[i - 1].time_cost {
                return Err(ModelError::Ladder("costs must strictly increase up the ladder".into()));
            }
        }
        Ok(Self { rungs })
    }

    pub fn rungs(&self) -> &[ModelSpec] {
        &self.rungs
    }

    pub fn len(&self) -> usize {
        self.rungs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rungs.is_empty()
    }

    pub fn top(&self) -> &ModelSpec {
        self.rungs.last().unwrap()
    }

    pub fn get(&self, rung: usize) -> &ModelSpec {
        &self.rungs[rung]
    }
}

/// Predicted human control sequence.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub controls: Vec<Control>,
    pub responsive: bool,
}

/// Control that keeps a car's heading and speed under the friction model.
pub fn hold_velocity(s: &State, friction: f64, bx: &ControlBox) -> Control {
    bx.clamp(Control::new(0.0, friction * s.speed))
}

pub fn predict_naive(human: &State, friction: f64, bx: &ControlBox, horizon: usize) -> Prediction {
    Prediction {
        controls: vec![hold_velocity(human, friction, bx); horizon],
        responsive: false,
    }
}

fn naive_human(sit: &Situation) -> Vec<Control> {
    predict_naive(&sit.state.human, sit.setup.dynamics.friction, &sit.setup.human_box, sit.horizon()).controls
}

/// Human plan against a robot that holds its current velocity.
pub fn predict_turn(sit: &Situation) -> Result<Prediction, ModelError> {
    let k = sit.horizon();
    let robot = predict_naive(&sit.state.robot, sit.setup.dynamics.friction, &sit.setup.robot_box, k).controls;
    let robot_d: Vec<Control<Dual<f64>>> = robot.iter().map(|c| c.lift()).collect();
    let objective = |uh: &[Dual<f64>]| sit.horizon_reward(Agent::Human, &robot_d, &unflatten(uh));
    let init = flatten(&naive_human(sit));
    let res = gd_maximize(objective, &init, &sit.setup.budget, &sit.setup.human_box.bounds(k))?;
    Ok(Prediction {
        controls: unflatten(&res.point),
        responsive: false,
    })
}

/// Human best response to `robot_plan`, generic over the scalar type so that
/// the response can be differentiated with respect to the robot plan.
pub fn tom_response<T: Scalar>(sit: &Situation, robot_plan: &[Control<T>]) -> Vec<Control<T>> {
    let k = sit.horizon();
    let robot_d = lift_controls(robot_plan);
    let objective = |uh: &[Dual<T>]| sit.horizon_reward(Agent::Human, &robot_d, &unflatten(uh));
    let init: Vec<T> = flatten(&naive_human(sit)).iter().map(|v| T::cst(*v)).collect();
    let budget = &sit.setup.budget;
    let out = ascend(objective, init, budget.steps, budget.learn_rate, &sit.setup.human_box.bounds(k));
    unflatten(&out)
}

pub fn predict_tom(sit: &Situation, robot_plan: &[Control]) -> Result<Prediction, ModelError> {
    if robot_plan.len() != sit.horizon() {
        return Err(ModelError::Horizon {
            expected: sit.horizon(),
            got: robot_plan.len(),
        });
    }
    let controls = tom_response(sit, robot_plan);
    if controls.iter().any(|c| !c.steer.is_finite() || !c.accel.is_finite()) {
        return Err(DiffOptError::NonFinite {
            iteration: sit.setup.budget.steps,
            value: f64::NAN,
        }
        .into());
    }
    Ok(Prediction {
        controls,
        responsive: true,
    })
}

/// Prediction of model `kind` given the robot's current plan.
pub fn predict(kind: ModelKind, sit: &Situation, robot_plan: &[Control]) -> Result<Prediction, ModelError> {
    match kind {
        ModelKind::Naive => Ok(Prediction {
            controls: naive_human(sit),
            responsive: false,
        }),
        ModelKind::Turn => predict_turn(sit),
        ModelKind::ToM => predict_tom(sit, robot_plan),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn naive_holds_speed() {
        let bx = ControlBox::default();
        let p = predict_naive(&State::new(0.0, 0.0, 0.0, 2.0), 0.1, &bx, 5);
        assert_eq!(p.controls.len(), 5);
        assert!(!p.responsive);
        for c in &p.controls {
            assert_eq!(c.steer, 0.0);
            assert!((c.accel - 0.2).abs() < 1e-15);
        }
        let p0 = predict_naive(&State::new(0.0, 0.0, 0.3, 7.0), 0.0, &bx, 3);
        assert!(p0.controls.iter().all(|c| *c == Control::ZERO));
    }

    #[test]
    fn nominal_ladder_costs() {
        let l = Ladder::nominal(&[ModelKind::Naive, ModelKind::Turn, ModelKind::ToM], 0.5).unwrap();
        assert_eq!(nominal_cost(l.get(0)), 0.5);
        assert_eq!(nominal_cost(l.get(1)), 1.0);
        assert_eq!(nominal_cost(l.get(2)), 2.0);
        assert_eq!(l.top().kind, ModelKind::ToM);
    }

    #[test]
    fn ladder_rejects_bad_ordering() {
        let bad = vec![
            ModelSpec {
                kind: ModelKind::Turn,
                time_cost: 2.0,
                rung: 0,
            },
            ModelSpec {
                kind: ModelKind::Naive,
                time_cost: 1.0,
                rung: 1,
            },
        ];
        assert!(Ladder::new(bad).is_err());
        assert!(Ladder::new(vec![]).is_err());
        assert!(Ladder::nominal(&[ModelKind::Naive], 0.0).is_err());
    }

    #[test]
    fn kind_parses_case_insensitively() {
        assert_eq!("ToM".parse::<ModelKind>().unwrap(), ModelKind::ToM);
        assert_eq!("NAIVE".parse::<ModelKind>().unwrap(), ModelKind::Naive);
        assert!("oracle".parse::<ModelKind>().is_err());
    }
}
