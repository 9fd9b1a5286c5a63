//! Scenario presets and their per-seed initial conditions.

use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diffopt::OptBudget;
use crate::dynamics::{ControlBox, DynamicsParams, JointState, Route, State};
use crate::models::{Ladder, ModelKind};
use crate::reward::{Cone, Environment, Feature, FeatureWeights};
use crate::scene::Setup;

use super::SimError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    StayBack,
    Merger,
    GiveWay,
}

impl ScenarioKind {
    pub const ALL: [ScenarioKind; 3] = [ScenarioKind::StayBack, ScenarioKind::Merger, ScenarioKind::GiveWay];
}

impl fmt::Display for ScenarioKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ScenarioKind::StayBack => "stay_back",
            ScenarioKind::Merger => "merger",
            ScenarioKind::GiveWay => "give_way",
        })
    }
}

impl FromStr for ScenarioKind {
    type Err = SimError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().replace('-', "_").as_str() {
            "stay_back" | "stayback" => Ok(ScenarioKind::StayBack),
            "merger" | "merge" => Ok(ScenarioKind::Merger),
            "give_way" | "giveway" => Ok(ScenarioKind::GiveWay),
            other => Err(SimError::UnknownScenario(other.to_string())),
        }
    }
}

/// Uniform half-ranges applied to a starting state.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Jitter {
    pub x: f64,
    pub y: f64,
    pub speed: f64,
}

/// A scripted car: where it starts and the controls it replays.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrafficCar {
    pub start: State,
    pub route: Route,
}

/// Everything needed to run one episode.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub kind: ScenarioKind,
    pub seed: u64,
    /// Episode length in steps.
    pub steps: usize,
    pub setup: Setup,
    pub robot: State,
    pub human: State,
    pub robot_jitter: Jitter,
    pub human_jitter: Jitter,
    #[serde(default)]
    pub traffic: Vec<TrafficCar>,
    /// Optimization budget of the simulated human.
    pub human_budget: OptBudget,
    pub ladder: Vec<ModelKind>,
    /// Nominal planning time of the cheapest model (s).
    pub t_base: f64,
    pub lambda_conservative: f64,
    pub lambda_aggressive: f64,
}

impl ScenarioConfig {
    /// Starting state for this seed.
    pub fn initial_state(&self) -> JointState {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        let mut jitter = |s: &State, j: &Jitter| {
            let mut d = [0.0; 3];
            for (v, h) in d.iter_mut().zip([j.x, j.y, j.speed]) {
                let u: f64 = rng.gen_range(-1.0..=1.0);
                *v = u * h;
            }
            State::new(s.x + d[0], s.y + d[1], s.heading, (s.speed + d[2]).max(0.0))
        };
        let robot = jitter(&self.robot, &self.robot_jitter);
        let human = jitter(&self.human, &self.human_jitter);
        JointState {
            robot,
            human,
            others: self.traffic.iter().map(|c| c.start).collect(),
        }
    }

    pub fn routes(&self) -> Vec<Route> {
        self.traffic.iter().map(|c| c.route.clone()).collect()
    }

    pub fn model_ladder(&self) -> Result<Ladder, SimError> {
        Ok(Ladder::nominal(&self.ladder, self.t_base)?)
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: &str| Err(SimError::Config(m.to_string()));
        if self.steps == 0 {
            return bad("episode needs at least one step");
        }
        if !(self.t_base > 0.0) {
            return bad("t_base must be positive");
        }
        self.setup.env.validate()?;
        self.setup.dynamics.validate()?;
        self.setup.robot_weights.validate()?;
        self.setup.human_weights.validate()?;
        self.setup.budget.validate()?;
        self.human_budget.validate()?;
        self.model_ladder()?;
        let s = self.initial_state();
        let cars: Vec<&State> = std::iter::once(&s.robot).chain(std::iter::once(&s.human)).chain(&s.others).collect();
        for i in 0..cars.len() {
            for j in i + 1..cars.len() {
                if self.setup.env.footprint_gap(cars[i], cars[j]) < 0.0 {
                    return bad("initial states overlap");
                }
            }
        }
        Ok(())
    }

    /// Whether lateral coordinate `y` sits inside lane `lane`.
    pub fn in_lane(&self, y: f64, lane: usize) -> bool {
        let env = &self.setup.env;
        (y - env.lanes[lane]).abs() <= 0.25 * env.lane_width
    }
}

fn cruise_car(x: f64, y: f64, speed: f64, steps: usize, dyn_: &DynamicsParams) -> TrafficCar {
    TrafficCar {
        start: State::new(x, y, 0.0, speed),
        route: Route::cruise(speed, dyn_.friction, steps + 8),
    }
}

fn driver(pairs: &[(Feature, f64)]) -> FeatureWeights {
    let base = [
        (Feature::Progress, 1.0),
        (Feature::Overspeed, 10.0),
        (Feature::LaneLateral, 1.0),
        (Feature::Heading, 5.0),
        (Feature::CollisionAgent, 20.0),
        (Feature::CollisionTraffic, 20.0),
        (Feature::Cones, 20.0),
        (Feature::Boundary, 10.0),
        (Feature::Effort, 0.1),
    ];
    let mut w = FeatureWeights::from_pairs(&base);
    for (f, v) in pairs {
        w.0[f.index()] = *v;
    }
    w
}

/// Preset configuration for `kind` with the given seed.
pub fn build_scenario(kind: ScenarioKind, seed: u64) -> ScenarioConfig {
    let dynamics = DynamicsParams::default();
    let budget = OptBudget::default();
    let full = [ModelKind::Naive, ModelKind::Turn, ModelKind::ToM];
    match kind {
        ScenarioKind::StayBack => {
            let steps = 100;
            let env = Environment {
                cones: (0..6)
                    .map(|i| Cone {
                        x: 40.0 + 4.0 * i as f64,
                        y: 4.3,
                        radius: 1.0,
                    })
                    .collect(),
                road_min_y: -0.6,
                ..Environment::default()
            };
            ScenarioConfig {
                kind,
                seed,
                steps,
                setup: Setup {
                    env,
                    dynamics,
                    robot_weights: driver(&[]),
                    human_weights: driver(&[
                        (Feature::Progress, 5.0),
                        (Feature::CollisionAgent, 1.0),
                        (Feature::Cones, 40.0),
                    ]),
                    robot_box: ControlBox::default(),
                    human_box: ControlBox::default(),
                    budget,
                },
                robot: State::new(0.0, 0.0, 0.0, 8.0),
                human: State::new(0.0, 4.0, 0.0, 8.0),
                robot_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                human_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                traffic: vec![],
                human_budget: budget,
                ladder: vec![ModelKind::Naive, ModelKind::Turn],
                t_base: 3e-6,
                lambda_conservative: 0.4,
                lambda_aggressive: 5.0,
            }
        }
        ScenarioKind::Merger => {
            let steps = 150;
            let env = Environment {
                robot_goal_lane: 1,
                human_goal_lane: 1,
                ..Environment::default()
            };
            ScenarioConfig {
                kind,
                seed,
                steps,
                setup: Setup {
                    env,
                    dynamics,
                    robot_weights: driver(&[(Feature::Heading, 2.0), (Feature::GoalLane, 7.7), (Feature::CollisionAgent, 10.0)]),
                    human_weights: driver(&[(Feature::LaneLateral, 10.0), (Feature::CollisionAgent, 120.0)]),
                    robot_box: ControlBox::default(),
                    human_box: ControlBox::default(),
                    budget,
                },
                robot: State::new(3.0, 0.0, 0.0, 8.0),
                human: State::new(0.0, 4.0, 0.0, 8.0),
                robot_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                human_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                traffic: vec![cruise_car(14.0, 4.0, 8.0, steps, &dynamics), cruise_car(-10.0, 4.0, 8.0, steps, &dynamics)],
                human_budget: budget,
                ladder: full.to_vec(),
                t_base: 0.01,
                lambda_conservative: 0.1,
                lambda_aggressive: 0.2,
            }
        }
        ScenarioKind::GiveWay => {
            let steps = 60;
            let env = Environment {
                robot_goal_lane: 0,
                human_goal_lane: 0,
                ..Environment::default()
            };
            ScenarioConfig {
                kind,
                seed,
                steps,
                setup: Setup {
                    env,
                    dynamics,
                    robot_weights: driver(&[(Feature::OtherGoalLane, 100.0)]),
                    human_weights: driver(&[(Feature::GoalLane, 10.0)]),
                    robot_box: ControlBox::default(),
                    human_box: ControlBox::default(),
                    budget,
                },
                robot: State::new(0.0, 0.0, 0.0, 8.0),
                human: State::new(-5.0, 4.0, 0.0, 8.0),
                robot_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                human_jitter: Jitter {
                    x: 1.0,
                    y: 0.0,
                    speed: 0.3,
                },
                traffic: vec![
                    cruise_car(24.0, 0.0, 8.0, steps, &dynamics),
                    cruise_car(-30.0, 0.0, 8.0, steps, &dynamics),
                    cruise_car(12.0, 4.0, 7.0, steps, &dynamics),
                ],
                human_budget: budget,
                ladder: full.to_vec(),
                t_base: 1.0,
                lambda_conservative: 0.01,
                lambda_aggressive: 0.03,
            }
        }
    }
}
