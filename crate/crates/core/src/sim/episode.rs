//! Closed-loop episodes: plan, act, let the human respond, advance, decide.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dynamics::{advance, step, Control, JointState, State};
use crate::models::{ModelKind, ModelSpec};
use crate::planner::{plan, Plan, WarmStart};
use crate::reward::{reward_step, Agent};
use crate::scene::Situation;
use crate::switcher::{MetaRewardRecord, SwitchEvaluation, Switcher, SwitcherConfig};

use super::human::{shift_plan, SimulatedHuman};
use super::scenario::ScenarioConfig;
use super::SimError;

/// How the robot picks its human model.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "snake_case")]
pub enum Method {
    Fixed { model: ModelKind },
    Switcher { lambda: f64 },
}

impl Method {
    pub fn label(&self) -> String {
        self.to_string()
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::Fixed { model } => write!(f, "{model}"),
            Method::Switcher { lambda } => write!(f, "switcher@{lambda}"),
        }
    }
}

impl FromStr for Method {
    type Err = SimError;
    /// `naive`, `turn`, `tom`, or `switcher@<lambda>`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        if let Some(rest) = s.strip_prefix("switcher@") {
            let lambda: f64 = rest.parse().map_err(|_| SimError::Config(format!("bad lambda in '{s}'")))?;
            return Ok(Method::Switcher { lambda });
        }
        let model = s.parse().map_err(|_| SimError::Config(format!("unknown method '{s}'")))?;
        Ok(Method::Fixed { model })
    }
}

/// One row of an episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: usize,
    /// State the step started from.
    pub state: JointState,
    pub model: ModelSpec,
    pub u_robot: Control,
    pub u_human: Control,
    pub meta: MetaRewardRecord,
    pub planning_seconds: f64,
    pub decision_seconds: f64,
    pub evaluation: Option<SwitchEvaluation>,
    pub plan_error: Option<String>,
    /// Smallest footprint gap from the robot to any other car after the step;
    /// negative means contact.
    pub min_gap: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeLog {
    pub scenario: String,
    pub seed: u64,
    pub method: Method,
    pub steps: Vec<StepRecord>,
    pub final_state: JointState,
    pub total_reward: f64,
    pub total_r_meta: f64,
    pub planning_seconds: f64,
    pub decision_seconds: f64,
    /// Steps that ended with the robot's footprint touching another car.
    pub collisions: usize,
    pub failed: Option<String>,
}

impl EpisodeLog {
    /// Fraction of steps planned with each rung of a ladder of `rungs` models.
    pub fn usage(&self, rungs: usize) -> Vec<f64> {
        let mut counts = vec![0.0; rungs];
        for s in &self.steps {
            if s.model.rung < rungs {
                counts[s.model.rung] += 1.0;
            }
        }
        let n = self.steps.len().max(1) as f64;
        counts.iter().map(|c| c / n).collect()
    }

    /// Robot and human states after every step, starting with the initial one.
    pub fn trajectory(&self) -> Vec<JointState> {
        let mut out: Vec<JointState> = self.steps.iter().map(|s| s.state.clone()).collect();
        out.push(self.final_state.clone());
        out
    }
}

/// What an observer sees at the end of each step.
pub struct StepContext<'a> {
    pub t: usize,
    pub cfg: &'a ScenarioConfig,
    pub situation: &'a Situation<'a>,
    pub plan: &'a Plan,
    /// Warm start the planner was given this step.
    pub warm: Option<&'a WarmStart>,
    /// Warm start the simulated human was given this step.
    pub human_warm: Option<&'a [Control]>,
    pub human: &'a SimulatedHuman,
    pub observed_u_human: Control,
    pub current: ModelSpec,
    pub lambda: f64,
    pub evaluation: Option<&'a SwitchEvaluation>,
}

pub fn run_episode(cfg: &ScenarioConfig, method: Method) -> Result<EpisodeLog, SimError> {
    run_episode_observed(cfg, method, |_| {})
}

/// [`run_episode`] with a callback invoked after every step.
pub fn run_episode_observed<F>(cfg: &ScenarioConfig, method: Method, mut observer: F) -> Result<EpisodeLog, SimError>
where
    F: FnMut(&StepContext),
{
    cfg.validate()?;
    let ladder = cfg.model_ladder()?;
    let (mut switcher, fixed) = match method {
        Method::Fixed { model } => {
            let spec = *ladder
                .rungs()
                .iter()
                .find(|m| m.kind == model)
                .ok_or_else(|| SimError::Config(format!("model {model} is not on this scenario's ladder")))?;
            (None, Some(spec))
        }
        Method::Switcher { lambda } => {
            let sc = SwitcherConfig::with_lambda(lambda);
            sc.validate()?;
            (Some(Switcher::new(ladder.clone(), sc)), None)
        }
    };
    let lambda = switcher.as_ref().map_or(0.0, |s| s.cfg.lambda);
    let setup = &cfg.setup;
    let routes = cfg.routes();
    let human = SimulatedHuman::new(cfg.human_budget);
    let reward_spec = crate::reward::RewardSpec {
        env: &setup.env,
        weights: &setup.robot_weights,
        who: Agent::Robot,
        params: &setup.dynamics,
    };

    let mut state = cfg.initial_state();
    let mut warm: Option<WarmStart> = None;
    let mut human_warm: Option<Vec<Control>> = None;
    let mut steps = Vec::with_capacity(cfg.steps);
    let mut failed = None;

    for t in 0..cfg.steps {
        let model = fixed.unwrap_or_else(|| *switcher.as_ref().unwrap().current());
        let sit = Situation::new(setup, state.clone(), &routes, t);
        let p = plan(&sit, &model, warm.as_ref());
        if let Some(e) = &p.error {
            failed.get_or_insert_with(|| format!("step {t}: {e}"));
        }
        let u_robot = p.robot[0];
        let human_plan = human.plan(&sit, &u_robot, human_warm.as_deref());
        let u_human = human_plan[0];

        let traffic_controls: Vec<Control> = routes.iter().map(|r| r.at(t)).collect();
        let reward = reward_step(&state, &u_robot, &u_human, &traffic_controls, &reward_spec)?;
        let next = JointState {
            robot: step(&state.robot, &u_robot, &setup.dynamics)?,
            human: step(&state.human, &u_human, &setup.dynamics)?,
            others: state
                .others
                .iter()
                .zip(&traffic_controls)
                .map(|(s, u)| advance(s, u, &setup.dynamics))
                .collect(),
        };

        let started = Instant::now();
        let evaluation = switcher.as_mut().map(|sw| sw.observe(&sit, &p, &u_human));
        let decision_seconds = if switcher.is_some() {
            started.elapsed().as_secs_f64()
        } else {
            0.0
        };

        observer(&StepContext {
            t,
            cfg,
            situation: &sit,
            plan: &p,
            warm: warm.as_ref(),
            human_warm: human_warm.as_deref(),
            human: &human,
            observed_u_human: u_human,
            current: model,
            lambda,
            evaluation: evaluation.as_ref(),
        });

        let min_gap = std::iter::once(&next.human)
            .chain(&next.others)
            .map(|o: &State| setup.env.footprint_gap(&next.robot, o))
            .fold(f64::INFINITY, f64::min);
        steps.push(StepRecord {
            t,
            state: state.clone(),
            model,
            u_robot,
            u_human,
            meta: MetaRewardRecord::new(reward, model, lambda),
            planning_seconds: p.planning_seconds,
            decision_seconds,
            evaluation,
            plan_error: p.error.clone(),
            min_gap,
        });
        warm = Some(p.shifted());
        human_warm = Some(shift_plan(&human_plan));
        state = next;
    }

    let collisions = steps
        .iter()
        .filter(|s| s.min_gap < 0.0)
        .count();
    Ok(EpisodeLog {
        scenario: cfg.kind.to_string(),
        seed: cfg.seed,
        method,
        total_reward: steps.iter().map(|s| s.meta.reward).sum(),
        total_r_meta: steps.iter().map(|s| s.meta.r_meta).sum(),
        planning_seconds: steps.iter().map(|s| s.planning_seconds).sum(),
        decision_seconds: steps.iter().map(|s| s.decision_seconds).sum(),
        collisions,
        failed,
        final_state: state,
        steps,
    })
}
