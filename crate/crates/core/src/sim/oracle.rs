//! Exact one-step check of switch-up decisions: plan with the top model,
//! let the simulated human answer that plan, and compare realized rewards.

use serde::{Deserialize, Serialize};

use crate::planner::plan;
use crate::reward::Agent;
use crate::switcher::Decision;

use super::episode::{run_episode_observed, Method, StepContext};
use super::scenario::ScenarioConfig;
use super::SimError;

/// One up/stay decision next to its exact counterpart.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct OracleSample {
    pub t: usize,
    pub rung: usize,
    /// The switcher's estimated Δr_meta.
    pub estimated: f64,
    /// Realized Δr_meta had the robot planned with the top model.
    pub exact: f64,
    pub decided_up: bool,
}

impl OracleSample {
    pub fn oracle_up(&self) -> bool {
        self.exact > 0.0
    }

    pub fn agrees(&self) -> bool {
        self.decided_up == self.oracle_up()
    }
}

/// Realized Δr_meta of switching to the top rung at this step, or `None`
/// when the step did not run an up check.
pub fn exact_up_gain(ctx: &StepContext) -> Option<(f64, bool)> {
    let eval = ctx.evaluation?;
    let ladder = ctx.cfg.model_ladder().ok()?;
    let top = *ladder.top();
    let cand = eval.candidate?;
    if cand.rung != top.rung || ctx.current.rung >= top.rung {
        return None;
    }
    let sit = ctx.situation;
    let alt = plan(sit, &top, ctx.warm);
    let u_alt = alt.robot[0];
    let uh_alt = ctx.human.plan(sit, &u_alt, ctx.human_warm)[0];
    let r_alt = sit.step_reward(Agent::Robot, &u_alt, &uh_alt);
    let r_cur = sit.step_reward(Agent::Robot, &ctx.plan.robot[0], &ctx.observed_u_human);
    let exact = (r_alt - ctx.lambda * top.time_cost) - (r_cur - ctx.lambda * ctx.current.time_cost);
    Some((exact, eval.decision == Decision::Up))
}

/// Run a switcher episode and pair every up check with the exact oracle.
pub fn oracle_probe(cfg: &ScenarioConfig, lambda: f64) -> Result<Vec<OracleSample>, SimError> {
    let mut out = Vec::new();
    run_episode_observed(cfg, Method::Switcher { lambda }, |ctx| {
        if let Some((exact, decided_up)) = exact_up_gain(ctx) {
            out.push(OracleSample {
                t: ctx.t,
                rung: ctx.current.rung,
                estimated: ctx.evaluation.map_or(0.0, |e| e.delta_r_meta),
                exact,
                decided_up,
            });
        }
    })?;
    Ok(out)
}
