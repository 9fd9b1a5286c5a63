//! Batches of episodes, their on-disk logs and the summaries computed from
//! them.
//!
//! Every statistic is computed from [`LogRow`]s, the same records written to
//! the per-episode CSV files, so re-summarizing persisted logs reproduces the
//! in-memory summary exactly.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::models::ModelKind;
use crate::planner::plan;
use crate::scene::Situation;
use crate::sim::{run_episode, EpisodeLog, Method, ScenarioConfig, SimError};
use crate::switcher::Decision;

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// CSV columns holding wall-clock measurements.
pub const TIMING_COLUMNS: [&str; 2] = ["planning_seconds", "decision_seconds"];

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error("experiment needs at least one seed")]
    NoSeeds,
    #[error("experiment needs at least one method")]
    NoMethods,
    #[error("no logs to summarize")]
    Empty,
    #[error("every episode of method {0} failed")]
    MethodFailed(String),
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
    #[error("bad log file {path}: {reason}")]
    BadLog { path: PathBuf, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentSpec {
    /// Scenario template; each seed overrides its `seed` field.
    pub scenario: ScenarioConfig,
    pub methods: Vec<Method>,
    pub seeds: Vec<u64>,
    pub out_dir: Option<PathBuf>,
    /// Worker threads; 0 lets the pool decide.
    pub workers: usize,
}

impl ExperimentSpec {
    pub fn new(scenario: ScenarioConfig, methods: Vec<Method>, seed_count: u64) -> Self {
        Self {
            scenario,
            methods,
            seeds: (0..seed_count).collect(),
            out_dir: None,
            workers: 0,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        if self.seeds.is_empty() {
            return Err(ExperimentError::NoSeeds);
        }
        if self.methods.is_empty() {
            return Err(ExperimentError::NoMethods);
        }
        self.scenario.validate()?;
        Ok(())
    }
}

/// One CSV row of an episode log.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LogRow {
    pub scenario: String,
    pub method: String,
    pub seed: u64,
    pub t: usize,
    pub model: ModelKind,
    pub rung: usize,
    pub robot_x: f64,
    pub robot_y: f64,
    pub robot_heading: f64,
    pub robot_speed: f64,
    pub human_x: f64,
    pub human_y: f64,
    pub human_heading: f64,
    pub human_speed: f64,
    pub robot_steer: f64,
    pub robot_accel: f64,
    pub human_steer: f64,
    pub human_accel: f64,
    pub reward: f64,
    pub time_cost: f64,
    pub r_meta: f64,
    pub min_gap: f64,
    pub candidate: Option<ModelKind>,
    pub decision: Option<Decision>,
    pub delta_u_steer: Option<f64>,
    pub delta_u_accel: Option<f64>,
    pub r_hat: Option<f64>,
    pub r_current: Option<f64>,
    pub delta_r_meta: Option<f64>,
    pub plan_error: Option<String>,
    pub planning_seconds: f64,
    pub decision_seconds: f64,
}

pub fn log_rows(log: &EpisodeLog) -> Vec<LogRow> {
    let method = log.method.label();
    log.steps
        .iter()
        .map(|s| {
            let ev = s.evaluation.as_ref().filter(|e| e.candidate.is_some());
            LogRow {
                scenario: log.scenario.clone(),
                method: method.clone(),
                seed: log.seed,
                t: s.t,
                model: s.model.kind,
                rung: s.model.rung,
                robot_x: s.state.robot.x,
                robot_y: s.state.robot.y,
                robot_heading: s.state.robot.heading,
                robot_speed: s.state.robot.speed,
                human_x: s.state.human.x,
                human_y: s.state.human.y,
                human_heading: s.state.human.heading,
                human_speed: s.state.human.speed,
                robot_steer: s.u_robot.steer,
                robot_accel: s.u_robot.accel,
                human_steer: s.u_human.steer,
                human_accel: s.u_human.accel,
                reward: s.meta.reward,
                time_cost: s.meta.time_cost,
                r_meta: s.meta.r_meta,
                min_gap: s.min_gap,
                candidate: ev.and_then(|e| e.candidate.map(|c| c.kind)),
                decision: ev.map(|e| e.decision),
                delta_u_steer: ev.map(|e| e.delta_u.steer),
                delta_u_accel: ev.map(|e| e.delta_u.accel),
                r_hat: ev.map(|e| e.r_hat),
                r_current: ev.map(|e| e.r_current),
                delta_r_meta: ev.map(|e| e.delta_r_meta),
                plan_error: s.plan_error.clone(),
                planning_seconds: s.planning_seconds,
                decision_seconds: s.decision_seconds,
            }
        })
        .collect()
}

/// Per-episode totals derived from rows.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeSummary {
    pub method: String,
    pub seed: u64,
    pub steps: usize,
    pub total_reward: f64,
    pub total_r_meta: f64,
    pub planning_seconds: f64,
    pub decision_seconds: f64,
    /// Steps planned with each rung.
    pub rung_steps: Vec<usize>,
    pub collisions: usize,
    /// First step at which the robot is in its goal lane.
    pub robot_goal_step: Option<usize>,
    /// First step at which the human is in their goal lane.
    pub human_goal_step: Option<usize>,
    pub failed: bool,
}

pub fn summarize_episode(cfg: &ScenarioConfig, rows: &[LogRow]) -> EpisodeSummary {
    let env = &cfg.setup.env;
    let mut rung_steps = vec![0; cfg.ladder.len()];
    for r in rows {
        if r.rung < rung_steps.len() {
            rung_steps[r.rung] += 1;
        }
    }
    let first = rows.first();
    EpisodeSummary {
        method: first.map(|r| r.method.clone()).unwrap_or_default(),
        seed: first.map_or(0, |r| r.seed),
        steps: rows.len(),
        total_reward: rows.iter().map(|r| r.reward).sum(),
        total_r_meta: rows.iter().map(|r| r.r_meta).sum(),
        planning_seconds: rows.iter().map(|r| r.planning_seconds).sum(),
        decision_seconds: rows.iter().map(|r| r.decision_seconds).sum(),
        rung_steps,
        collisions: rows.iter().filter(|r| r.min_gap < 0.0).count(),
        robot_goal_step: rows.iter().find(|r| cfg.in_lane(r.robot_y, env.robot_goal_lane)).map(|r| r.t),
        human_goal_step: rows.iter().find(|r| cfg.in_lane(r.human_y, env.human_goal_lane)).map(|r| r.t),
        failed: rows.iter().any(|r| r.plan_error.is_some()),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub method: String,
    pub episodes: usize,
    pub failed_episodes: usize,
    pub mean_reward: f64,
    pub mean_r_meta: f64,
    pub mean_planning_seconds: f64,
    pub mean_decision_seconds: f64,
    /// Fraction of all steps planned with each rung.
    pub usage: Vec<f64>,
    pub collisions: usize,
    pub collision_episodes: usize,
    /// Fraction of episodes in which the robot reached its goal lane.
    pub robot_goal_rate: f64,
    /// Fraction of episodes in which the human reached their goal lane.
    pub human_goal_rate: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub schema_version: u32,
    pub scenario: String,
    pub ladder: Vec<ModelKind>,
    pub t_base: f64,
    pub methods: Vec<MethodSummary>,
    pub episodes: Vec<EpisodeSummary>,
}

impl Summary {
    pub fn method(&self, label: &str) -> Option<&MethodSummary> {
        self.methods.iter().find(|m| m.method == label)
    }
}

/// Summary over per-episode rows; methods keep their first-seen order.
pub fn summarize(cfg: &ScenarioConfig, episodes: &[Vec<LogRow>]) -> Result<Summary, ExperimentError> {
    if episodes.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let per_episode: Vec<EpisodeSummary> = episodes.iter().map(|rows| summarize_episode(cfg, rows)).collect();
    let mut order: Vec<String> = Vec::new();
    for e in &per_episode {
        if !order.contains(&e.method) {
            order.push(e.method.clone());
        }
    }
    let methods = order
        .iter()
        .map(|label| {
            let eps: Vec<&EpisodeSummary> = per_episode.iter().filter(|e| &e.method == label).collect();
            let n = eps.len() as f64;
            let total_steps: usize = eps.iter().map(|e| e.steps).sum();
            let mean = |f: &dyn Fn(&EpisodeSummary) -> f64| eps.iter().map(|e| f(e)).sum::<f64>() / n;
            let usage = (0..cfg.ladder.len())
                .map(|k| eps.iter().map(|e| e.rung_steps[k]).sum::<usize>() as f64 / total_steps.max(1) as f64)
                .collect();
            MethodSummary {
                method: label.clone(),
                episodes: eps.len(),
                failed_episodes: eps.iter().filter(|e| e.failed).count(),
                mean_reward: mean(&|e| e.total_reward),
                mean_r_meta: mean(&|e| e.total_r_meta),
                mean_planning_seconds: mean(&|e| e.planning_seconds),
                mean_decision_seconds: mean(&|e| e.decision_seconds),
                usage,
                collisions: eps.iter().map(|e| e.collisions).sum(),
                collision_episodes: eps.iter().filter(|e| e.collisions > 0).count(),
                robot_goal_rate: mean(&|e| e.robot_goal_step.is_some() as u8 as f64),
                human_goal_rate: mean(&|e| e.human_goal_step.is_some() as u8 as f64),
            }
        })
        .collect();
    Ok(Summary {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario: cfg.kind.to_string(),
        ladder: cfg.ladder.clone(),
        t_base: cfg.t_base,
        methods,
        episodes: per_episode,
    })
}

/// Run every (method, seed) episode. Logs come back sorted by method order
/// in the spec, then seed.
pub fn run_episodes(spec: &ExperimentSpec) -> Result<Vec<EpisodeLog>, ExperimentError> {
    spec.validate()?;
    // Seed-major order, so on few workers every method sees the same
    // machine conditions and compute times stay comparable.
    let jobs: Vec<(usize, Method, u64)> = spec
        .seeds
        .iter()
        .flat_map(|s| spec.methods.iter().enumerate().map(move |(i, m)| (i, *m, *s)))
        .collect();
    let run = || {
        jobs.par_iter()
            .map(|(i, m, seed)| {
                let cfg = ScenarioConfig {
                    seed: *seed,
                    ..spec.scenario.clone()
                };
                run_episode(&cfg, *m).map(|log| (*i, log))
            })
            .collect::<Result<Vec<_>, SimError>>()
    };
    let mut done = if spec.workers > 0 {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(spec.workers)
            .build()
            .map_err(|e| ExperimentError::Io(std::io::Error::other(e)))?;
        pool.install(run)?
    } else {
        run()?
    };
    done.sort_by_key(|(i, log)| (*i, log.seed));
    Ok(done.into_iter().map(|(_, log)| log).collect())
}

/// Run, summarize and, when `out_dir` is set, persist an experiment.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<(Summary, Vec<EpisodeLog>), ExperimentError> {
    let logs = run_episodes(spec)?;
    let rows: Vec<Vec<LogRow>> = logs.iter().map(log_rows).collect();
    let summary = summarize(&spec.scenario, &rows)?;
    if let Some(dir) = &spec.out_dir {
        persist(dir, spec, &rows, &summary, &logs)?;
    }
    if let Some(m) = summary.methods.iter().find(|m| m.failed_episodes == m.episodes) {
        return Err(ExperimentError::MethodFailed(m.method.clone()));
    }
    Ok((summary, logs))
}

fn persist(
    dir: &Path,
    spec: &ExperimentSpec,
    rows: &[Vec<LogRow>],
    summary: &Summary,
    logs: &[EpisodeLog],
) -> Result<(), ExperimentError> {
    let episodes = dir.join("episodes");
    fs::create_dir_all(&episodes)?;
    for r in rows {
        if let Some(first) = r.first() {
            write_rows(&episodes.join(episode_file_name(&first.method, first.seed)), r)?;
        }
    }
    fs::write(dir.join("scenario.toml"), toml::to_string(&spec.scenario).map_err(|e| std::io::Error::other(e))?)?;
    fs::write(dir.join("summary.json"), serde_json::to_string_pretty(summary)? + "\n")?;
    write_timeseries(&dir.join("timeseries.csv"), &emit_timeseries(logs)?)?;
    Ok(())
}

pub fn episode_file_name(method: &str, seed: u64) -> String {
    format!("{}_seed{:03}.csv", method.replace('@', "_"), seed)
}

pub fn write_rows(path: &Path, rows: &[LogRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows(path: &Path) -> Result<Vec<LogRow>, ExperimentError> {
    let mut r = csv::Reader::from_path(path)?;
    let rows = r.deserialize().collect::<Result<Vec<LogRow>, _>>()?;
    if rows.is_empty() {
        return Err(ExperimentError::BadLog {
            path: path.to_path_buf(),
            reason: "no rows".into(),
        });
    }
    Ok(rows)
}

/// Re-summarize an output directory written by [`run_experiment`].
pub fn replay(dir: &Path) -> Result<Summary, ExperimentError> {
    let text = fs::read_to_string(dir.join("scenario.toml"))?;
    let cfg: ScenarioConfig = toml::from_str(&text).map_err(|e| ExperimentError::BadLog {
        path: dir.join("scenario.toml"),
        reason: e.to_string(),
    })?;
    let mut files: Vec<PathBuf> = fs::read_dir(dir.join("episodes"))?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<_, _>>()?;
    files.retain(|p| p.extension().is_some_and(|e| e == "csv"));
    let mut episodes = files.iter().map(|p| read_rows(p)).collect::<Result<Vec<_>, _>>()?;
    // Restore the run order: methods as first listed in the summary, then seed.
    let order: Vec<String> = fs::read_to_string(dir.join("summary.json"))
        .ok()
        .and_then(|s| serde_json::from_str::<Summary>(&s).ok())
        .map(|s| s.methods.into_iter().map(|m| m.method).collect())
        .unwrap_or_default();
    let rank = |m: &str| order.iter().position(|o| o == m).unwrap_or(usize::MAX);
    episodes.sort_by(|a, b| {
        (rank(&a[0].method), &a[0].method, a[0].seed).cmp(&(rank(&b[0].method), &b[0].method, b[0].seed))
    });
    summarize(&cfg, &episodes)
}

/// Per-timestep averages across the episodes of one method.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeseriesRow {
    pub method: String,
    pub t: usize,
    pub episodes: usize,
    pub mean_planning_seconds: f64,
    pub mean_decision_seconds: f64,
    pub mean_reward: f64,
    /// Mean rung index in use, a fractional model trace.
    pub mean_rung: f64,
    /// Rung used by the lowest-seed episode.
    pub first_seed_rung: usize,
}

pub fn emit_timeseries(logs: &[EpisodeLog]) -> Result<Vec<TimeseriesRow>, ExperimentError> {
    if logs.is_empty() {
        return Err(ExperimentError::Empty);
    }
    let mut by_method: BTreeMap<(usize, String), Vec<&EpisodeLog>> = BTreeMap::new();
    let mut order: Vec<String> = Vec::new();
    for l in logs {
        let label = l.method.label();
        if !order.contains(&label) {
            order.push(label.clone());
        }
        let i = order.iter().position(|o| *o == label).unwrap();
        by_method.entry((i, label)).or_default().push(l);
    }
    let mut out = Vec::new();
    for ((_, label), mut eps) in by_method {
        eps.sort_by_key(|e| e.seed);
        let len = eps.iter().map(|e| e.steps.len()).max().unwrap_or(0);
        for t in 0..len {
            let at: Vec<_> = eps.iter().filter_map(|e| e.steps.get(t)).collect();
            let n = at.len() as f64;
            out.push(TimeseriesRow {
                method: label.clone(),
                t,
                episodes: at.len(),
                mean_planning_seconds: at.iter().map(|s| s.planning_seconds).sum::<f64>() / n,
                mean_decision_seconds: at.iter().map(|s| s.decision_seconds).sum::<f64>() / n,
                mean_reward: at.iter().map(|s| s.meta.reward).sum::<f64>() / n,
                mean_rung: at.iter().map(|s| s.model.rung as f64).sum::<f64>() / n,
                first_seed_rung: at[0].model.rung,
            });
        }
    }
    Ok(out)
}

pub fn write_timeseries(path: &Path, rows: &[TimeseriesRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_path(path)?;
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// Measured planning time per rung on a scenario's opening state.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Calibration {
    pub scenario: String,
    pub calls: usize,
    pub models: Vec<ModelKind>,
    pub mean_seconds: Vec<f64>,
    /// Each rung's time relative to the cheapest one.
    pub ratios: Vec<f64>,
    /// Suggested `t_base`: the cheapest rung's mean time.
    pub t_base: f64,
}

/// Time `calls` plans per rung from the seed's initial state.
pub fn calibrate(cfg: &ScenarioConfig, calls: usize) -> Result<Calibration, ExperimentError> {
    cfg.validate()?;
    let calls = calls.max(1);
    let ladder = cfg.model_ladder()?;
    let routes = cfg.routes();
    let sit = Situation::new(&cfg.setup, cfg.initial_state(), &routes, 0);
    // Round-robin over the rungs so slow drift in machine speed hits every
    // model alike.
    let mut totals = vec![0.0; ladder.len()];
    for _ in 0..calls {
        for (total, m) in totals.iter_mut().zip(ladder.rungs()) {
            *total += plan(&sit, m, None).planning_seconds;
        }
    }
    let mean_seconds: Vec<f64> = totals.iter().map(|t| t / calls as f64).collect();
    let t_base = mean_seconds[0];
    Ok(Calibration {
        scenario: cfg.kind.to_string(),
        calls,
        models: cfg.ladder.clone(),
        ratios: mean_seconds.iter().map(|t| t / t_base).collect(),
        mean_seconds,
        t_base,
    })
}
