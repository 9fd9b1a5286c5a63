//! Command-line harness: run experiments, re-summarize logs, calibrate costs.

use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use modelswitch::experiment::{calibrate, replay, run_experiment, ExperimentError, ExperimentSpec, Summary};
use modelswitch::models::ModelKind;
use modelswitch::sim::{build_scenario, Method, ScenarioConfig, ScenarioKind};

#[derive(Parser)]
#[command(name = "modelswitch", version, about = "Online human-model switching for a driving MPC planner")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every (method, seed) episode and summarize.
    Run(RunArgs),
    /// Re-summarize the logs in an output directory.
    Replay {
        /// Directory written by `run --out`.
        dir: PathBuf,
    },
    /// Measure planning time per model to pick `t_base`.
    Calibrate(CalibrateArgs),
    /// Print a scenario preset as TOML, a starting point for `--config`.
    Preset {
        #[arg(long)]
        scenario: ScenarioKind,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

#[derive(Args)]
struct ScenarioArgs {
    /// stay_back, merger or give_way.
    #[arg(long, required_unless_present = "config")]
    scenario: Option<ScenarioKind>,
    /// Scenario config in TOML; replaces the preset.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the nominal cost of the cheapest model (s).
    #[arg(long)]
    t_base: Option<f64>,
}

impl ScenarioArgs {
    fn load(&self) -> Result<ScenarioConfig> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
                let cfg: ScenarioConfig = toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
                if let Some(kind) = self.scenario {
                    if kind != cfg.kind {
                        bail!("--scenario {kind} contradicts config kind {}", cfg.kind);
                    }
                }
                cfg
            }
            None => build_scenario(self.scenario.expect("clap enforces scenario or config"), 0),
        };
        if let Some(t) = self.t_base {
            cfg.t_base = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Comma-separated methods: naive, turn, tom, switcher@<lambda>.
    /// Defaults to every fixed rung plus both preset switchers.
    #[arg(long, value_delimiter = ',')]
    methods: Vec<Method>,
    /// Switcher lambdas, each added as a `switcher@<lambda>` method.
    #[arg(long, value_delimiter = ',')]
    lambda: Vec<f64>,
    #[arg(long, default_value_t = 30)]
    seeds: u64,
    /// Output directory for episode CSVs, summary.json and timeseries.csv.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 uses every core.
    #[arg(long, default_value_t = 0)]
    workers: usize,
    /// Print the summary as JSON instead of a table.
    #[arg(long)]
    json: bool,
}

#[derive(Args)]
struct CalibrateArgs {
    #[command(flatten)]
    scenario: ScenarioArgs,
    /// Planning calls per model.
    #[arg(long, default_value_t = 30)]
    calls: usize,
}

fn methods_for(cfg: &ScenarioConfig, methods: &[Method], lambdas: &[f64]) -> Vec<Method> {
    let mut out: Vec<Method> = methods.to_vec();
    out.extend(lambdas.iter().map(|&lambda| Method::Switcher { lambda }));
    if out.is_empty() {
        out.extend(cfg.ladder.iter().map(|&model| Method::Fixed { model }));
        out.push(Method::Switcher {
            lambda: cfg.lambda_conservative,
        });
        out.push(Method::Switcher {
            lambda: cfg.lambda_aggressive,
        });
    }
    out
}

fn print_table(s: &Summary) {
    let rungs: Vec<String> = s.ladder.iter().map(ModelKind::to_string).collect();
    println!("scenario {} (t_base {:.3e} s, ladder {})", s.scenario, s.t_base, rungs.join(" < "));
    println!(
        "{:<16} {:>4} {:>12} {:>12} {:>10} {:>10} {:>6}  usage",
        "method", "eps", "reward", "r_meta", "plan s", "decide s", "coll"
    );
    for m in &s.methods {
        let usage: Vec<String> = m.usage.iter().map(|u| format!("{u:.2}")).collect();
        println!(
            "{:<16} {:>4} {:>12.3} {:>12.3} {:>10.4} {:>10.4} {:>6}  [{}]",
            m.method,
            m.episodes,
            m.mean_reward,
            m.mean_r_meta,
            m.mean_planning_seconds,
            m.mean_decision_seconds,
            m.collisions,
            usage.join(", ")
        );
    }
}

fn run(args: RunArgs) -> Result<ExitCode> {
    let cfg = args.scenario.load()?;
    let methods = methods_for(&cfg, &args.methods, &args.lambda);
    let mut spec = ExperimentSpec::new(cfg, methods, args.seeds);
    spec.out_dir = args.out;
    spec.workers = args.workers;
    match run_experiment(&spec) {
        Ok((summary, _)) => {
            if args.json {
                println!("{}", serde_json::to_string_pretty(&summary)?);
            } else {
                print_table(&summary);
            }
            Ok(ExitCode::SUCCESS)
        }
        Err(ExperimentError::MethodFailed(m)) => {
            eprintln!("error: every episode of {m} failed");
            Ok(ExitCode::from(2))
        }
        Err(e) => Err(e.into()),
    }
}

fn main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Run(args) => run(args),
        Command::Replay { dir } => {
            let summary = replay(&dir).with_context(|| format!("replaying {}", dir.display()))?;
            println!("{}", serde_json::to_string_pretty(&summary)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Calibrate(args) => {
            let cfg = args.scenario.load()?;
            let c = calibrate(&cfg, args.calls)?;
            println!("{}", serde_json::to_string_pretty(&c)?);
            Ok(ExitCode::SUCCESS)
        }
        Command::Preset { scenario, seed } => {
            print!("{}", toml::to_string(&build_scenario(scenario, seed))?);
            Ok(ExitCode::SUCCESS)
        }
    }
}
