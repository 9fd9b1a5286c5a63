use std::fs;
use std::path::Path;

use modelswitch::experiment::{
    emit_timeseries, log_rows, read_rows, replay, run_experiment, summarize, ExperimentError, ExperimentSpec,
    TIMING_COLUMNS,
};
use modelswitch::models::ModelKind;
use modelswitch::sim::{build_scenario, run_episode, Method, ScenarioKind};

const NAIVE: Method = Method::Fixed { model: ModelKind::Naive };
const TURN: Method = Method::Fixed { model: ModelKind::Turn };

fn short(kind: ScenarioKind, steps: usize) -> modelswitch::sim::ScenarioConfig {
    let mut cfg = build_scenario(kind, 0);
    cfg.steps = steps;
    cfg
}

/// CSV text with the named columns removed.
fn drop_columns(text: &str, drop: &[&str]) -> Vec<Vec<String>> {
    let mut r = csv::Reader::from_reader(text.as_bytes());
    let headers = r.headers().unwrap().clone();
    let keep: Vec<usize> = headers
        .iter()
        .enumerate()
        .filter(|(_, h)| !drop.contains(h))
        .map(|(i, _)| i)
        .collect();
    let mut out = vec![keep.iter().map(|i| headers[*i].to_string()).collect()];
    for rec in r.records() {
        let rec = rec.unwrap();
        out.push(keep.iter().map(|i| rec[*i].to_string()).collect());
    }
    out
}

/// JSON with every wall-clock field removed.
fn strip_timing(v: &mut serde_json::Value) {
    match v {
        serde_json::Value::Object(m) => {
            m.retain(|k, _| !k.contains("seconds"));
            m.values_mut().for_each(strip_timing);
        }
        serde_json::Value::Array(a) => a.iter_mut().for_each(strip_timing),
        _ => {}
    }
}

fn files(dir: &Path) -> Vec<String> {
    let mut out: Vec<String> = fs::read_dir(dir.join("episodes"))
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    out.sort();
    out
}

#[test]
fn single_episode_summary_equals_its_totals() {
    let cfg = short(ScenarioKind::GiveWay, 12);
    let spec = ExperimentSpec::new(cfg.clone(), vec![Method::Switcher { lambda: 0.01 }], 1);
    let (summary, logs) = run_experiment(&spec).unwrap();
    let direct = run_episode(&cfg, Method::Switcher { lambda: 0.01 }).unwrap();
    let m = &summary.methods[0];
    assert_eq!(m.episodes, 1);
    assert_eq!(m.mean_reward, direct.total_reward);
    assert_eq!(m.mean_r_meta, direct.total_r_meta);
    assert_eq!(m.mean_planning_seconds, logs[0].planning_seconds);
    assert_eq!(m.collisions, direct.collisions);
    let usage = direct.usage(3);
    for (a, b) in m.usage.iter().zip(&usage) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn usage_fractions_sum_to_one() {
    let cfg = short(ScenarioKind::Merger, 30);
    let spec = ExperimentSpec::new(cfg, vec![NAIVE, Method::Switcher { lambda: 0.1 }], 2);
    let (summary, _) = run_experiment(&spec).unwrap();
    for m in &summary.methods {
        assert!((m.usage.iter().sum::<f64>() - 1.0).abs() < 1e-12, "{}", m.method);
    }
    assert_eq!(summary.method("naive").unwrap().usage, vec![1.0, 0.0, 0.0]);
}

#[test]
fn empty_specs_rejected() {
    let cfg = short(ScenarioKind::StayBack, 5);
    let spec = ExperimentSpec::new(cfg.clone(), vec![], 3);
    assert!(matches!(run_experiment(&spec), Err(ExperimentError::NoMethods)));
    let spec = ExperimentSpec::new(cfg, vec![NAIVE], 0);
    assert!(matches!(run_experiment(&spec), Err(ExperimentError::NoSeeds)));
    assert!(matches!(emit_timeseries(&[]), Err(ExperimentError::Empty)));
}

#[test]
fn persisted_logs_reproduce_the_summary() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = short(ScenarioKind::Merger, 25);
    let mut spec = ExperimentSpec::new(cfg.clone(), vec![Method::Switcher { lambda: 0.1 }, TURN], 3);
    spec.out_dir = Some(dir.path().to_path_buf());
    let (summary, logs) = run_experiment(&spec).unwrap();

    assert_eq!(replay(dir.path()).unwrap(), summary);
    let on_disk: modelswitch::experiment::Summary =
        serde_json::from_str(&fs::read_to_string(dir.path().join("summary.json")).unwrap()).unwrap();
    assert_eq!(on_disk, summary);

    let rows = read_rows(&dir.path().join("episodes").join("turn_seed002.csv")).unwrap();
    assert_eq!(rows, log_rows(&logs[5]));
    assert_eq!(summarize(&cfg, &[rows]).unwrap().methods[0].mean_reward, logs[5].total_reward);
}

#[test]
fn reruns_are_byte_stable_apart_from_timing() {
    let cfg = short(ScenarioKind::GiveWay, 20);
    let run = || {
        let dir = tempfile::tempdir().unwrap();
        let mut spec = ExperimentSpec::new(cfg.clone(), vec![NAIVE, Method::Switcher { lambda: 0.03 }], 2);
        spec.out_dir = Some(dir.path().to_path_buf());
        spec.workers = 2;
        run_experiment(&spec).unwrap();
        dir
    };
    let (a, b) = (run(), run());
    assert_eq!(files(a.path()), files(b.path()));
    for f in files(a.path()) {
        let read = |d: &Path| fs::read_to_string(d.join("episodes").join(&f)).unwrap();
        assert_eq!(drop_columns(&read(a.path()), &TIMING_COLUMNS), drop_columns(&read(b.path()), &TIMING_COLUMNS));
    }
    let ts_timing = ["mean_planning_seconds", "mean_decision_seconds"];
    let read = |d: &Path, f: &str| fs::read_to_string(d.join(f)).unwrap();
    assert_eq!(
        drop_columns(&read(a.path(), "timeseries.csv"), &ts_timing),
        drop_columns(&read(b.path(), "timeseries.csv"), &ts_timing)
    );
    assert_eq!(read(a.path(), "scenario.toml"), read(b.path(), "scenario.toml"));
    let json = |d: &Path| {
        let mut v: serde_json::Value = serde_json::from_str(&read(d, "summary.json")).unwrap();
        strip_timing(&mut v);
        v
    };
    assert_eq!(json(a.path()), json(b.path()));
}

#[test]
fn single_episode_timeseries_is_the_episode() {
    let cfg = short(ScenarioKind::GiveWay, 15);
    let log = run_episode(&cfg, Method::Switcher { lambda: 0.01 }).unwrap();
    let ts = emit_timeseries(std::slice::from_ref(&log)).unwrap();
    assert_eq!(ts.len(), log.steps.len());
    for (r, s) in ts.iter().zip(&log.steps) {
        assert_eq!(r.t, s.t);
        assert_eq!(r.episodes, 1);
        assert_eq!(r.mean_planning_seconds, s.planning_seconds);
        assert_eq!(r.mean_decision_seconds, s.decision_seconds);
        assert_eq!(r.mean_reward, s.meta.reward);
        assert_eq!(r.mean_rung, s.model.rung as f64);
        assert_eq!(r.first_seed_rung, s.model.rung);
    }
}

#[test]
fn fixed_model_trace_is_constant() {
    let cfg = short(ScenarioKind::Merger, 20);
    let spec = ExperimentSpec::new(cfg, vec![TURN], 2);
    let (_, logs) = run_experiment(&spec).unwrap();
    let ts = emit_timeseries(&logs).unwrap();
    assert!(ts.iter().all(|r| r.mean_rung == 1.0 && r.first_seed_rung == 1 && r.episodes == 2));
}

#[test]
fn merger_switcher_uses_tom_in_a_mid_episode_window() {
    let cfg = build_scenario(ScenarioKind::Merger, 0);
    let spec = ExperimentSpec::new(cfg.clone(), vec![Method::Switcher { lambda: cfg.lambda_conservative }], 10);
    let (_, logs) = run_experiment(&spec).unwrap();
    let ts = emit_timeseries(&logs).unwrap();
    let top = (cfg.ladder.len() - 1) as usize;
    let share: Vec<f64> = (0..ts.len())
        .map(|t| logs.iter().filter(|l| l.steps[t].model.rung == top).count() as f64 / logs.len() as f64)
        .collect();
    let first = share.iter().position(|s| *s >= 0.5).expect("ToM is never the majority");
    let last = share.iter().rposition(|s| *s >= 0.5).unwrap();
    assert!(first > 0 && last < share.len() - 1, "window {first}..={last}");
    let inside: f64 = share[first..=last].iter().sum();
    let total: f64 = share.iter().sum();
    assert!(inside / total >= 0.8, "{:.2} of top-rung use inside {first}..={last}", inside / total);
}
