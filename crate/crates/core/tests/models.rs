mod common;

use modelswitch::dynamics::{flatten, rollout, Control, JointState, State};
use modelswitch::models::{nominal_cost, predict, predict_naive, predict_tom, predict_turn, Ladder, ModelKind};
use modelswitch::reward::Agent;
use modelswitch::scene::Situation;
use modelswitch::sim::{build_scenario, ScenarioKind};
use modelswitch::switcher::influence_jacobian;
use proptest::prelude::*;

fn human_reward(sit: &Situation, robot: &[Control], human: &[Control]) -> f64 {
    sit.horizon_reward(Agent::Human, robot, human)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn only_tom_reads_the_robot_plan(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        for cfg in common::scenarios() {
            let s = common::random_state(&cfg, &mut rng);
            let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
            let a = common::random_controls(&cfg, 5, &mut rng, 1.0);
            let b = common::random_controls(&cfg, 5, &mut rng, 1.0);
            for kind in [ModelKind::Naive, ModelKind::Turn] {
                prop_assert_eq!(predict(kind, &sit, &a).unwrap(), predict(kind, &sit, &b).unwrap());
            }
            for kind in [ModelKind::Naive, ModelKind::Turn, ModelKind::ToM] {
                let p = predict(kind, &sit, &a).unwrap();
                prop_assert_eq!(p.controls.len(), 5);
                prop_assert!(p.controls.iter().all(|c| cfg.setup.human_box.contains(c)));
                prop_assert_eq!(p.responsive, kind == ModelKind::ToM);
            }
        }
    }

    #[test]
    fn turn_prediction_beats_naive_for_the_human(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        for cfg in common::scenarios() {
            let s = common::random_state(&cfg, &mut rng);
            let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
            let robot = predict_naive(&sit.state.robot, cfg.setup.dynamics.friction, &cfg.setup.robot_box, 5).controls;
            let naive = predict(ModelKind::Naive, &sit, &robot).unwrap().controls;
            let turn = predict_turn(&sit).unwrap().controls;
            prop_assert!(human_reward(&sit, &robot, &turn) >= human_reward(&sit, &robot, &naive) - 1e-9);
        }
    }

    #[test]
    fn tom_is_deterministic(seed in 0u64..10_000) {
        let mut rng = common::rng(seed);
        let cfg = build_scenario(ScenarioKind::Merger, 0);
        let s = common::random_state(&cfg, &mut rng);
        let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
        let plan = common::random_controls(&cfg, 5, &mut rng, 1.0);
        prop_assert_eq!(predict_tom(&sit, &plan).unwrap(), predict_tom(&sit, &plan).unwrap());
    }
}

#[test]
fn naive_compensates_friction() {
    let cfg = build_scenario(ScenarioKind::Merger, 0);
    let h = State::new(0.0, 4.0, 0.0, 2.0);
    let p = predict_naive(&h, 0.1, &cfg.setup.human_box, 5);
    assert!(p.controls.iter().all(|c| c.steer == 0.0 && (c.accel - 0.2).abs() < 1e-15));
    let s0 = JointState {
        robot: h,
        human: h,
        others: vec![],
    };
    let traj = rollout(&s0, &p.controls, &p.controls, &[], &cfg.setup.dynamics).unwrap();
    assert!(traj.iter().all(|s| (s.human.speed - 2.0).abs() < 1e-12));

    let frictionless = predict_naive(&h, 0.0, &cfg.setup.human_box, 5);
    assert!(frictionless.controls.iter().all(|c| *c == Control::ZERO));
}

#[test]
fn nominal_costs_follow_the_ladder() {
    let t = 0.02;
    let ladder = Ladder::nominal(&[ModelKind::Naive, ModelKind::Turn, ModelKind::ToM], t).unwrap();
    let costs: Vec<f64> = ladder.rungs().iter().map(nominal_cost).collect();
    assert_eq!(costs, vec![t, 2.0 * t, 4.0 * t]);
    assert!(Ladder::nominal(&[ModelKind::ToM, ModelKind::Naive], t).is_err());
}

#[test]
fn human_at_rest_point_barely_moves() {
    // Alone on the road, on the centerline, heading straight at cruise speed.
    let mut cfg = build_scenario(ScenarioKind::Merger, 0);
    cfg.traffic.clear();
    cfg.setup.human_weights = modelswitch::reward::FeatureWeights::from_pairs(&[
        (modelswitch::reward::Feature::LaneLateral, 1.0),
        (modelswitch::reward::Feature::Heading, 1.0),
        (modelswitch::reward::Feature::Effort, 1.0),
    ]);
    let s = JointState {
        robot: State::new(-200.0, 0.0, 0.0, 8.0),
        human: State::new(0.0, 4.0, 0.0, 8.0),
        others: vec![],
    };
    let sit = Situation::new(&cfg.setup, s, &[], 0);
    let turn = predict_turn(&sit).unwrap();
    for c in &turn.controls {
        assert!(c.steer.abs() < 1e-3 && c.accel.abs() < 1e-2, "{c:?}");
    }
}

#[test]
fn turn_steers_away_from_a_cone() {
    let cfg = build_scenario(ScenarioKind::StayBack, 0);
    let cone = cfg.setup.env.cones[0];
    let s = JointState {
        robot: State::new(cone.x - 200.0, 0.0, 0.0, 8.0),
        human: State::new(cone.x - 12.0, 4.0, 0.0, 8.0),
        others: vec![],
    };
    let sit = Situation::new(&cfg.setup, s, &[], 0);
    let robot = predict_naive(&sit.state.robot, 0.1, &cfg.setup.robot_box, 5).controls;
    let naive = predict(ModelKind::Naive, &sit, &robot).unwrap().controls;
    let turn = predict_turn(&sit).unwrap().controls;
    // The cone sits above the human's line, so avoiding it means steering down.
    assert!(cone.y > 4.0);
    assert!(turn.iter().map(|c| c.steer).sum::<f64>() < 0.0);
    assert!(human_reward(&sit, &robot, &turn) > human_reward(&sit, &robot, &naive));
}

#[test]
fn tom_matches_turn_when_the_robot_is_far() {
    let cfg = build_scenario(ScenarioKind::Merger, 0);
    let mut s = cfg.initial_state();
    s.robot = State::new(-300.0, 0.0, 0.0, 8.0);
    let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
    let robot = predict_naive(&sit.state.robot, 0.1, &cfg.setup.robot_box, 5).controls;
    let tom = predict_tom(&sit, &robot).unwrap().controls;
    let turn = predict_turn(&sit).unwrap().controls;
    for (a, b) in tom.iter().zip(&turn) {
        assert!((a.steer - b.steer).abs() < 1e-3 && (a.accel - b.accel).abs() < 1e-3, "{a:?} vs {b:?}");
    }
}

fn merger_cut_in() -> (modelswitch::sim::ScenarioConfig, JointState) {
    let cfg = build_scenario(ScenarioKind::Merger, 0);
    let mut s = cfg.initial_state();
    s.robot = State::new(4.0, 1.5, 0.12, 8.0);
    s.human = State::new(0.0, 4.0, 0.0, 8.0);
    (cfg, s)
}

#[test]
fn tom_yields_to_a_cut_in() {
    let (cfg, s) = merger_cut_in();
    let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
    let cut_in = vec![Control::new(0.1, 0.8); 5];
    let tom = predict_tom(&sit, &cut_in).unwrap().controls;
    let naive = predict(ModelKind::Naive, &sit, &cut_in).unwrap().controls;
    assert!(human_reward(&sit, &cut_in, &tom) > human_reward(&sit, &cut_in, &naive));
    assert!(tom[0].accel < naive[0].accel);

    let stay = vec![Control::new(-0.1, -2.0); 5];
    assert_ne!(predict_tom(&sit, &stay).unwrap().controls, tom);
}

#[test]
fn influence_matches_finite_differences_of_tom() {
    // Robot half a lane over, just ahead of the human, so the human's
    // response stays inside the control box.
    let (cfg, mut s) = merger_cut_in();
    s.robot = State::new(8.0, 2.5, 0.0, 8.0);
    let sit = Situation::new(&cfg.setup, s, &cfg.routes(), 0);
    let plan = vec![Control::new(0.05, 0.0); 5];
    let ladder = cfg.model_ladder().unwrap();
    let jac = influence_jacobian(&sit, &plan, ladder.top());
    let first = |x: &[f64]| {
        let mut p = plan.clone();
        p[0] = Control::new(x[0], x[1]);
        let h = predict_tom(&sit, &p).unwrap().controls[0];
        [h.steer, h.accel]
    };
    let u0 = flatten(&plan[..1]);
    for row in 0..2 {
        let fd = common::central_diff(|x| first(x)[row], &u0, 1e-6);
        assert!(common::relative_error(&jac.0[row], &fd) < 1e-4, "row {row}: {:?} vs {fd:?}", jac.0[row]);
    }
    assert!(!jac.is_zero());
    assert!(influence_jacobian(&sit, &plan, ladder.get(0)).is_zero());
    assert!(influence_jacobian(&sit, &plan, ladder.get(1)).is_zero());
}

#[test]
fn tom_rejects_wrong_plan_length() {
    let cfg = build_scenario(ScenarioKind::Merger, 0);
    let sit = Situation::new(&cfg.setup, cfg.initial_state(), &cfg.routes(), 0);
    assert!(predict_tom(&sit, &[Control::ZERO; 3]).is_err());
}
