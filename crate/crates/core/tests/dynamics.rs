mod common;

use modelswitch::diffopt::value_and_gradient;
use modelswitch::dynamics::{advance, rollout, step, Control, DynamicsParams, JointState, Route, SpeedFloor, State};
use proptest::prelude::*;

fn state() -> impl Strategy<Value = State> {
    (-50.0..50.0, -3.0..7.0, -0.5..0.5, 0.5..12.0).prop_map(|(x, y, h, v)| State::new(x, y, h, v))
}

fn control() -> impl Strategy<Value = Control> {
    (-0.15..0.15, -4.0..4.0).prop_map(|(s, a)| Control::new(s, a))
}

fn params(friction: f64) -> DynamicsParams {
    DynamicsParams {
        friction,
        dt: 0.1,
        floor: SpeedFloor::Hard,
    }
}

proptest! {
    #[test]
    fn step_is_bitwise_deterministic(s in state(), u in control(), a in 0.0..0.5) {
        let p = params(a);
        let one = step(&s, &u, &p).unwrap();
        let two = step(&s, &u, &p).unwrap();
        prop_assert_eq!(one.x.to_bits(), two.x.to_bits());
        prop_assert_eq!(one.y.to_bits(), two.y.to_bits());
        prop_assert_eq!(one.heading.to_bits(), two.heading.to_bits());
        prop_assert_eq!(one.speed.to_bits(), two.speed.to_bits());
    }

    #[test]
    fn frictionless_coast_conserves_speed_and_heading(s in state(), n in 0usize..30) {
        let p = params(0.0);
        let s0 = JointState { robot: s, human: s, others: vec![] };
        let zeros = vec![Control::ZERO; n];
        let traj = rollout(&s0, &zeros, &zeros, &[], &p).unwrap();
        for j in &traj {
            prop_assert_eq!(j.robot.speed, s.speed);
            prop_assert_eq!(j.robot.heading, s.heading);
        }
    }

    #[test]
    fn rollout_composes_steps(
        r in state(),
        h in state(),
        car in state(),
        ur in proptest::collection::vec(control(), 0..8),
        a in 0.0..0.3,
    ) {
        let k = ur.len();
        let uh: Vec<Control> = ur.iter().rev().copied().collect();
        let route = Route { controls: ur.iter().map(|c| Control::new(-c.steer, c.accel)).collect() };
        let p = params(a);
        let s0 = JointState { robot: r, human: h, others: vec![car] };
        let traj = rollout(&s0, &ur, &uh, std::slice::from_ref(&route), &p).unwrap();
        prop_assert_eq!(traj.len(), k + 1);
        prop_assert_eq!(&traj[0], &s0);
        for t in 0..k {
            prop_assert_eq!(traj[t + 1].robot, step(&traj[t].robot, &ur[t], &p).unwrap());
            prop_assert_eq!(traj[t + 1].human, step(&traj[t].human, &uh[t], &p).unwrap());
            prop_assert_eq!(traj[t + 1].others[0], step(&traj[t].others[0], &route.controls[t], &p).unwrap());
        }
    }

    #[test]
    fn step_derivative_matches_central_differences(s in state(), u in control(), a in 0.0..0.3) {
        let p = params(a);
        let x = [s.x, s.y, s.heading, s.speed, u.steer, u.accel];
        let eval = |x: &[f64]| {
            let n = advance(&State::new(x[0], x[1], x[2], x[3]), &Control::new(x[4], x[5]), &p);
            [n.x, n.y, n.heading, n.speed]
        };
        for out in 0..4 {
            let (_, g) = value_and_gradient(
                |d| {
                    let st = State { x: d[0], y: d[1], heading: d[2], speed: d[3] };
                    let n = advance(&st, &Control { steer: d[4], accel: d[5] }, &p);
                    [n.x, n.y, n.heading, n.speed][out]
                },
                &x,
            );
            let fd = common::central_diff(|v| eval(v)[out], &x, 1e-6);
            prop_assert!(common::relative_error(&g, &fd) < 1e-5, "output {out}: {g:?} vs {fd:?}");
        }
    }

    #[test]
    fn simulated_speed_never_negative(s in state(), u in control()) {
        let mut cur = s;
        for _ in 0..50 {
            cur = step(&cur, &Control::new(u.steer, -4.0), &params(0.1)).unwrap();
            prop_assert!(cur.speed >= 0.0);
        }
    }
}
