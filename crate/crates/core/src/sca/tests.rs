use super::*;
use crate::conic::ConeKind;
use proptest::prelude::*;

fn chain(half: f64, bits: f64) -> Scenario {
    let mut s = Scenario::with_defaults(vec![Buoy {
        id: 1,
        position: Vec2::ZERO,
        target_volume: bits,
    }]);
    s.endpoints = Some(Endpoints {
        q0: Vec2::new(-half, 0.0),
        qf: Vec2::new(half, 0.0),
        v0: Vec2::new(30.0, 0.0),
        vf: Vec2::new(30.0, 0.0),
    });
    s
}

fn problem(half: f64, bits: f64, horizon: f64, wind: Vec2) -> FixedWindProblem {
    let s = chain(half, bits);
    FixedWindProblem::open(&s, wind, Slotting::for_horizon(horizon, 1.0, 200)).unwrap()
}

#[test]
fn speed_bound_examples() {
    let vl = Vec2::new(30.0, 0.0);
    assert_eq!(taylor_speed_lb(vl, vl), 900.0);
    let v = Vec2::new(0.0, 30.0);
    assert_eq!(taylor_speed_lb(v, vl), -900.0);
    assert!(taylor_speed_lb(v, vl) <= v.norm_sq());
    let h = 1e-6;
    let gx = (taylor_speed_lb(vl + Vec2::new(h, 0.0), vl) - taylor_speed_lb(vl, vl)) / h;
    assert!((gx - 60.0).abs() < 1e-3);
}

#[test]
fn rate_bound_examples() {
    let s = chain(100.0, 0.0);
    let (b, ch) = (&s.buoys[0], &s.channel);
    let at = taylor_rate_lb(Vec2::ZERO, Vec2::ZERO, b, ch);
    assert!((at - 1001f64.log2()).abs() < 1e-9);
    let off = taylor_rate_lb(Vec2::new(100.0, 0.0), Vec2::ZERO, b, ch);
    assert!(off <= 501f64.log2());
    for d in [0.0, 50.0, 500.0, 5000.0] {
        assert!(RateTangent::at(Vec2::new(d, 0.0), b, ch).beta > 0.0);
    }
}

proptest! {
    #[test]
    fn speed_bound_is_global_and_tight(vx in -50.0f64..50.0, vy in -50.0f64..50.0,
                                       lx in -50.0f64..50.0, ly in -50.0f64..50.0) {
        let (v, l) = (Vec2::new(vx, vy), Vec2::new(lx, ly));
        prop_assert!(taylor_speed_lb(v, l) <= v.norm_sq() + 1e-9);
        prop_assert!((taylor_speed_lb(l, l) - l.norm_sq()).abs() <= 1e-9);
    }

    #[test]
    fn rate_bound_is_global_and_tight(qx in -2000.0f64..2000.0, qy in -2000.0f64..2000.0,
                                      lx in -2000.0f64..2000.0, ly in -2000.0f64..2000.0) {
        let s = chain(100.0, 0.0);
        let (b, ch) = (&s.buoys[0], &s.channel);
        let (q, l) = (Vec2::new(qx, qy), Vec2::new(lx, ly));
        let truth = spectral_efficiency(q.norm_sq(), ch);
        prop_assert!(taylor_rate_lb(q, l, b, ch) <= truth + 1e-9);
        prop_assert!((taylor_rate_lb(l, l, b, ch) - spectral_efficiency(l.norm_sq(), ch)).abs() <= 1e-9);
    }
}

fn local_for(p: &FixedWindProblem) -> (Trajectory, CommSchedule, LocalPoint) {
    let (t, s) = straight_line_init(p).unwrap();
    let sc = &p.scenario;
    let l = LocalPoint::from_plan(&t, &s, &sc.buoys, &sc.channel, 0);
    (t, s, l)
}

#[test]
fn variable_count_contract() {
    let p = problem(75.0, 1e6, 5.0, Vec2::ZERO);
    assert_eq!(p.slotting.n_slots, 4);
    let (_, _, l) = local_for(&p);
    let sub = build_p22(&p, &l).unwrap();
    assert_eq!(sub.decision_variables(), decision_variable_count(4, 1));
    assert_eq!(decision_variable_count(4, 1), 39);
    assert!(sub.program.n_vars() > 39);
}

#[test]
fn local_point_is_feasible_for_its_subproblem() {
    let p = problem(300.0, 5e7, 20.0, Vec2::ZERO);
    let (t, s, l) = local_for(&p);
    let sub = build_p22(&p, &l).unwrap();
    let sol = conic::solve(&sub.program, &SolveOptions::default());
    assert_eq!(sol.status, SolveStatus::Optimal);
    let e0 = trajectory_energy(&t, &p.scenario.energy).unwrap().total;
    assert!(sol.objective <= e0 + 1e-6 * e0, "{} > {e0}", sol.objective);
    let _ = s;
}

#[test]
fn zero_airtime_violates_throughput() {
    let p = problem(300.0, 5e7, 20.0, Vec2::ZERO);
    let (_, _, l) = local_for(&p);
    let sub = build_p22(&p, &l).unwrap();
    let x = vec![0.0; sub.program.n_vars()];
    let rows: Vec<_> = sub
        .program
        .constraints()
        .iter()
        .filter(|c| c.tag == Tag::ThroughputTaylor)
        .collect();
    assert_eq!(rows.len(), 1);
    assert!(rows[0].violation(&x) > 0.0);

    let free = problem(300.0, 0.0, 20.0, Vec2::ZERO);
    let (_, _, l) = local_for(&free);
    let sub = build_p22(&free, &l).unwrap();
    assert!(sub.program.constraints().iter().all(|c| c.tag != Tag::ThroughputTaylor));
}

#[test]
fn frozen_trajectory_reduces_to_schedule_program() {
    let base = problem(300.0, 5e7, 20.0, Vec2::ZERO);
    let (t, _, _) = local_for(&base);
    let rates = RateTable::for_trajectory(&t, &base.scenario.buoys, &base.scenario.channel);
    let cap = comms::feasibility_lp(&rates, &base.targets, base.slotting.slot_s).ratio() * base.targets[0];
    for (scale, feasible) in [(0.99, true), (1.01, false)] {
        let mut p = base.clone();
        p.targets = vec![cap * scale];
        let Feasibility::Feasible { schedule, .. } = comms::feasibility_lp(&rates, &[cap], p.slotting.slot_s) else {
            panic!()
        };
        let l = LocalPoint::from_plan(&t, &schedule, &p.scenario.buoys, &p.scenario.channel, 0);
        let mut sub = build_p22(&p, &l).unwrap();
        for (i, (qv, vv)) in sub.q.clone().iter().zip(sub.v.clone()).enumerate() {
            for c in 0..2 {
                let (qc, vc) = if c == 0 { (t.q[i].x, t.v_air[i].x) } else { (t.q[i].y, t.v_air[i].y) };
                sub.program.eq_zero(qv[c] - qc, Tag::Bound);
                sub.program.eq_zero(vv[c] - vc, Tag::Bound);
            }
        }
        let sol = conic::solve(&sub.program, &SolveOptions::default());
        assert_eq!(sol.status == SolveStatus::Optimal, feasible, "scale {scale}: {:?}", sol.status);
    }
}

#[test]
fn every_constraint_is_tagged_and_cones_well_formed() {
    let p = problem(300.0, 5e7, 20.0, Vec2::new(3.0, 1.0));
    let (_, _, l) = local_for(&p);
    let sub = build_p22(&p, &l).unwrap();
    let tags = sub.program.count_by_tag();
    for t in [Tag::Kinematics, Tag::Tdma, Tag::RateTaylor, Tag::MinSpeedTaylor, Tag::AccelLimit, Tag::SpeedLimit] {
        assert!(tags.contains_key(&t), "{t:?}");
    }
    for c in sub.program.constraints() {
        match c.kind {
            ConeKind::Soc => assert!(c.rows.len() >= 2),
            ConeKind::RotatedSoc => assert!(c.rows.len() >= 3),
            _ => assert!(!c.rows.is_empty()),
        }
    }
}

#[test]
fn sca_descends_and_validates() {
    let p = problem(300.0, 8e7, 24.0, Vec2::ZERO);
    let (t, s) = straight_line_init(&p).unwrap();
    let plan = sca_solve(&p, &t, &s, &ScaOptions::default()).unwrap();
    for w in plan.log.windows(2) {
        assert!(w[1].objective_j <= w[0].objective_j + 1e-9);
    }
    assert!(plan.log.len() >= 2);
    assert!(plan.check.passes(1e-6), "{:?}", plan.check);
    assert!(plan.energy.total < plan.log[0].objective_j);
    let again = sca_solve(&p, &t, &s, &ScaOptions::default()).unwrap();
    assert_eq!(plan.log, again.log);
}

#[test]
fn infeasible_start_is_reported() {
    let p = problem(300.0, 8e7, 24.0, Vec2::ZERO);
    let (t, mut s) = straight_line_init(&p).unwrap();
    for row in &mut s.tau {
        row[0] = 0.0;
    }
    match sca_solve(&p, &t, &s, &ScaOptions::default()) {
        Err(Error::InitInfeasible { constraint, .. }) => assert_eq!(constraint, "throughput"),
        other => panic!("{other:?}"),
    }
}

#[test]
fn open_plan_beats_benchmark_for_small_volume() {
    let s = chain(300.0, 2e7);
    let opts = HorizonOptions {
        factors: vec![1.0, 1.3],
        loop_speeds: vec![30.0],
        max_laps: 1,
        ..HorizonOptions::default()
    };
    let plan = plan_open(&s, Vec2::ZERO, &opts).unwrap();
    assert!(plan.best.energy.total <= plan.benchmark.energy_j, "{} vs {}", plan.best.energy.total, plan.benchmark.energy_j);

    let zero = chain(300.0, 0.0);
    let plan = plan_open(&zero, Vec2::ZERO, &opts).unwrap();
    assert!(plan.best.energy.total <= plan.benchmark.energy_j);
}

#[test]
fn small_wind_changes_energy_smoothly() {
    let run = |eps: f64| {
        let p = problem(300.0, 5e7, 20.0, Vec2::new(eps, 0.0));
        let (t, s) = straight_line_init(&p).unwrap();
        sca_solve(&p, &t, &s, &ScaOptions::default()).unwrap().energy.total
    };
    let e0 = run(0.0);
    let e1 = run(1e-3);
    let e2 = run(2e-3);
    assert!((e1 - e0).abs() < 2.0, "{e0} {e1}");
    assert!((e2 - e0).abs() < 4.0, "{e0} {e2}");
}

#[test]
fn weave_closes_exactly() {
    let slotting = Slotting::for_horizon(90.0, 1.0, 120);
    let (q0, qf) = (Vec2::ZERO, Vec2::new(1200.0, 0.0));
    for (g, lobes, side) in [(20.0, 1, 1.0), (30.0, 3, -1.0), (40.0, 2, 1.0)] {
        let (q, v) = weave_path(q0, qf, g, slotting, lobes, side).unwrap();
        let t = Trajectory::from_ground(q.clone(), v.clone(), vec![Vec2::ZERO; q.len()], slotting.slot_s, false);
        assert!(t.kinematic_residual() < 1e-9);
        assert_eq!(q.len(), slotting.n_slots + 2);
        assert!((q[q.len() - 1] - qf).norm() < 1e-9);
        assert!((v[0] - v[v.len() - 1]).norm() < 1e-9);
        let len: f64 = q.windows(2).map(|p| (p[1] - p[0]).norm()).sum();
        assert!(len > 0.9 * g * 90.0, "{len}");
    }
    assert!(weave_path(q0, qf, 10.0, slotting, 1, 1.0).is_none());
}

#[test]
fn fixed_horizon_weave_beats_straight_line() {
    let mut s = chain(600.0, 2e8);
    s.buoys[0].position = Vec2::new(0.0, 250.0);
    let horizon = 90.0;
    let straight = {
        let slotting = Slotting::for_horizon(horizon, 1.0, 120);
        let p = FixedWindProblem::transit(&s, Vec2::ZERO, slotting).unwrap();
        let (t, sc) = straight_line_init(&p).unwrap();
        sca_solve(&p, &t, &sc, &ScaOptions::default()).unwrap()
    };
    let best = plan_fixed_horizon(&s, Vec2::ZERO, horizon, &HorizonOptions::default()).unwrap();
    assert!(best.check.passes(1e-6));
    assert!(best.energy.total < 0.9 * straight.energy.total, "{} vs {}", best.energy.total, straight.energy.total);
}
