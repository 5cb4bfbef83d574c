use super::*;
use crate::scenario::Buoy;

fn single(bits: f64) -> Scenario {
    Scenario::with_defaults(vec![Buoy {
        id: 1,
        position: Vec2::ZERO,
        target_volume: bits,
    }])
}

fn small_search(pattern: Pattern) -> InitSearch {
    InitSearch {
        thetas: vec![0.0, 90.0, 180.0, 270.0],
        radius_points: 6,
        period_cap: 200.0,
        max_slots: 60,
        ..InitSearch::new(pattern)
    }
}

#[test]
fn partition_examples() {
    assert_eq!(partition_volume(6e9, 3e8), 20);
    assert_eq!(partition_volume(6e9, 4e8), 15);
    assert_eq!(partition_volume(1e8, 3e8), 1);
    assert_eq!(partition_volume(3e8, 3e8), 1);
    assert_eq!(partition_volume(0.0, 3e8), 1);
}

#[test]
fn patterns_are_closed_and_kinematically_exact() {
    for pattern in [Pattern::Circular, Pattern::Eight] {
        for theta in [0.0, 37.0, 90.0] {
            let sl = lap_slotting(pattern, 48.0, 1.0, 100);
            let p = PatternParams {
                pattern,
                radius: 180.0,
                period: 48.0,
                theta_deg: theta,
                ground_speed: 0.0,
                center: Vec2::new(10.0, -5.0),
            };
            let t = pattern_trajectory(&p, Vec2::new(0.0, 4.0), sl);
            assert_eq!(t.waypoints(), sl.waypoints());
            assert!(t.kinematic_residual() < 1e-9, "{pattern:?} {}", t.kinematic_residual());
            let last = t.waypoints() - 1;
            assert!((t.q[0] - t.q[last]).norm() < 1e-9);
            assert!((t.v_e[0] - t.v_e[last]).norm() < 1e-9);
            let speeds: Vec<f64> = t.v_e.iter().map(|v| v.norm()).collect();
            assert!(speeds.iter().all(|s| (s - speeds[0]).abs() < 1e-9));
            let lobes = if pattern == Pattern::Eight { 2.0 } else { 1.0 };
            let nominal = lobes * std::f64::consts::TAU * 180.0 / 48.0;
            assert!((speeds[0] - nominal).abs() / nominal < 0.01, "{} vs {nominal}", speeds[0]);
        }
    }
}

#[test]
fn eight_meets_headwind_at_lobe_ends_at_ninety_degrees() {
    let wind = Vec2::new(0.0, 10.0);
    let sl = lap_slotting(Pattern::Eight, 60.0, 1.0, 100);
    let (q, v, _) = pattern_states(Pattern::Eight, Vec2::ZERO, 150.0, 90.0, wind, sl);
    let far = q
        .iter()
        .zip(&v)
        .filter(|(p, _)| p.norm() > 290.0)
        .map(|(_, v)| v.dot(wind))
        .collect::<Vec<_>>();
    assert!(!far.is_empty());
    assert!(far.iter().all(|d| *d < 0.0));
}

#[test]
fn loiter_circle_for_small_volume() {
    let s = single(2e7);
    let (start, trace) = initial_trajectory(&s, Vec2::ZERO, &[2e7], &small_search(Pattern::Circular)).unwrap();
    assert!(trace.iter().any(|r| r.feasible));
    let watts = start.energy_j / start.params.period;
    assert!(watts >= 100.0 - 1e-6, "{watts} W below the loiter minimum");

    let period = std::f64::consts::TAU * 500.0 / 30.0;
    let (_, wide) = evaluate_pattern(&s, Vec2::ZERO, &[2e7], Pattern::Circular, period, 500.0, 0.0, 100);
    let wide = wide.unwrap();
    assert!((wide.params.ground_speed - 30.0).abs() < 0.1, "{:?}", wide.params);
    let watts = wide.energy_j / period;
    assert!((watts - 100.0).abs() < 3.0, "{watts} W");
}

#[test]
fn oversized_volume_has_no_initial_pattern() {
    let s = single(1e11);
    match initial_trajectory(&s, Vec2::ZERO, &[1e11], &small_search(Pattern::Circular)) {
        Err(Error::NoFeasibleInit(msg)) => assert!(msg.contains("ratio")),
        other => panic!("{other:?}"),
    }
}

#[test]
fn windless_eight_is_orientation_free() {
    let s = single(1e8);
    let energies: Vec<f64> = [0.0, 45.0, 90.0, 200.0]
        .iter()
        .map(|th| {
            evaluate_pattern(&s, Vec2::ZERO, &[1e8], Pattern::Eight, 90.0, 200.0, *th, 100)
                .1
                .unwrap()
                .energy_j
        })
        .collect();
    for e in &energies {
        assert!((e - energies[0]).abs() < 1e-6 * energies[0]);
    }
}

fn quick(pattern: Pattern) -> CyclicalOptions {
    CyclicalOptions {
        search: small_search(pattern),
        period_factors: vec![0.95, 1.0],
        theta_offsets: vec![0.0, 15.0],
        sca: ScaOptions::default(),
    }
}

#[test]
fn refined_lap_beats_its_pattern_and_closes() {
    let s = single(6e8);
    let plan = optimize_cyclical(&s, LapSplit::Laps(2), Vec2::new(0.0, 5.0), &quick(Pattern::Circular)).unwrap();
    assert_eq!(plan.laps, 2);
    assert_eq!(plan.per_lap, vec![3e8]);
    assert!(plan.lap.energy.total <= plan.initial_energy_j + 1e-9);
    assert!((plan.total_energy_j - 2.0 * plan.lap.energy.total).abs() < 1e-9);
    let t = &plan.lap.trajectory;
    let last = t.waypoints() - 1;
    assert!((t.q[0] - t.q[last]).norm() < 1e-5);
    assert!((t.v_air[0] - t.v_air[last]).norm() < 1e-5);
    assert!(plan.lap.check.passes(1e-6), "{:?}", plan.lap.check);
    assert!(plan.trace.iter().any(|r| r.stage == "fine-tune"));
}

#[test]
fn single_lap_is_one_closed_sca_solve() {
    let s = single(2e8);
    let opts = CyclicalOptions {
        period_factors: vec![1.0],
        ..quick(Pattern::Circular)
    };
    let plan = optimize_cyclical(&s, LapSplit::Laps(1), Vec2::ZERO, &opts).unwrap();
    let (start, _) = initial_trajectory(&s, Vec2::ZERO, &[2e8], &opts.search).unwrap();
    let problem = FixedWindProblem::periodic(&s, Vec2::ZERO, start.slotting, vec![2e8]);
    let direct = sca_solve(&problem, &start.trajectory, &start.schedule, &opts.sca).unwrap();
    assert_eq!(plan.lap.energy.total, direct.energy.total);
    assert_eq!(plan.total_energy_j, direct.energy.total);
}

#[test]
fn circular_plan_is_rotation_invariant() {
    let layout = |angle: f64| {
        let mut s = single(0.0);
        s.buoys = (0..2)
            .map(|i| Buoy {
                id: i + 1,
                position: Vec2::new(if i == 0 { 120.0 } else { -120.0 }, 0.0).rotate(angle),
                target_volume: 1.5e8,
            })
            .collect();
        s
    };
    let opts = CyclicalOptions {
        period_factors: vec![1.0],
        ..quick(Pattern::Circular)
    };
    let a = optimize_cyclical(&layout(0.0), LapSplit::Laps(1), Vec2::ZERO, &opts).unwrap();
    let slots = (a.lap.slotting.n_slots + 1) as f64;
    let b = optimize_cyclical(&layout(std::f64::consts::TAU / slots * 3.0), LapSplit::Laps(1), Vec2::ZERO, &opts).unwrap();
    let rel = (a.lap.energy.total - b.lap.energy.total).abs() / a.lap.energy.total;
    assert!(rel < 1e-3, "{} vs {}", a.lap.energy.total, b.lap.energy.total);
}

#[test]
fn trace_csv_has_header_and_rows() {
    let s = single(5e7);
    let (_, trace) = initial_trajectory(&s, Vec2::ZERO, &[5e7], &small_search(Pattern::Circular)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace_csv(&trace, &path).unwrap();
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("candidate,stage,T0,r,theta,feasible,ratio,energy_J"));
    assert_eq!(text.lines().count(), trace.len() + 1);
}

#[test]
fn orientation_of_patterns() {
    let wind = Vec2::new(0.0, 10.0);
    for theta in [0.0, 30.0, 90.0, 135.0] {
        let p = PatternParams {
            pattern: Pattern::Eight,
            radius: 150.0,
            period: 80.0,
            theta_deg: theta,
            ground_speed: 0.0,
            center: Vec2::ZERO,
        };
        let t = pattern_trajectory(&p, wind, lap_slotting(Pattern::Eight, 80.0, 1.0, 100));
        let got = lap_orientation_deg(&t, wind);
        let err = (got - theta).rem_euclid(180.0);
        assert!(err.min(180.0 - err) < 1e-6, "{theta}: {got}");
    }
}
