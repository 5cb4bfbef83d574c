use super::*;
use crate::comms::{feasibility_lp, RateTable};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn run(p: &ConicProgram) -> ConicSolution {
    solve(p, &SolveOptions::default())
}

#[test]
fn unit_disk_extreme_point() {
    let mut p = ConicProgram::new();
    let x = p.var("x");
    let y = p.var("y");
    p.soc(Affine::constant(1.0), vec![x.into(), y.into()], Tag::Bound);
    p.minimize(x.into());
    let s = run(&p);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.value(x) + 1.0).abs() < 1e-6);
    assert!(s.value(y).abs() < 1e-4);
}

#[test]
fn zero_radius_cone_pins_variable() {
    let mut p = ConicProgram::new();
    let x = p.var("x");
    p.soc(Affine::zero(), vec![x.into()], Tag::Bound);
    p.minimize(x * 1.0);
    let s = run(&p);
    assert!(s.value(x).abs() < 1e-6, "{s:?}");
}

#[test]
fn rotated_cone_am_gm() {
    let mut p = ConicProgram::new();
    let u = p.var("u");
    let v = p.var("v");
    let w = p.var("w");
    p.eq_zero(w - 2.0, Tag::Bound);
    p.rsoc(u.into(), v.into(), vec![w.into()], Tag::Bound);
    p.minimize(u + v);
    let s = run(&p);
    assert_eq!(s.status, SolveStatus::Optimal);
    assert!((s.value(u) - 2.0).abs() < 1e-5);
    assert!((s.value(v) - 2.0).abs() < 1e-5);
}

#[test]
fn loiter_toy_matches_closed_form() {
    let (w1, w2) = (9.26e-4, 2250.0);
    let mut p = ConicProgram::new();
    let s = p.var("speed");
    p.nonneg(s - 3.0, Tag::MinSpeed);
    p.nonneg(Affine::constant(50.0) - s, Tag::SpeedLimit);
    let t = p.cubic_epigraph(vec![s.into()], "cube");
    let e = p.inverse_epigraph(s.into(), "inv");
    p.minimize(t * w1 + e * w2);
    let sol = run(&p);
    assert_eq!(sol.status, SolveStatus::Optimal);
    let v_star = (w2 / (3.0 * w1)).powf(0.25);
    assert!((sol.value(s) - v_star).abs() < 0.01, "{}", sol.value(s));
    assert!((sol.objective - 100.0).abs() < 0.05, "{}", sol.objective);
}

#[test]
fn embedded_lp_matches_simplex() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (slots, k) = (12, 3);
    let rates = RateTable {
        r: (0..slots).map(|_| (0..k).map(|_| rng.random_range(1e6..1e7)).collect()).collect(),
    };
    let targets = [2e7, 3e7, 1.5e7];
    let oracle = feasibility_lp(&rates, &targets, 1.0).ratio();

    let mut p = ConicProgram::new();
    let t = p.var("t");
    let tau: Vec<Vec<Var>> = (0..slots).map(|s| p.vars(&format!("tau{s}"), k)).collect();
    for j in 0..k {
        let mut lhs = Affine::from(t);
        for s in 0..slots {
            lhs = lhs.plus(tau[s][j], -rates.r[s][j] / targets[j]);
        }
        p.nonneg(-lhs, Tag::ThroughputTaylor);
    }
    for row in &tau {
        let mut sum = Affine::constant(1.0);
        for v in row {
            sum = sum - *v;
            p.nonneg((*v).into(), Tag::CommTime);
        }
        p.nonneg(sum, Tag::Tdma);
    }
    p.minimize(-Affine::from(t));
    let sol = run(&p);
    assert_eq!(sol.status, SolveStatus::Optimal);
    assert!((sol.value(t) - oracle).abs() < 1e-6 * oracle.max(1.0), "{} vs {oracle}", sol.value(t));
}

#[test]
fn contradictory_bounds_are_infeasible() {
    let mut p = ConicProgram::new();
    let x = p.var("x");
    let y = p.var("y");
    p.nonneg(x - 1.0, Tag::SpeedLimit);
    p.nonneg(-Affine::from(x), Tag::AccelLimit);
    p.nonneg(y + 5.0, Tag::Bound);
    p.minimize(x + y);
    let sol = run(&p);
    assert_eq!(sol.status, SolveStatus::Infeasible);
    let tags = sol.certificate_tags(&p);
    assert!(tags.contains(&Tag::SpeedLimit) && tags.contains(&Tag::AccelLimit), "{tags:?}");
    assert!(!tags.contains(&Tag::Bound));
}

fn box_program(n: usize, seed: u64) -> (ConicProgram, Vec<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut p = ConicProgram::new();
    let xs = p.vars("x", n);
    let mut obj = Affine::zero();
    let mut c = Vec::new();
    for v in &xs {
        p.nonneg(*v + 1.0, Tag::Bound);
        p.nonneg(Affine::constant(2.0) - *v, Tag::Bound);
        let ci: f64 = rng.random_range(-1.0..1.0);
        obj = obj.plus(*v, ci);
        c.push(ci);
    }
    p.minimize(obj);
    (p, c)
}

#[test]
fn check_solution_contract() {
    let (p, _) = box_program(4, 1);
    let s = run(&p);
    assert_eq!(s.status, SolveStatus::Optimal);
    let rep = check_solution(&p, &s.x);
    assert!(rep.max <= 1e-7, "{rep:?}");
    assert!((p.objective_at(&s.x) - s.objective).abs() <= 1e-9 * s.objective.abs().max(1.0));

    let mut bumped = s.x.clone();
    bumped[2] += 5.0;
    let rep = check_solution(&p, &bumped);
    for id in rep.violated(1e-7) {
        assert!(p.constraint(id).references(Var(2)));
    }
    assert!(!rep.violated(1e-7).is_empty());
}

#[test]
fn rejection_sampled_points_have_zero_violation() {
    let (p, _) = box_program(3, 2);
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut accepted = 0;
    while accepted < 50 {
        let x: Vec<f64> = (0..3).map(|_| rng.random_range(-3.0..3.0)).collect();
        if x.iter().all(|v| (-1.0..=2.0).contains(v)) {
            assert_eq!(check_solution(&p, &x).max, 0.0);
            accepted += 1;
        }
    }
}

#[test]
fn cubic_epigraph_is_exact_on_speed_grid() {
    for i in 0..=47 {
        let speed = 3.0 + i as f64;
        let mut p = ConicProgram::new();
        let vx = p.var("vx");
        let vy = p.var("vy");
        let (c, s) = (0.3f64.cos(), 0.3f64.sin());
        p.eq_zero(vx - speed * c, Tag::Bound);
        p.eq_zero(vy - speed * s, Tag::Bound);
        let t = p.cubic_epigraph(vec![vx.into(), vy.into()], "cube");
        p.minimize(t.into());
        let sol = run(&p);
        assert_eq!(sol.status, SolveStatus::Optimal, "speed {speed}");
        let want = speed.powi(3);
        assert!((sol.value(t) - want).abs() <= 1e-6 * want, "{speed}: {} vs {want}", sol.value(t));
    }
}

#[test]
fn dump_is_stable_and_tagged() {
    let (p, _) = box_program(2, 9);
    assert_eq!(p.dump(), p.clone().dump());
    assert!(p.dump().contains("Bound"));
    assert_eq!(p.count_by_tag()[&Tag::Bound], 4);
}

#[test]
fn solves_are_deterministic() {
    let (p, _) = box_program(5, 4);
    assert_eq!(run(&p), run(&p));
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]
    #[test]
    fn box_optimum_sits_on_bounds(seed in 0u64..1000) {
        let (p, c) = box_program(4, seed);
        let s = run(&p);
        prop_assert_eq!(s.status, SolveStatus::Optimal);
        let want: f64 = c.iter().map(|ci| if *ci > 0.0 { -ci } else { 2.0 * ci }).sum();
        prop_assert!((s.objective - want).abs() < 1e-6);
    }
}
