//! Acceptance criteria, one PASS/FAIL line each. Runs as a plain binary so
//! the lines always reach the test log; exits non-zero if any check fails.

use std::time::Instant;

use seaplan::cyclical::{evaluate_pattern, optimize_cyclical, CyclicalOptions, CyclicalPlan, LapSplit, Pattern};
use seaplan::energy::{optimal_loiter_speed, propulsion_power};
use seaplan::offline::{solve_offline_sp, OfflinePlan, PlanSource, SaaConfig, SpProblem};
use seaplan::online::{run_ensemble, run_ho2, summarize, EnsembleSummary, OnlineOptions};
use seaplan::par::Exec;
use seaplan::sca::{plan_fixed_horizon, plan_open, sca_solve, straight_line_init, FixedWindPlan, FixedWindProblem, HorizonOptions, OpenPlan, ScaOptions};
use seaplan::scenario::{Buoy, Endpoints, Scenario};
use seaplan::wind::WindModel;
use seaplan::Vec2;

struct Ledger {
    rows: Vec<(String, bool)>,
}

impl Ledger {
    fn check(&mut self, id: &str, pass: bool, detail: String) {
        println!("criterion {id}: {} {detail}", if pass { "PASS" } else { "FAIL" });
        self.rows.push((id.to_string(), pass));
    }
}

fn single(bits: f64) -> Scenario {
    Scenario::with_defaults(vec![Buoy {
        id: 1,
        position: Vec2::ZERO,
        target_volume: bits,
    }])
}

fn chain(bits: f64) -> Scenario {
    let mut s = single(bits);
    s.endpoints = Some(Endpoints {
        q0: Vec2::new(-600.0, 0.0),
        qf: Vec2::new(600.0, 0.0),
        v0: Vec2::new(30.0, 0.0),
        vf: Vec2::new(30.0, 0.0),
    });
    s
}

fn multi_buoy() -> Scenario {
    let buoys = [(300.0, 300.0), (600.0, -300.0), (900.0, 300.0)]
        .iter()
        .enumerate()
        .map(|(i, p)| Buoy {
            id: i as u32 + 1,
            position: Vec2::new(p.0, p.1),
            target_volume: 2e8,
        })
        .collect();
    let mut s = Scenario::with_defaults(buoys);
    s.endpoints = Some(Endpoints {
        q0: Vec2::ZERO,
        qf: Vec2::new(1200.0, 0.0),
        v0: Vec2::new(20.0, 0.0),
        vf: Vec2::new(20.0, 0.0),
    });
    s
}

fn non_increasing(plan: &FixedWindPlan) -> bool {
    plan.log
        .windows(2)
        .all(|w| w[1].objective_j <= w[0].objective_j + 1e-9 * w[0].objective_j.abs())
}

fn criterion_1(l: &mut Ledger) {
    let e = single(0.0).energy;
    let t = Instant::now();
    let v = optimal_loiter_speed(&e);
    let p = propulsion_power(Vec2::new(v, 0.0), Vec2::ZERO, &e).unwrap();
    let us = t.elapsed().as_secs_f64() * 1e6;
    l.check(
        "1 loiter speed",
        (v - 30.0).abs() <= 0.01 && (p - 100.0).abs() <= 0.1 && us < 1000.0,
        format!("v* = {v:.4} m/s, P(v*) = {p:.4} W, {us:.0} us"),
    );
}

/// `(Q, wind x) -> plan` on the chain fixture.
fn chain_cells() -> Vec<(f64, f64, OpenPlan)> {
    let mut out = vec![];
    for q in [2e8, 8e8] {
        for w in [5.0, 0.0, -5.0] {
            let plan = plan_open(&chain(q), Vec2::new(w, 0.0), &HorizonOptions::default()).unwrap();
            out.push((q, w, plan));
        }
    }
    out
}

fn criterion_2(l: &mut Ledger, cells: &[(f64, f64, OpenPlan)]) {
    let mut bad = vec![];
    let mut runs = 0;
    for (q, w, p) in cells {
        let s = chain(*q);
        let problem = FixedWindProblem::transit(&s, Vec2::new(*w, 0.0), p.best.slotting).unwrap();
        let again = straight_line_init(&problem).and_then(|(t, c)| sca_solve(&problem, &t, &c, &ScaOptions::default()));
        for plan in std::iter::once(&p.best).chain(again.as_ref().ok()) {
            runs += 1;
            if !non_increasing(plan) || !plan.check.passes(1e-6) {
                bad.push(format!("Q={:.0}M w={w}", q / 1e6));
            }
        }
    }
    l.check(
        "2 SCA monotone descent",
        bad.is_empty(),
        format!("{runs} runs over Q in {{200,800}} Mbit x wind {{+5,0,-5}}; failing: {bad:?}"),
    );
}

fn criterion_3(l: &mut Ledger, cells: &[(f64, f64, OpenPlan)]) {
    let get = |q: f64, w: f64| cells.iter().find(|c| c.0 == q && c.1 == w).unwrap();
    let bench = |q, w| get(q, w).2.benchmark.energy_j;
    let small = bench(2e8, 5.0) < bench(2e8, 0.0) && bench(2e8, 0.0) < bench(2e8, -5.0);
    let large = bench(8e8, -5.0) < bench(8e8, 0.0) && bench(8e8, 0.0) < bench(8e8, 5.0);
    l.check(
        "3a benchmark ordering",
        small && large,
        format!(
            "Q=200M tail/calm/head {:.0}/{:.0}/{:.0} J; Q=800M tail/calm/head {:.0}/{:.0}/{:.0} J",
            bench(2e8, 5.0),
            bench(2e8, 0.0),
            bench(2e8, -5.0),
            bench(8e8, 5.0),
            bench(8e8, 0.0),
            bench(8e8, -5.0)
        ),
    );
    let gains: Vec<String> = cells
        .iter()
        .map(|(q, w, p)| format!("Q={:.0}M w={w:+}: {:.1}%", q / 1e6, 100.0 * (1.0 - p.best.energy.total / p.benchmark.energy_j)))
        .collect();
    let margin = cells.iter().all(|(_, _, p)| p.best.energy.total <= 0.9 * p.benchmark.energy_j);
    l.check("3b SCA beats benchmark by >= 10% in every cell", margin, format!("{gains:?}"));
}

fn criterion_4(l: &mut Ledger) {
    let s = single(6e9);
    let grid = [6usize, 10, 15, 20, 30];
    let opts = CyclicalOptions::new(Pattern::Circular);
    let energies: Vec<f64> = grid
        .iter()
        .map(|m| optimize_cyclical(&s, LapSplit::Laps(*m), Vec2::ZERO, &opts).unwrap().total_energy_j)
        .collect();
    let arg = (0..grid.len()).min_by(|a, b| energies[*a].total_cmp(&energies[*b])).unwrap();
    let interior = arg > 0 && arg + 1 < grid.len();
    let near_20 = (arg as i64 - 3).abs() <= 1;
    let rows: Vec<String> = grid.iter().zip(&energies).map(|(m, e)| format!("M={m}: {:.0} J", e)).collect();
    l.check(
        "4 cyclical optimum shape",
        interior && near_20,
        format!("minimum at M={}; {rows:?}", grid[arg]),
    );
}

const EIGHT_WIND: Vec2 = Vec2 { x: 0.0, y: 10.0 };

fn criterion_5(l: &mut Ledger, cyc: &CyclicalPlan) {
    let s = single(4e8);
    let ip = cyc.initial;
    let (_, bench) = evaluate_pattern(&s, EIGHT_WIND, &cyc.per_lap, Pattern::Eight, ip.period, ip.radius, ip.theta_deg, 100);
    let bench = bench.unwrap();
    let dev = (cyc.orientation_deg.rem_euclid(180.0) - 90.0).abs();
    l.check(
        "5a 8-shape orientation",
        dev <= 30.0,
        format!("refined lap axis at {:.1} deg from the wind ({dev:.1} deg off perpendicular)", cyc.orientation_deg),
    );
    let thetas = CyclicalOptions::new(Pattern::Eight).search.thetas;
    let refined = Exec::default().map(&thetas, |th| {
        let (_, start) = evaluate_pattern(&s, EIGHT_WIND, &cyc.per_lap, Pattern::Eight, ip.period, ip.radius, *th, 100);
        let start = start?;
        let problem = FixedWindProblem::periodic(&s, EIGHT_WIND, start.slotting, cyc.per_lap.clone());
        sca_solve(&problem, &start.trajectory, &start.schedule, &ScaOptions::default())
            .ok()
            .map(|p| p.energy.total)
    });
    let worst = refined.iter().map(|e| e.unwrap_or(f64::INFINITY)).fold(0.0, f64::max);
    let best = refined.iter().map(|e| e.unwrap_or(f64::INFINITY)).fold(f64::INFINITY, f64::min);
    l.check(
        "5b 8-shape beats exact pattern from every initial angle",
        worst < bench.energy_j,
        format!("benchmark {:.0} J; refined over {} angles: best {best:.0} J, worst {worst:.0} J", bench.energy_j, thetas.len()),
    );
}

struct EightPlans {
    fixed: OfflinePlan,
    bench: OfflinePlan,
    problem: FixedWindProblem,
}

fn eight_plans(cyc: &CyclicalPlan) -> EightPlans {
    let s = single(4e8);
    let ip = cyc.initial;
    let (_, b) = evaluate_pattern(&s, EIGHT_WIND, &cyc.per_lap, Pattern::Eight, ip.period, ip.radius, ip.theta_deg, 100);
    let b = b.unwrap();
    let problem = FixedWindProblem::periodic(&s, EIGHT_WIND, cyc.lap.slotting, cyc.per_lap.clone());
    let bp = FixedWindProblem::periodic(&s, EIGHT_WIND, b.slotting, cyc.per_lap.clone());
    EightPlans {
        fixed: OfflinePlan::from_trajectory(PlanSource::FixedWind, &problem, &cyc.lap.trajectory, &cyc.lap.schedule).unwrap(),
        bench: OfflinePlan::from_trajectory(PlanSource::Benchmark, &bp, &b.trajectory, &b.schedule).unwrap(),
        problem,
    }
}

fn sp_plan(problem: &FixedWindProblem, init: &OfflinePlan, model: WindModel) -> OfflinePlan {
    let s = &problem.scenario;
    let sp = SpProblem::new(problem.clone(), model, SaaConfig::from_scenario(s, 7), Exec::default()).unwrap();
    solve_offline_sp(&sp, &init.trajectory(), &init.schedule(), &ScaOptions::default(), Exec::default()).unwrap()
}

fn ensemble(plan: &OfflinePlan, model: WindModel, seeds: &[u64]) -> EnsembleSummary {
    let s = single(4e8);
    let runs = run_ensemble(&s, plan, &model, seeds, &OnlineOptions::from_scenario(&s), Exec::default()).unwrap();
    summarize(plan, &runs)
}

fn criterion_6(l: &mut Ledger, e: &EightPlans) -> Vec<OfflinePlan> {
    let seeds: Vec<u64> = (1000..1030).collect();
    let mut ordered = true;
    let mut below = true;
    let mut gaps = vec![];
    let mut rows = vec![];
    let mut sps = vec![];
    for sigma in [0.5, 1.0, 1.5, 2.0] {
        let model = WindModel {
            mean: EIGHT_WIND,
            sigma_f: sigma,
            rho_c: 0.5,
        };
        let sp = sp_plan(&e.problem, &e.fixed, model);
        let [a, b, c] = [&sp, &e.fixed, &e.bench].map(|p| ensemble(p, model, &seeds));
        ordered &= a.mean_energy_j <= b.mean_energy_j && b.mean_energy_j <= c.mean_energy_j;
        below &= [&a, &b, &c].iter().all(|m| m.mean_energy_j <= m.mean_baseline_j);
        gaps.push(a.mean_baseline_j - a.mean_energy_j);
        rows.push(format!(
            "s={sigma}: SP {:.0} / fixed {:.0} / bench {:.0} J, SP baseline {:.0} J",
            a.mean_energy_j, b.mean_energy_j, c.mean_energy_j, a.mean_baseline_j
        ));
        sps.push(sp);
    }
    let widening = gaps.windows(2).all(|g| g[1] >= g[0]);
    l.check("6a SP <= fixed <= benchmark (30 seeds)", ordered, format!("{rows:?}"));
    l.check(
        "6b HO2 below baseline, gap non-decreasing",
        below && widening,
        format!("SP gap by sigma {:?} J", gaps.iter().map(|g| g.round()).collect::<Vec<_>>()),
    );
    sps
}

fn criterion_7(l: &mut Ledger) -> (Scenario, OfflinePlan, WindModel) {
    let s = multi_buoy();
    let head = Vec2::new(-10.0, 0.0);
    let opts = HorizonOptions::default();
    let calm = plan_fixed_horizon(&s, Vec2::ZERO, 90.0, &opts).unwrap();
    let windy = plan_fixed_horizon(&s, head, 90.0, &opts).unwrap();
    let (e0, e1) = (calm.energy.total, windy.energy.total);
    let cut = 1.0 - e1 / e0;
    l.check(
        "7a multi-buoy energies",
        (e0 / 10490.0 - 1.0).abs() <= 0.15 && (e1 / 9400.0 - 1.0).abs() <= 0.15 && cut >= 0.05,
        format!("no wind {:.2} kJ, headwind {:.2} kJ, reduction {:.1}%", e0 / 1e3, e1 / 1e3, 100.0 * cut),
    );
    let problem = FixedWindProblem::transit(&s, head, windy.slotting).unwrap();
    let fixed = OfflinePlan::from_trajectory(PlanSource::FixedWind, &problem, &windy.trajectory, &windy.schedule).unwrap();
    let model = WindModel {
        mean: head,
        sigma_f: 1.0,
        rho_c: 0.5,
    };
    let sp = sp_plan(&problem, &fixed, model);
    let seeds: Vec<u64> = (1000..1030).collect();
    let runs = run_ensemble(&s, &sp, &model, &seeds, &OnlineOptions::from_scenario(&s), Exec::default()).unwrap();
    let m = summarize(&sp, &runs);
    let (lo, hi) = (9460.0 * 0.9, 9520.0 * 1.1);
    l.check(
        "7b multi-buoy HO2 at sigma 1",
        (lo..=hi).contains(&m.mean_energy_j),
        format!("mean {:.2} kJ over 30 seeds, band [{:.2}, {:.2}] kJ", m.mean_energy_j / 1e3, lo / 1e3, hi / 1e3),
    );
    (s, sp, model)
}

fn criterion_8(l: &mut Ledger, eight_sp: &OfflinePlan, multi: &(Scenario, OfflinePlan, WindModel)) {
    let seeds: Vec<u64> = (1..=100).collect();
    let model = WindModel {
        mean: EIGHT_WIND,
        sigma_f: 1.0,
        rho_c: 0.5,
    };
    let a = ensemble(eight_sp, model, &seeds);
    let (s, plan, mm) = multi;
    let runs = run_ensemble(s, plan, mm, &seeds, &OnlineOptions::from_scenario(s), Exec::default()).unwrap();
    let b = summarize(plan, &runs);
    let ok = |m: &EnsembleSummary| m.breaches == 0 && m.unrecovered_steps == 0 && m.max_shortfall_ratio <= 0.01;
    l.check(
        "8 feasible online operation (100 runs)",
        ok(&a) && ok(&b),
        format!(
            "8-shape: {} breaches, {} unrecovered, shortfall {:.3}%; multi-buoy: {} breaches, {} unrecovered, shortfall {:.3}%",
            a.breaches,
            a.unrecovered_steps,
            100.0 * a.max_shortfall_ratio,
            b.breaches,
            b.unrecovered_steps,
            100.0 * b.max_shortfall_ratio
        ),
    );
}

fn criterion_9(l: &mut Ledger, e: &EightPlans, cyc: &CyclicalPlan) {
    let s = single(4e8);
    let model = WindModel::fixed(EIGHT_WIND);
    let sp = sp_plan(&e.problem, &e.fixed, model);
    let rel = (sp.objective_j - cyc.lap.energy.total).abs() / cyc.lap.energy.total;
    let run = run_ho2(&s, &sp, &model, 11, &OnlineOptions::from_scenario(&s)).unwrap();
    let drift = (run.total_energy_j - sp.objective_j).abs() / sp.objective_j;
    l.check(
        "9 fixed-wind equivalence",
        rel <= 0.01 && drift <= 0.005,
        format!(
            "SP {:.1} J vs SCA {:.1} J ({:.3}%); HO2 {:.1} J ({:.3}% from plan)",
            sp.objective_j,
            cyc.lap.energy.total,
            100.0 * rel,
            run.total_energy_j,
            100.0 * drift
        ),
    );
}

fn main() {
    if std::env::args().any(|a| a == "--list") {
        println!("acceptance: test");
        return;
    }
    let start = Instant::now();
    let mut l = Ledger { rows: vec![] };
    criterion_1(&mut l);
    let cells = chain_cells();
    criterion_2(&mut l, &cells);
    criterion_3(&mut l, &cells);
    criterion_4(&mut l);
    let cyc = optimize_cyclical(&single(4e8), LapSplit::Laps(1), EIGHT_WIND, &CyclicalOptions::new(Pattern::Eight)).unwrap();
    criterion_5(&mut l, &cyc);
    let plans = eight_plans(&cyc);
    let sps = criterion_6(&mut l, &plans);
    let multi = criterion_7(&mut l);
    criterion_8(&mut l, &sps[1], &multi);
    criterion_9(&mut l, &plans, &cyc);
    println!(
        "criterion 10 full-scale caveat: exact joule values are not compared; criteria 3-6 check orderings and shapes (not a check)"
    );
    let failed: Vec<&str> = l.rows.iter().filter(|r| !r.1).map(|r| r.0.as_str()).collect();
    println!(
        "acceptance: {} checks, {} passed, {} failed {failed:?} in {:.0} s",
        l.rows.len(),
        l.rows.len() - failed.len(),
        failed.len(),
        start.elapsed().as_secs_f64()
    );
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
