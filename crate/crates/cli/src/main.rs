use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};
use serde::Serialize;
use serde_json::{json, Value};

use seaplan::cyclical::{evaluate_pattern, optimize_cyclical, write_trace_csv, CyclicalOptions, LapSplit, Pattern};
use seaplan::offline::{solve_offline_sp, OfflinePlan, PlanSource, SaaConfig, SpProblem};
use seaplan::online::{run_ensemble, summarize, write_ensemble_csv, OnlineOptions};
use seaplan::par::Exec;
use seaplan::report::SolveReport;
use seaplan::sca::{plan_fixed_horizon, plan_open, FixedWindProblem, HorizonOptions, ScaOptions};
use seaplan::scenario::{load_scenario, Scenario, Slotting};
use seaplan::wind::WindModel;
use seaplan::{Error, Vec2};

#[derive(Parser, Debug)]
#[command(name = "seaplan", version, about = "Energy-minimal UAV data collection planning under wind")]
struct Cli {
    /// Parent directory for run-stamped output directories.
    #[arg(long, env = "SEAPLAN_OUT", default_value = "runs", global = true)]
    out: PathBuf,
    /// Name of the run directory instead of `<command>-<unix time>`.
    #[arg(long, global = true)]
    run_name: Option<String>,
    /// Worker threads for candidate and seed fan-out (0 = all cores).
    #[arg(long, default_value_t = 0, global = true)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fixed-wind plan between the scenario endpoints.
    PlanFixed(PlanFixedArgs),
    /// Repeated closed laps around the buoys.
    PlanCyclical(PlanCyclicalArgs),
    /// Stochastic reference plan from a fixed-wind plan file.
    PlanSp(PlanSpArgs),
    /// Closed-loop missions over a range of wind seeds.
    Simulate(SimulateArgs),
    /// Cyclical lap-count sweep.
    Sweep(SweepArgs),
    /// Summarise a run directory and write its plot description.
    Report(ReportArgs),
}

#[derive(Args, Debug, Serialize)]
struct PlanFixedArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Mean wind `vx,vy` in m/s; defaults to the scenario's.
    #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true)]
    wind: Option<Vec2>,
    /// Mission duration in seconds; searched around the benchmark when absent.
    #[arg(long)]
    horizon: Option<f64>,
    /// Keep the scenario's endpoint airspeeds instead of free equal ones.
    #[arg(long)]
    fixed_endpoint_speeds: bool,
    #[arg(long, default_value_t = 120)]
    max_slots: usize,
}

#[derive(Args, Debug, Serialize)]
#[group(required = true, multiple = false, id = "split")]
struct SplitArgs {
    /// Bits per buoy per lap.
    #[arg(long = "Q0", group = "split")]
    q0: Option<f64>,
    /// Number of laps.
    #[arg(long = "M", group = "split")]
    m: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct PlanCyclicalArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "circular")]
    pattern: String,
    #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true)]
    wind: Option<Vec2>,
    #[command(flatten)]
    split: SplitArgs,
    /// Slot cap per lap.
    #[arg(long, default_value_t = 100)]
    max_slots: usize,
}

#[derive(Args, Debug, Serialize)]
struct PlanSpArgs {
    #[arg(long)]
    scenario: PathBuf,
    /// Fixed-wind plan file used as the initial point.
    #[arg(long)]
    plan: PathBuf,
    #[arg(long)]
    seed: u64,
    /// Wind deviation per axis (m/s); defaults to the scenario's.
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
    /// Sample paths; defaults to the scenario's.
    #[arg(long)]
    samples: Option<usize>,
}

#[derive(Args, Debug, Serialize)]
struct SimulateArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    plan: PathBuf,
    /// Inclusive seed range `a..b` or a single seed.
    #[arg(long, value_parser = parse_seeds)]
    seeds: SeedRange,
    #[arg(long)]
    sigma: Option<f64>,
    #[arg(long)]
    rho: Option<f64>,
}

#[derive(Args, Debug, Serialize)]
struct SweepArgs {
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long, default_value = "circular")]
    pattern: String,
    #[arg(long, value_parser = parse_vec2, allow_hyphen_values = true)]
    wind: Option<Vec2>,
    /// Lap counts, comma separated.
    #[arg(long = "M", value_delimiter = ',', default_values_t = [6, 10, 15, 20, 30])]
    m: Vec<usize>,
    #[arg(long, default_value_t = 100)]
    max_slots: usize,
}

#[derive(Args, Debug, Serialize)]
struct ReportArgs {
    /// A run directory written by another subcommand.
    #[arg(long)]
    run: PathBuf,
}

#[derive(Debug, Clone, Copy, Serialize)]
struct SeedRange {
    first: u64,
    last: u64,
}

fn parse_vec2(s: &str) -> Result<Vec2, String> {
    let parts: Vec<&str> = s.split(',').collect();
    match parts.as_slice() {
        [x, y] => {
            let x: f64 = x.trim().parse().map_err(|e| format!("{x:?}: {e}"))?;
            let y: f64 = y.trim().parse().map_err(|e| format!("{y:?}: {e}"))?;
            Ok(Vec2::new(x, y))
        }
        _ => Err(format!("expected vx,vy, got {s:?}")),
    }
}

fn parse_seeds(s: &str) -> Result<SeedRange, String> {
    let (a, b) = s.split_once("..").unwrap_or((s, s));
    let first: u64 = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let last: u64 = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if last < first {
        return Err(format!("empty seed range {s}"));
    }
    Ok(SeedRange { first, last })
}

/// Failure with its exit code: 2 input, 3 infeasible, 4 solver.
struct Failure {
    code: u8,
    kind: &'static str,
    message: String,
    path: Option<PathBuf>,
}

fn classify(e: &Error) -> (u8, &'static str, Option<PathBuf>) {
    match e {
        Error::Io { path, .. } => (2, "io", Some(path.clone())),
        Error::Parse { path, .. } => (2, "parse", Some(path.clone())),
        Error::Validation(_) => (2, "validation", None),
        Error::DimensionMismatch(_) => (2, "dimension", None),
        Error::PlanMismatch(_) => (2, "plan-mismatch", None),
        Error::Csv(_) => (2, "csv", None),
        Error::InitInfeasible { .. } => (3, "init-infeasible", None),
        Error::NoFeasibleInit(_) => (3, "no-feasible-init", None),
        Error::Infeasible { .. } => (3, "infeasible", None),
        Error::ZeroAirspeed { .. } => (4, "zero-airspeed", None),
        Error::Solver { .. } => (4, "solver", None),
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let (code, kind, path) = classify(&e);
        Failure {
            code,
            kind,
            message: e.to_string(),
            path,
        }
    }
}

impl Failure {
    fn input(message: String) -> Self {
        Failure {
            code: 2,
            kind: "input",
            message,
            path: None,
        }
    }

    fn record(&self) -> Value {
        json!({
            "error": self.kind,
            "exit_code": self.code,
            "message": self.message,
            "path": self.path.as_ref().map(|p| p.display().to_string()),
        })
    }
}

type Outcome<T> = Result<T, Failure>;

struct Run {
    dir: PathBuf,
    artifacts: Vec<String>,
}

impl Run {
    fn create(cli: &Cli, command: &str) -> Outcome<Self> {
        let name = cli.run_name.clone().unwrap_or_else(|| {
            let secs = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0, |d| d.as_secs());
            format!("{command}-{secs}")
        });
        let mut dir = cli.out.join(&name);
        let mut k = 1;
        while cli.run_name.is_none() && dir.exists() {
            dir = cli.out.join(format!("{name}-{k}"));
            k += 1;
        }
        std::fs::create_dir_all(&dir).map_err(|e| Failure::from(Error::Io { path: dir.clone(), source: e }))?;
        Ok(Run { dir, artifacts: vec![] })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        self.artifacts.push(name.to_string());
        self.dir.join(name)
    }

    fn write_json(&mut self, name: &str, v: &impl Serialize) -> Outcome<()> {
        let path = self.path(name);
        let text = serde_json::to_string_pretty(v).expect("serialisable");
        std::fs::write(&path, text).map_err(|e| Error::Io { path, source: e }.into())
    }

    fn write_text(&mut self, name: &str, body: &str) -> Outcome<()> {
        let path = self.path(name);
        std::fs::write(&path, body).map_err(|e| Error::Io { path, source: e }.into())
    }

    fn save_report(&mut self, r: &SolveReport) -> Outcome<()> {
        r.save(&self.dir)?;
        for f in [seaplan::report::TRAJECTORY_FILE, seaplan::report::SCHEDULE_FILE, seaplan::report::SUMMARY_FILE] {
            self.artifacts.push(f.into());
        }
        Ok(())
    }

    fn save_plan(&mut self, plan: &OfflinePlan) -> Outcome<()> {
        self.save_plan_as("plan.json", plan)
    }

    fn save_plan_as(&mut self, name: &str, plan: &OfflinePlan) -> Outcome<()> {
        let path = self.path(name);
        plan.save(&path)?;
        Ok(())
    }
}

fn load(path: &Path) -> Outcome<Scenario> {
    Ok(load_scenario(path)?)
}

fn pattern(s: &str) -> Outcome<Pattern> {
    s.parse().map_err(Failure::input)
}

fn manifest(cli: &Cli, command: &str, args: &impl Serialize, scenario: &Scenario, extra: Value) -> Value {
    json!({
        "command": command,
        "version": env!("CARGO_PKG_VERSION"),
        "jobs": cli.jobs,
        "parallel": cfg!(feature = "parallel"),
        "args": args,
        "scenario": scenario,
        "defaults_applied": scenario.defaults_applied(),
        "effective": extra,
    })
}

fn finish(run: &mut Run, mut manifest: Value, result: Value) -> Outcome<Value> {
    run.artifacts.push("manifest.json".into());
    manifest["artifacts"] = json!(run.artifacts);
    manifest["result"] = result.clone();
    let path = run.dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("serialisable");
    std::fs::write(&path, text).map_err(|e| Failure::from(Error::Io { path, source: e }))?;
    Ok(json!({ "run_dir": run.dir.display().to_string(), "result": result }))
}

fn plan_fixed(cli: &Cli, a: &PlanFixedArgs, run: &mut Run) -> Outcome<Value> {
    let sc = load(&a.scenario)?;
    let wind = a.wind.unwrap_or(sc.wind.mean);
    let opts = HorizonOptions {
        max_slots: a.max_slots,
        transit: !a.fixed_endpoint_speeds,
        ..HorizonOptions::default()
    };
    let (plan, benchmark) = match a.horizon {
        Some(t) => (plan_fixed_horizon(&sc, wind, t, &opts)?, None),
        None => {
            let p = plan_open(&sc, wind, &opts)?;
            (p.best, Some(p.benchmark))
        }
    };
    let problem = if opts.transit {
        FixedWindProblem::transit(&sc, wind, plan.slotting)?
    } else {
        FixedWindProblem::open(&sc, wind, plan.slotting)?
    };
    let report = SolveReport::from_fixed(&plan, &sc.targets());
    run.save_report(&report)?;
    plan.write_log_csv(&run.path("iterations.csv"))?;
    run.save_plan(&OfflinePlan::from_trajectory(PlanSource::FixedWind, &problem, &plan.trajectory, &plan.schedule)?)?;
    if let Some(b) = &benchmark {
        let slotting = Slotting {
            slot_s: b.trajectory.slot_s,
            n_slots: b.trajectory.n_slots(),
        };
        let bp = FixedWindProblem::transit(&sc, wind, slotting)?;
        let plan = OfflinePlan::from_trajectory(PlanSource::Benchmark, &bp, &b.trajectory, &b.schedule)?;
        run.save_plan_as("benchmark_plan.json", &plan)?;
    }
    let m = manifest(
        cli,
        "plan-fixed",
        a,
        &sc,
        json!({ "wind": wind, "transit": opts.transit, "max_slots": opts.max_slots, "sca_tol": opts.sca.tol, "sca_max_iters": opts.sca.max_iters }),
    );
    let result = json!({
        "energy_J": plan.energy.total,
        "slots": plan.slotting.n_slots + 1,
        "slot_s": plan.slotting.slot_s,
        "termination": format!("{:?}", plan.termination),
        "benchmark_energy_J": benchmark.as_ref().map(|b| b.energy_j),
    });
    finish(run, m, result)
}

fn cyclical_options(p: Pattern, max_slots: usize, exec: Exec) -> CyclicalOptions {
    let mut o = CyclicalOptions::new(p);
    o.search.max_slots = max_slots;
    o.search.exec = exec;
    o
}

fn plan_cyclical(cli: &Cli, a: &PlanCyclicalArgs, run: &mut Run) -> Outcome<Value> {
    let sc = load(&a.scenario)?;
    let wind = a.wind.unwrap_or(sc.wind.mean);
    let p = pattern(&a.pattern)?;
    let split = match (a.split.q0, a.split.m) {
        (Some(q0), _) if q0 > 0.0 => LapSplit::PerLap(q0),
        (_, Some(m)) if m > 0 => LapSplit::Laps(m),
        _ => return Err(Failure::input("Q0 must be > 0 and M >= 1".into())),
    };
    let opts = cyclical_options(p, a.max_slots, Exec::default());
    let plan = optimize_cyclical(&sc, split, wind, &opts)?;
    let problem = FixedWindProblem::periodic(&sc, wind, plan.lap.slotting, plan.per_lap.clone());
    run.save_report(&SolveReport::from_fixed(&plan.lap, &plan.per_lap))?;
    plan.lap.write_log_csv(&run.path("iterations.csv"))?;
    write_trace_csv(&plan.trace, &run.path("trace.csv"))?;
    run.save_plan(&OfflinePlan::from_trajectory(PlanSource::FixedWind, &problem, &plan.lap.trajectory, &plan.lap.schedule)?)?;
    let ip = plan.initial;
    let (_, bench) = evaluate_pattern(&sc, wind, &plan.per_lap, p, ip.period, ip.radius, ip.theta_deg, a.max_slots);
    let bench_energy = match bench {
        Some(b) => {
            let bp = FixedWindProblem::periodic(&sc, wind, b.slotting, plan.per_lap.clone());
            run.save_plan_as("benchmark_plan.json", &OfflinePlan::from_trajectory(PlanSource::Benchmark, &bp, &b.trajectory, &b.schedule)?)?;
            Some(b.energy_j)
        }
        None => None,
    };
    let m = manifest(
        cli,
        "plan-cyclical",
        a,
        &sc,
        json!({ "wind": wind, "pattern": p, "period_factors": opts.period_factors, "theta_offsets": opts.theta_offsets, "max_slots": a.max_slots }),
    );
    let result = json!({
        "laps": plan.laps,
        "per_lap_bits": plan.per_lap,
        "lap_energy_J": plan.lap.energy.total,
        "total_energy_J": plan.total_energy_j,
        "initial_pattern": plan.initial,
        "initial_energy_J": plan.initial_energy_j,
        "benchmark_lap_energy_J": bench_energy,
        "orientation_deg": plan.orientation_deg,
    });
    finish(run, m, result)
}

fn with_overrides(mut model: WindModel, mean: Vec2, sigma: Option<f64>, rho: Option<f64>) -> WindModel {
    model.mean = mean;
    if let Some(s) = sigma {
        model.sigma_f = s;
    }
    if let Some(r) = rho {
        model.rho_c = r;
    }
    model
}

fn plan_sp(cli: &Cli, a: &PlanSpArgs, run: &mut Run) -> Outcome<Value> {
    let sc = load(&a.scenario)?;
    let init = OfflinePlan::load(&a.plan)?;
    let problem = init.problem(&sc)?;
    let model = with_overrides(sc.wind, init.mean_wind, a.sigma, a.rho);
    let mut config = SaaConfig::from_scenario(&sc, a.seed);
    if let Some(s) = a.samples {
        config.samples = s;
    }
    let exec = Exec::default();
    let sp = SpProblem::new(problem, model, config, exec)?;
    let plan = solve_offline_sp(&sp, &init.trajectory(), &init.schedule(), &ScaOptions::default(), exec)?;
    run.save_report(&SolveReport::from_offline(&plan, &sc.energy)?)?;
    run.save_plan(&plan)?;
    let m = manifest(cli, "plan-sp", a, &sc, json!({ "wind_model": model, "saa": config }));
    let result = json!({
        "objective_J": plan.objective_j,
        "initial_objective_J": init.objective_j,
        "iterations": plan.log.len().saturating_sub(1),
        "termination": format!("{:?}", plan.termination),
        "saa": plan.saa,
    });
    finish(run, m, result)
}

fn simulate(cli: &Cli, a: &SimulateArgs, run: &mut Run) -> Outcome<Value> {
    let sc = load(&a.scenario)?;
    let plan = OfflinePlan::load(&a.plan)?;
    plan.check_scenario(&sc)?;
    let model = with_overrides(sc.wind, plan.mean_wind, a.sigma, a.rho);
    let opts = OnlineOptions::from_scenario(&sc);
    let seeds: Vec<u64> = (a.seeds.first..=a.seeds.last).collect();
    let runs = run_ensemble(&sc, &plan, &model, &seeds, &opts, Exec::default())?;
    std::fs::create_dir_all(run.dir.join("runs")).map_err(|e| Failure::from(Error::Io { path: run.dir.join("runs"), source: e }))?;
    for r in &runs {
        r.write_csv(&run.path(&format!("runs/seed_{}.csv", r.seed)))?;
    }
    write_ensemble_csv(&runs, &run.path("ensemble.csv"))?;
    let summary = summarize(&plan, &runs);
    run.write_json("ensemble.json", &summary)?;
    let m = manifest(cli, "simulate", a, &sc, json!({ "wind_model": model, "online": opts, "plan_source": plan.source }));
    let result = serde_json::to_value(summary).expect("serialisable");
    finish(run, m, result)
}

fn sweep(cli: &Cli, a: &SweepArgs, run: &mut Run) -> Outcome<Value> {
    let sc = load(&a.scenario)?;
    let wind = a.wind.unwrap_or(sc.wind.mean);
    let p = pattern(&a.pattern)?;
    if a.m.is_empty() || a.m.contains(&0) {
        return Err(Failure::input("lap counts must be >= 1".into()));
    }
    let opts = cyclical_options(p, a.max_slots, Exec::Sequential);
    let plans = Exec::default().map(&a.m, |&m| optimize_cyclical(&sc, LapSplit::Laps(m), wind, &opts));
    let mut body = String::from("M,per_lap_bits,lap_energy_J,total_energy_J,status\n");
    let mut rows = vec![];
    for (m, r) in a.m.iter().zip(&plans) {
        match r {
            Ok(plan) => {
                body.push_str(&format!("{m},{},{},{},ok\n", plan.per_lap[0], plan.lap.energy.total, plan.total_energy_j));
                rows.push(json!({ "M": m, "total_energy_J": plan.total_energy_j }));
            }
            Err(e) => {
                body.push_str(&format!("{m},,,,{}\n", classify(e).1));
                rows.push(json!({ "M": m, "error": e.to_string() }));
            }
        }
    }
    run.write_text("sweep.csv", &body)?;
    run.write_json(
        "sweep.plot.json",
        &json!({
            "title": "Total energy over lap count",
            "series": [{ "file": "sweep.csv", "x": "M", "y": "total_energy_J", "kind": "line" }],
            "x_label": "laps M",
            "y_label": "energy (J)",
        }),
    )?;
    let best = a
        .m
        .iter()
        .zip(&plans)
        .filter_map(|(m, r)| r.as_ref().ok().map(|p| (*m, p.total_energy_j)))
        .min_by(|x, y| x.1.total_cmp(&y.1));
    let m = manifest(cli, "sweep", a, &sc, json!({ "wind": wind, "pattern": p }));
    finish(run, m, json!({ "rows": rows, "best_M": best.map(|b| b.0) }))
}

fn report(a: &ReportArgs) -> Outcome<Value> {
    let path = a.run.join("manifest.json");
    let text = std::fs::read_to_string(&path).map_err(|e| Failure::from(Error::Io { path: path.clone(), source: e }))?;
    let manifest: Value = serde_json::from_str(&text).map_err(|e| {
        Failure::from(Error::Parse {
            path: path.clone(),
            message: e.to_string(),
        })
    })?;
    let artifacts: Vec<String> = manifest["artifacts"]
        .as_array()
        .map(|v| v.iter().filter_map(|s| s.as_str().map(String::from)).collect())
        .unwrap_or_default();
    let has = |f: &str| artifacts.iter().any(|a| a == f);
    let mut series = vec![];
    if has("trajectory.csv") {
        series.push(json!({ "file": "trajectory.csv", "x": "x", "y": "y", "kind": "path", "title": "Trajectory" }));
        series.push(json!({ "file": "schedule.csv", "x": "slot", "y": "tau_*", "kind": "step", "title": "Time allocation" }));
    }
    if has("iterations.csv") {
        series.push(json!({ "file": "iterations.csv", "x": "iteration", "y": "objective_J", "kind": "line", "title": "SCA descent" }));
    }
    if has("ensemble.csv") {
        series.push(json!({ "file": "ensemble.csv", "x": "seed", "y": ["total_J", "baseline_J"], "kind": "scatter", "title": "Ensemble energy" }));
    }
    if has("sweep.csv") {
        series.push(json!({ "file": "sweep.csv", "x": "M", "y": "total_energy_J", "kind": "line", "title": "Lap count sweep" }));
    }
    let plot = json!({ "command": manifest["command"], "series": series });
    let out = a.run.join("plot.json");
    std::fs::write(&out, serde_json::to_string_pretty(&plot).expect("serialisable"))
        .map_err(|e| Failure::from(Error::Io { path: out.clone(), source: e }))?;
    Ok(json!({ "run_dir": a.run.display().to_string(), "command": manifest["command"], "result": manifest["result"], "plot": out.display().to_string() }))
}

fn dispatch(cli: &Cli) -> (Outcome<Value>, Option<PathBuf>) {
    let name = match &cli.command {
        Command::PlanFixed(_) => "plan-fixed",
        Command::PlanCyclical(_) => "plan-cyclical",
        Command::PlanSp(_) => "plan-sp",
        Command::Simulate(_) => "simulate",
        Command::Sweep(_) => "sweep",
        Command::Report(a) => return (report(a), None),
    };
    let mut run = match Run::create(cli, name) {
        Ok(r) => r,
        Err(f) => return (Err(f), None),
    };
    let out = match &cli.command {
        Command::PlanFixed(a) => plan_fixed(cli, a, &mut run),
        Command::PlanCyclical(a) => plan_cyclical(cli, a, &mut run),
        Command::PlanSp(a) => plan_sp(cli, a, &mut run),
        Command::Simulate(a) => simulate(cli, a, &mut run),
        Command::Sweep(a) => sweep(cli, a, &mut run),
        Command::Report(_) => unreachable!(),
    };
    (out, Some(run.dir))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (out, dir) = if cli.jobs > 0 {
        Exec::with_jobs(cli.jobs, || dispatch(&cli))
    } else {
        dispatch(&cli)
    };
    match out {
        Ok(v) => {
            println!("{}", serde_json::to_string_pretty(&v).expect("serialisable"));
            ExitCode::SUCCESS
        }
        Err(f) => {
            let record = f.record();
            if let Some(dir) = dir {
                let _ = std::fs::write(dir.join("error.json"), serde_json::to_string_pretty(&record).expect("serialisable"));
            }
            eprintln!("{record}");
            ExitCode::from(f.code)
        }
    }
}
