use super::*;
use crate::sca::{sca_solve, straight_line_init, FixedWindProblem, ScaOptions};
use crate::scenario::{Buoy, Endpoints, Scenario, Slotting};

fn three_buoy_plan() -> (FixedWindPlan, Vec<f64>) {
    let buoys = (0..3)
        .map(|i| Buoy {
            id: i + 1,
            position: Vec2::new(-300.0 + 300.0 * i as f64, 80.0),
            target_volume: 5e7,
        })
        .collect();
    let mut s = Scenario::with_defaults(buoys);
    s.endpoints = Some(Endpoints {
        q0: Vec2::new(-600.0, 0.0),
        qf: Vec2::new(600.0, 0.0),
        v0: Vec2::new(30.0, 0.0),
        vf: Vec2::new(30.0, 0.0),
    });
    let p = FixedWindProblem::transit(&s, Vec2::new(3.0, 0.0), Slotting::for_horizon(50.0, 1.0, 100)).unwrap();
    let (t, sc) = straight_line_init(&p).unwrap();
    (sca_solve(&p, &t, &sc, &ScaOptions::default()).unwrap(), s.targets())
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-9 * a.abs().max(b.abs()).max(1.0)
}

#[test]
fn files_have_contracted_shape_and_round_trip() {
    let (plan, targets) = three_buoy_plan();
    let r = SolveReport::from_fixed(&plan, &targets);
    assert!(r.targets_met(1e-6));
    let dir = tempfile::tempdir().unwrap();
    r.save(dir.path()).unwrap();

    let traj = std::fs::read_to_string(dir.path().join(TRAJECTORY_FILE)).unwrap();
    assert!(traj.starts_with("slot,x,y,vex,vey,vax,vay,ax,ay,windx,windy\n"));
    assert_eq!(traj.lines().count() - 1, plan.slotting.n_slots + 2);
    let sched = std::fs::read_to_string(dir.path().join(SCHEDULE_FILE)).unwrap();
    assert_eq!(sched.lines().next().unwrap(), "slot,tau_1,tau_2,tau_3");

    let back = SolveReport::load(dir.path()).unwrap();
    assert_eq!(back.summary, r.summary);
    let pairs = |t: &Trajectory| -> Vec<f64> {
        t.q.iter()
            .chain(&t.v_e)
            .chain(&t.v_air)
            .chain(&t.wind)
            .chain(&t.accel)
            .flat_map(|v| [v.x, v.y])
            .collect()
    };
    for (a, b) in pairs(&r.trajectory).iter().zip(pairs(&back.trajectory)) {
        assert!(close(*a, b), "{a} vs {b}");
    }
    for (a, b) in r.schedule.tau.iter().flatten().zip(back.schedule.tau.iter().flatten()) {
        assert!(close(*a, *b));
    }
}

#[test]
fn truncated_schedule_is_a_parse_error() {
    let (plan, targets) = three_buoy_plan();
    let dir = tempfile::tempdir().unwrap();
    SolveReport::from_fixed(&plan, &targets).save(dir.path()).unwrap();
    let path = dir.path().join(SCHEDULE_FILE);
    let text = std::fs::read_to_string(&path).unwrap();
    let cut: Vec<&str> = text.lines().collect();
    std::fs::write(&path, cut[..cut.len() - 1].join("\n")).unwrap();
    assert!(matches!(SolveReport::load(dir.path()), Err(Error::Parse { .. })));
    assert!(matches!(SolveReport::load(&dir.path().join("missing")), Err(Error::Io { .. })));
}
