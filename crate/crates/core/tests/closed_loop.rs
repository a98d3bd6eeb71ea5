use stackelberg::closed_form::{boundaries_exact, Boundaries};
use stackelberg::model::{EquilibriumKind, FeedbackPolicy, GameParams, ValidParams};
use stackelberg::simulate::{check_target_constraint, compare_all, simulate, SimConfig, SimError, Strategy};
use stackelberg::target::{solve_leader, LeaderGrid, LeaderSolution};

fn bench() -> ValidParams {
    GameParams::benchmark().validate().unwrap()
}

fn small_solution() -> LeaderSolution {
    solve_leader(&bench(), &LeaderGrid::new(400, 81)).unwrap()
}

fn cfg(n_paths: usize, n_steps: usize) -> SimConfig {
    SimConfig {
        n_paths,
        n_steps,
        seed: 3,
        antithetic: false,
    }
}

#[test]
fn lower_edge_start_rides_the_edge() {
    let p = bench();
    let sol = small_solution();
    let y0 = boundaries_exact(&p).w_minus(0.0, p.x0);
    for n_steps in [250, 500, 1000] {
        let g = check_target_constraint(&p, &sol.policy(), y0, &cfg(500, n_steps)).unwrap();
        assert!(g.max < 1e-9, "{n_steps}: {g:?}");
    }
}

#[test]
fn optimal_start_meets_the_target() {
    let p = bench();
    let sol = small_solution();
    let g = check_target_constraint(&p, &sol.policy(), sol.y0_star, &cfg(5_000, 1000)).unwrap();
    assert!(g.mean <= 0.05, "{g:?}");
    assert!(g.p95 <= g.max && g.mean <= g.max);
}

#[test]
fn one_step_cannot_track_the_target() {
    let p = bench();
    let sol = small_solution();
    let coarse = check_target_constraint(&p, &sol.policy(), sol.y0_star, &cfg(2_000, 1)).unwrap();
    let fine = check_target_constraint(&p, &sol.policy(), sol.y0_star, &cfg(2_000, 200)).unwrap();
    assert!(coarse.mean > 10.0 * fine.mean, "{coarse:?} vs {fine:?}");
}

#[test]
fn start_off_the_band_is_rejected() {
    let p = bench();
    let sol = small_solution();
    let policy = sol.policy();
    let (_, hi) = policy.band(0.0, p.x0);
    let r = simulate(&p, Strategy::Feedback { policy: &policy, y0: hi + 1.0 }, &cfg(10, 10));
    assert!(matches!(r, Err(SimError::StartOutsideBand(_))));
}

#[test]
fn comparison_table_has_every_kind() {
    let p = bench();
    let cmp = compare_all(&p, &cfg(20_000, 100), &LeaderGrid::new(400, 81)).unwrap();
    let kinds: Vec<_> = cmp.rows.iter().map(|r| r.kind).collect();
    assert_eq!(kinds, EquilibriumKind::ALL);
    let value = |k| cmp.row(k).unwrap().report.as_ref().unwrap().leader_value;
    assert_eq!(value(EquilibriumKind::Aol), value(EquilibriumKind::Af));
    for row in &cmp.rows {
        let (report, mc) = (row.report.as_ref().unwrap(), row.mc.as_ref().unwrap());
        let budget = if row.kind == EquilibriumKind::Cl { 0.05 } else { 0.01 };
        assert!(
            (mc.jl_mean - report.leader_value).abs() <= 3.0 * mc.jl_se + budget,
            "{:?}: {} vs {}",
            row.kind,
            mc.jl_mean,
            report.leader_value
        );
    }
    assert!(cmp.cl_minus_aclm.unwrap() < 0.0);
    let csv = cmp.to_csv().render();
    assert_eq!(csv.lines().count(), 2 + 6);
}
