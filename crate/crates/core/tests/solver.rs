use approx::assert_relative_eq;
use reluocp::grid::norm_l2;
use reluocp::{
    fixture_single_max, fixture_two_layer, reduced_objective, run, run_cell, solve_state, BoxBounds, DescentConfig,
    Example, Field, NetKind, NewtonConfig, RunReport, Termination,
};

#[test]
fn two_layer_data_reproduces_target_state() {
    for kind in [NetKind::Monotone, NetKind::Nonmonotone] {
        let fx = fixture_two_layer(kind, 1.0 / 16.0, 1e-2).unwrap();
        let p = &fx.problem;
        let u0 = fx.u_data.as_ref().unwrap();
        let y = solve_state(&p.grid, &p.model(), u0, None, &NewtonConfig::default()).unwrap();
        assert!(y.converged);
        let rel = norm_l2(&p.grid, &y.y.sub(&p.g)).unwrap() / norm_l2(&p.grid, &p.g).unwrap();
        assert!(rel < 1e-2, "{kind:?}: {rel}");
        assert!(p.bounds.contains(u0, 0.0));
    }
}

#[test]
fn single_max_coarse_run_converges_to_exact_solution() {
    let cfg = DescentConfig { nu: 0.9, ..DescentConfig::default() };
    let cell = run_cell(Example::SingleMax, 1e-1, 1.0 / 16.0, &cfg);
    assert!(cell.converged, "{:?}", cell.termination);
    assert!(cell.rel_err_u.unwrap() < 0.05);
    assert!(cell.rel_err_y.unwrap() < 0.05);
    assert!(cell.iterations <= 200);
}

#[test]
fn runs_are_deterministic() {
    let fx = fixture_single_max(1.0 / 8.0, 1e-2).unwrap();
    let cfg = DescentConfig { nu: 0.9, ..DescentConfig::default() };
    let a = run(&fx.problem, &cfg).unwrap();
    let b = run(&fx.problem, &cfg).unwrap();
    assert_eq!(a.u, b.u);
    assert_eq!(a.records.len(), b.records.len());
    for (x, y) in a.records.iter().zip(&b.records) {
        assert_eq!((x.cost, x.h_norm, x.tau), (y.cost, y.h_norm, y.tau));
    }
}

#[test]
fn active_bounds_are_respected() {
    let mut fx = fixture_single_max(1.0 / 16.0, 1e-2).unwrap();
    fx.problem.bounds = BoxBounds::constant(&fx.problem.grid, -0.1, 0.1).unwrap();
    let report = run(&fx.problem, &DescentConfig { nu: 0.9, ..DescentConfig::default() }).unwrap();
    assert!(fx.problem.bounds.contains(&report.u, 1e-12));
    assert!(report.u.values.iter().any(|&v| (v.abs() - 0.1).abs() < 1e-12));
    assert!(report.cost <= report.initial_cost);
    let (j, _) = reduced_objective(&fx.problem, &report.u).unwrap();
    assert_relative_eq!(j, report.cost, max_relative = 1e-10);
}

#[test]
fn outer_budget_is_reported() {
    let fx = fixture_two_layer(NetKind::Monotone, 1.0 / 8.0, 1e-2).unwrap();
    let report = run(&fx.problem, &DescentConfig { max_outer: 2, ..DescentConfig::default() }).unwrap();
    assert_eq!(report.termination, Termination::MaxOuter);
    assert!(!report.converged);
    assert_eq!(report.iterations(), 2);
}

#[test]
fn reports_serialize() {
    let fx = fixture_single_max(1.0 / 8.0, 1e-1).unwrap();
    let report = run(&fx.problem, &DescentConfig { nu: 0.9, ..DescentConfig::default() }).unwrap();
    assert_eq!(RunReport::from_json(&report.to_json().unwrap()).unwrap(), report);

    let dir = tempfile::tempdir().unwrap();
    let csv = dir.path().join("history.csv");
    report.write_csv(std::fs::File::create(&csv).unwrap()).unwrap();
    let text = std::fs::read_to_string(&csv).unwrap();
    assert_eq!(text.lines().count(), report.records.len() + 1);

    let field = dir.path().join("u.csv");
    report.u.write_csv(&fx.problem.grid, std::fs::File::create(&field).unwrap()).unwrap();
    let (grid, u) = Field::read_csv(std::io::BufReader::new(std::fs::File::open(&field).unwrap())).unwrap();
    assert_eq!(grid, fx.problem.grid);
    assert_eq!(u, report.u);
}
