use nullctl::cg::CgOptions;
use nullctl::control::solve_penalized_hum;
use nullctl::grid::{build_grid, GridConfig};
use nullctl::random::random_stream_field;
use nullctl::stokes::StokesSolver;
use nullctl::weights::{auto_s, build_eta, build_time_profile, eval_weights, WeightParams};

#[test]
fn reference_run_reports_finite_norms_for_both_components() {
    let g = build_grid(&GridConfig::<f64>::reference(32, 64)).unwrap();
    let solver = StokesSolver::new(&g).unwrap();
    let eta = build_eta(&g).unwrap();
    let prof = build_time_profile(1.0, 64, 1e-2).unwrap();
    let ws = eval_weights(&eta, &prof, WeightParams::new(auto_s(&eta, &prof, 1.0, 2.0), 1.0)).unwrap();
    let y0 = random_stream_field(&g, 1, 3);
    for i in [1, 2] {
        let r = solve_penalized_hum(&y0, None, i, 1e-4, &ws, &g, &solver, CgOptions::default()).unwrap();
        assert!(r.dual.history.converged);
        assert!(r.weighted_norms.iter().all(|x| x.is_finite() && *x > 0.0), "{:?}", r.weighted_norms);
        assert!(r.control.structure_ok(&g));
        assert!(r.terminal_norm < y0.norm());
        let other = 3 - i;
        assert!(r.control.max_abs_component(other) > 0.0);
    }
}

#[test]
fn nonzero_source_is_steered_too() {
    let g = build_grid(&GridConfig::<f64>::reference(16, 32)).unwrap();
    let solver = StokesSolver::new(&g).unwrap();
    let eta = build_eta(&g).unwrap();
    let prof = build_time_profile(1.0, 32, 1e-2).unwrap();
    let ws = eval_weights(&eta, &prof, WeightParams::new(auto_s(&eta, &prof, 1.0, 2.0), 1.0)).unwrap();
    let f = nullctl::random::random_space_time_source(&g, 4, 3)[1..].to_vec();
    let y0 = random_stream_field(&g, 5, 3);
    let r = solve_penalized_hum(&y0, Some(&f), 2, 1e-2, &ws, &g, &solver, CgOptions { max_iter: 500, rel_tol: 1e-10 }).unwrap();
    let free = solver.solve_forward(&y0, Some(&f), None).unwrap();
    assert!(r.terminal_norm < free.terminal().norm());
    assert!(r.control.structure_ok(&g));
}
