use approx::assert_relative_eq;
use nullctl::field::VelocityField;
use nullctl::grid::{build_grid, GridConfig};
use nullctl::random::{random_space_time_source, random_stream_field};
use nullctl::stokes::StokesSolver;

fn fixed_source(n: usize, nt: usize) -> (StokesSolver<f64>, Vec<VelocityField<f64>>) {
    let g = build_grid(&GridConfig::reference(n, nt)).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let f = random_space_time_source(&g, 42, 2)[1..].to_vec();
    (s, f)
}

#[test]
fn regularity_ratio_settles_under_refinement() {
    let r: Vec<f64> = [16, 32, 64]
        .iter()
        .map(|&n| {
            let (s, f) = fixed_source(n, 32);
            s.regularity_ratio(&f).unwrap()
        })
        .collect();
    assert!(r.iter().all(|&x| x > 0.0 && x.is_finite()), "{r:?}");
    let d1 = (r[1] - r[0]).abs();
    let d2 = (r[2] - r[1]).abs();
    assert!(d2 < d1, "{r:?}");
    assert!(d2 / r[2] < 0.05, "{r:?}");
}

#[test]
fn regularity_ratio_bounded_over_random_sources() {
    let g = build_grid(&GridConfig::reference(16, 16)).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let ratios: Vec<f64> = (0..20u64).map(|seed| s.regularity_ratio(&random_space_time_source(&g, seed, 4)[1..]).unwrap()).collect();
    let (lo, hi) = ratios.iter().fold((f64::MAX, 0.0f64), |(a, b), &x| (a.min(x), b.max(x)));
    assert!(lo > 0.0 && hi.is_finite());
    assert!(hi / lo < 10.0, "{lo} .. {hi}");
}

#[test]
fn duality_holds_in_single_precision() {
    let g = build_grid(&GridConfig::<f32>::reference(16, 16)).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let f = random_space_time_source(&g, 1, 3);
    let f = &f[1..];
    let phi_t = random_stream_field(&g, 2, 3);
    let y = s.solve_forward(&VelocityField::zeros_like(&g), Some(f), None).unwrap();
    let phi = s.solve_adjoint(None, &phi_t).unwrap();
    let lhs: f32 = (0..g.nt).map(|k| g.dt * f[k].dot(&phi.velocity[k])).sum();
    let rhs = y.terminal().dot(&phi_t);
    assert_relative_eq!(lhs, rhs, max_relative = 1e-4);
    assert!(y.max_divergence(g.hx, g.hy) < 1e-3);
}

#[test]
fn forward_energy_with_pressure_output() {
    let g = build_grid(&GridConfig::<f64>::reference(16, 16)).unwrap();
    let s = StokesSolver::new(&g).unwrap();
    let tr = s.solve_forward(&random_stream_field(&g, 3, 3), None, None).unwrap();
    let p = tr.pressure.as_ref().unwrap();
    assert_eq!(p.len(), g.nt + 1);
    assert!(p.iter().all(|q| q.mean().abs() < 1e-12));
    let e = tr.energies();
    assert!(e.windows(2).all(|w| w[1] < w[0]));
}
