//! Acceptance suite on the reference configuration (32 x 32 cells, 64 steps, T = 1).
//! Prints one PASS/FAIL line per criterion and exits nonzero if any fails.

use std::process::ExitCode;
use std::sync::Mutex;
use std::time::{Duration, Instant};

use nullctl::audit::{adjoint_slices, audit_sample, integrand_agreement, sample_adjoint_data};
use nullctl::cg::CgOptions;
use nullctl::control::{solve_penalized_hum, HumProblem, RunResult};
use nullctl::experiment::{run, ExperimentConfig, Kind, DEFAULT_AUTO_TARGET};
use nullctl::field::VelocityField;
use nullctl::grid::{build_grid, Grid, GridConfig};
use nullctl::manufactured::{spatial_study, temporal_study};
use nullctl::nonlinear::{estimate_delta, solve_nonlinear, PicardOptions};
use nullctl::random::{random_space_time_source, random_stream_field};
use nullctl::stokes::StokesSolver;
use nullctl::weights::{auto_s, build_eta, build_time_profile, eval_weights, WeightParams, WeightSet};

struct Ctx {
    grid: Grid<f64>,
    solver: StokesSolver<f64>,
    weights: Vec<WeightSet<f64>>,
    max_div: Mutex<f64>,
}

impl Ctx {
    fn new() -> Self {
        let grid = build_grid(&GridConfig::reference(32, 64)).unwrap();
        let solver = StokesSolver::new(&grid).unwrap();
        let eta = build_eta(&grid).unwrap();
        let prof = build_time_profile(1.0, 64, 1e-2).unwrap();
        let s0 = auto_s(&eta, &prof, 1.0, DEFAULT_AUTO_TARGET);
        let weights = [1.0, 2.0, 4.0].iter().map(|m| eval_weights(&eta, &prof, WeightParams::new(m * s0, 1.0)).unwrap()).collect();
        Ctx { grid, solver, weights, max_div: Mutex::new(0.0) }
    }

    fn note_div(&self, d: f64) {
        let mut m = self.max_div.lock().unwrap();
        *m = m.max(d);
    }

    fn note_run(&self, r: &RunResult<f64>) {
        self.note_div(r.trajectory.max_divergence(self.grid.hx, self.grid.hy));
    }
}

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn(&Ctx) -> Outcome);

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(budget: Duration, t: Instant, detail: String) -> Outcome {
    let el = t.elapsed();
    check(el <= budget, format!("{detail}; {:.1}s of {}s", el.as_secs_f64(), budget.as_secs()))
}

fn duality(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let g = &c.grid;
    let mut worst = 0.0f64;
    for seed in 0..10u64 {
        let f = random_space_time_source(g, 100 + seed, 4);
        let f = &f[1..];
        let phi_t = random_stream_field(g, 200 + seed, 4);
        let y = c.solver.solve_forward(&VelocityField::zeros_like(g), Some(f), None).map_err(|e| e.to_string())?;
        let phi = c.solver.solve_adjoint(None, &phi_t).map_err(|e| e.to_string())?;
        c.note_div(y.max_divergence(g.hx, g.hy));
        c.note_div(phi.max_divergence(g.hx, g.hy));
        let lhs: f64 = (0..g.nt).map(|k| g.dt * f[k].dot(&phi.velocity[k])).sum();
        let rhs = y.terminal().dot(&phi_t);
        let fn_ = (f.iter().map(|s| s.dot(s)).sum::<f64>() * g.dt).sqrt();
        worst = worst.max((lhs - rhs).abs() / (fn_ * phi_t.norm()));
    }
    let r = check(worst <= 1e-10, format!("max relative mismatch {worst:.3e} over 10 pairs"))?;
    within(Duration::from_secs(60), t, r)
}

fn manufactured(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let space = spatial_study::<f64>(&[16, 32, 64], 16, 1.0).map_err(|e| e.to_string())?;
    let time = temporal_study::<f64>(32, &[32, 64, 128], 2048, 1.0).map_err(|e| e.to_string())?;
    c.note_div(space.max_divergence.max(time.max_divergence));
    let ok = (space.order - 2.0).abs() <= 0.2 && (time.order - 1.0).abs() <= 0.2;
    let r = check(ok, format!("spatial order {:.3}, temporal order {:.3}", space.order, time.order))?;
    within(Duration::from_secs(300), t, r)
}

fn gradient_check(c: &Ctx) -> Outcome {
    let g = &c.grid;
    let y0 = random_stream_field(g, 5, 3);
    let f: Vec<_> = random_space_time_source(g, 6, 3)[1..].to_vec();
    let p = HumProblem::new(g, &c.solver, &c.weights[0], &y0, Some(&f), 2, 1e-4).map_err(|e| e.to_string())?;
    let base = random_stream_field(g, 7, 3);
    let grad = p.gradient(&base).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for n in 0..5u64 {
        let d = random_stream_field(g, 300 + n, 4);
        let h = 1e-3;
        let jp = p.functional(&base.add(&d.scaled(h))).map_err(|e| e.to_string())?;
        let jm = p.functional(&base.sub(&d.scaled(h))).map_err(|e| e.to_string())?;
        let fd = (jp - jm) / (2.0 * h);
        let an = grad.dot(&d);
        worst = worst.max((fd - an).abs() / an.abs().max(fd.abs()));
    }
    check(worst <= 1e-6, format!("max relative deviation {worst:.3e} over 5 directions"))
}

fn null_trend(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let g = &c.grid;
    let y0 = random_stream_field(g, 1, 3);
    let opts = CgOptions::default();
    let b = HumProblem::new(g, &c.solver, &c.weights[0], &y0, None, 2, 1.0).and_then(|p| p.free_terminal()).map_err(|e| e.to_string())?;
    let mut norms = Vec::new();
    let mut gap = 0.0f64;
    for eps in [1e-2, 1e-4, 1e-6] {
        let r = solve_penalized_hum(&y0, None, 2, eps, &c.weights[0], g, &c.solver, opts).map_err(|e| e.to_string())?;
        c.note_run(&r);
        if !r.dual.history.converged {
            return Err(format!("CG did not converge at eps = {eps:e}"));
        }
        gap = gap.max((r.terminal_norm - eps * r.dual.phi_t.norm()).abs() / b.norm());
        norms.push(r.terminal_norm);
    }
    let ok = norms[1] < norms[0] && norms[2] < norms[1] && norms[2] <= 1e-3 && gap <= 10.0 * opts.rel_tol;
    let r = check(ok, format!("|y(T)| = {:.3e}, {:.3e}, {:.3e}; optimality gap {gap:.2e} |b|", norms[0], norms[1], norms[2]))?;
    within(Duration::from_secs(600), t, r)
}

fn component_elimination(c: &Ctx) -> Outcome {
    let g = &c.grid;
    let y0 = random_stream_field(g, 2, 3);
    let mut runs = 0;
    for i in [1usize, 2] {
        for eps in [1e-2, 1e-4] {
            let r = solve_penalized_hum(&y0, None, i, eps, &c.weights[0], g, &c.solver, CgOptions::default()).map_err(|e| e.to_string())?;
            c.note_run(&r);
            if !(r.control.max_abs_component(i) == 0.0 && r.control.max_abs_outside(g) == 0.0) {
                return Err(format!("linear run i = {i}, eps = {eps:e} violates the control structure"));
            }
            if r.control.values.iter().all(|v| v.max_abs() == 0.0) {
                return Err(format!("linear run i = {i} produced a zero control"));
            }
            runs += 1;
        }
        let h =
            solve_nonlinear(&y0.scaled(1e-2), i, 1e-4, PicardOptions::default(), &c.weights[0], g, &c.solver).map_err(|e| e.to_string())?;
        if !h.states.iter().all(|s| s.structure_ok) {
            return Err(format!("nonlinear run i = {i} violates the control structure"));
        }
        let last = h.last.as_ref().ok_or("empty Picard history")?;
        c.note_run(last);
        if !last.control.structure_ok(g) {
            return Err(format!("final nonlinear control i = {i} violates the control structure"));
        }
        runs += h.states.len();
    }
    check(true, format!("max|v_i| = 0 and v = 0 off omega in {runs} solves (i = 1, 2)"))
}

fn carleman(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let g = &c.grid;
    let mut max_ratio = 0.0f64;
    let mut worst_scale = 0.0f64;
    let mut worst_agree = 0.0f64;
    for seed in 0..50u64 {
        let d = sample_adjoint_data(seed, g, &c.solver).map_err(|e| e.to_string())?;
        let sl = adjoint_slices(&d, 2, g, &c.solver).map_err(|e| e.to_string())?;
        let sl10 = adjoint_slices(&d.scaled(10.0), 2, g, &c.solver).map_err(|e| e.to_string())?;
        for ws in &c.weights {
            let a = audit_sample(&sl, ws, g).map_err(|e| e.to_string())?;
            let b = audit_sample(&sl10, ws, g).map_err(|e| e.to_string())?;
            for (x, y) in [(a.ratio27, b.ratio27), (a.ratio33, b.ratio33)] {
                if !x.is_finite() || !y.is_finite() {
                    return Err(format!("non-finite ratio for seed {seed} at s = {:e}", ws.params.s));
                }
                max_ratio = max_ratio.max(x);
                if x > 0.0 {
                    worst_scale = worst_scale.max((x - y).abs() / x);
                }
            }
            worst_agree = worst_agree.max(integrand_agreement(&sl, ws, g));
        }
    }
    let ok = max_ratio < 1e6 && worst_scale <= 1e-8 && worst_agree <= 1e-12;
    let r = check(ok, format!("max ratio {max_ratio:.3e}, scaling change {worst_scale:.1e}, family agreement {worst_agree:.1e}"))?;
    within(Duration::from_secs(600), t, r)
}

fn nonlinear(c: &Ctx) -> Outcome {
    let t = Instant::now();
    let g = &c.grid;
    let unit = random_stream_field(g, 3, 3);
    let h =
        solve_nonlinear(&unit.scaled(1e-2), 2, 1e-4, PicardOptions::default(), &c.weights[0], g, &c.solver).map_err(|e| e.to_string())?;
    if let Some(l) = &h.last {
        c.note_run(l);
    }
    let lin = h.linearized_terminal_norm();
    let finite = h.states.iter().all(|s| s.source_norm.is_finite());
    let ok =
        h.converged && h.residuals().len() >= 2 && h.residuals_strictly_decreasing() && h.nonlinear_terminal_norm <= 2.0 * lin && finite;
    if !ok {
        return Err(format!(
            "converged {}, residuals {:?}, nonlinear {:.3e} vs linearized {lin:.3e}, source norms finite {finite}",
            h.converged,
            h.residuals(),
            h.nonlinear_terminal_norm
        ));
    }
    let est = estimate_delta(&[1e-2, 1e-1, 1.0, 10.0, 100.0], 3, |a| {
        solve_nonlinear(&unit.scaled(a), 2, 1e-4, PicardOptions::default(), &c.weights[0], g, &c.solver).map(|h| h.converged)
    })
    .map_err(|e| e.to_string())?;
    let ordered = matches!((est.lower, est.upper), (Some(l), Some(u)) if l < u) && est.monotone;
    let r = check(
        ordered,
        format!(
            "{} Picard iterates, |y_nl(T)| / |y_lin(T)| = {:.4}, delta bracket [{:?}, {:?}]",
            h.states.len(),
            h.nonlinear_terminal_norm / lin,
            est.lower,
            est.upper
        ),
    )?;
    within(Duration::from_secs(1200), t, r)
}

fn metric_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else if matches!(p.extension().and_then(|x| x.to_str()), Some("csv" | "json" | "bin" | "txt")) {
                out.push((p.strip_prefix(dir).unwrap().display().to_string(), std::fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}

fn determinism(_: &Ctx) -> Outcome {
    let tmp = tempfile::tempdir().map_err(|e| e.to_string())?;
    let mut kinds = Vec::new();
    for kind in [Kind::ForwardCheck, Kind::Hum, Kind::Audit, Kind::Nonlinear, Kind::DeltaSweep] {
        let mut cfg = ExperimentConfig::reference(kind);
        cfg.seed = 11;
        if kind == Kind::Hum {
            cfg.eps_list = Some(vec![1e-2, 1e-4, 1e-6]);
            cfg.eps = None;
        }
        let a = tmp.path().join(format!("{}-a", kind.name()));
        let b = tmp.path().join(format!("{}-b", kind.name()));
        run(&cfg, &a).map_err(|e| e.to_string())?;
        run(&cfg, &b).map_err(|e| e.to_string())?;
        let (fa, fb) = (metric_files(&a), metric_files(&b));
        if fa.is_empty() || fa != fb {
            return Err(format!("{} artifacts differ between repeated runs", kind.name()));
        }
        kinds.push(format!("{} ({} files)", kind.name(), fa.len()));
    }
    check(true, format!("byte-identical artifacts: {}", kinds.join(", ")))
}

fn main() -> ExitCode {
    let ctx = Ctx::new();
    let criteria: [Criterion; 8] = [
        (1, "adjoint duality", duality),
        (3, "manufactured-solution convergence", manufactured),
        (4, "dual gradient check", gradient_check),
        (5, "null-controllability trend", null_trend),
        (6, "component elimination", component_elimination),
        (7, "carleman audits", carleman),
        (8, "nonlinear contraction", nonlinear),
        (9, "determinism", determinism),
    ];
    let mut lines = Vec::new();
    for (n, name, f) in criteria {
        lines.push((n, name, f(&ctx)));
    }
    let d = *ctx.max_div.lock().unwrap();
    lines.push((2, "divergence-free", check(d <= 1e-10, format!("max cell divergence {d:.3e} across all runs"))));
    lines.sort_by_key(|l| l.0);
    let mut failed = 0;
    for (n, name, r) in &lines {
        match r {
            Ok(detail) => println!("acceptance {n} {name}: PASS ({detail})"),
            Err(detail) => {
                failed += 1;
                println!("acceptance {n} {name}: FAIL ({detail})");
            }
        }
    }
    println!("acceptance: {} of {} criteria passed", lines.len() - failed, lines.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
