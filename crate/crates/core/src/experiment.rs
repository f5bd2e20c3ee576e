//! Configuration-driven experiment runner.
//!
//! Configs are TOML. Unknown keys anywhere are rejected. Minimal example:
//!
//! ```toml
//! kind = "hum"          # forward-check | hum | audit | nonlinear | delta-sweep
//! seed = 7
//! component = 2
//! eps = 1e-4
//!
//! [grid]
//! nx = 32
//! ny = 32
//! nt = 64
//!
//! [weights]
//! s = "auto"            # or a positive number
//! auto_target = 2.0
//! ```

use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::audit::audit_sweep;
use crate::cg::CgOptions;
use crate::control::solve_penalized_hum;
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::{build_grid, Grid, GridConfig, Region};
use crate::io::{num, weights_dump, weights_table, FieldDump, Table};
use crate::manufactured::{spatial_study, temporal_study};
use crate::nonlinear::{estimate_delta, solve_nonlinear, PicardHistory, PicardOptions};
use crate::random::{random_space_time_source, random_stream_field};
use crate::stokes::StokesSolver;
use crate::weights::{
    auto_s, build_eta, build_time_profile, eval_weights, EtaField, TimeProfile, WeightParams, WeightSet, DEFAULT_EXP_CLAMP,
    DEFAULT_FLOOR_DELTA, DEFAULT_LAMBDA,
};

/// Default exponent `s alpha*` at mid-time for `s = "auto"`.
pub const DEFAULT_AUTO_TARGET: f64 = 2.0;
/// Largest discrete divergence tolerated in any stored trajectory.
pub const DIVERGENCE_TOL: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Kind {
    ForwardCheck,
    Hum,
    Audit,
    Nonlinear,
    DeltaSweep,
}

impl Kind {
    pub fn name(self) -> &'static str {
        match self {
            Kind::ForwardCheck => "forward-check",
            Kind::Hum => "hum",
            Kind::Audit => "audit",
            Kind::Nonlinear => "nonlinear",
            Kind::DeltaSweep => "delta-sweep",
        }
    }
}

/// `s = "auto"` or an explicit positive value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SSetting {
    Value(f64),
    Keyword(String),
}

impl Default for SSetting {
    fn default() -> Self {
        SSetting::Keyword("auto".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GridSection {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: f64,
    pub omega: Region<f64>,
    pub omega0: Region<f64>,
}

impl Default for GridSection {
    fn default() -> Self {
        let r = GridConfig::<f64>::reference(32, 64);
        GridSection { nx: r.nx, ny: r.ny, nt: r.nt, t_final: r.t_final, omega: r.omega, omega0: r.omega0 }
    }
}

impl GridSection {
    pub fn config(&self) -> GridConfig<f64> {
        GridConfig { nx: self.nx, ny: self.ny, nt: self.nt, t_final: self.t_final, omega: self.omega, omega0: self.omega0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct WeightSection {
    pub s: SSetting,
    pub auto_target: f64,
    pub lambda: f64,
    pub exp_clamp: f64,
    pub floor_delta: f64,
    /// Also write the full space-time weights as CSV (large).
    pub export_csv: bool,
}

impl Default for WeightSection {
    fn default() -> Self {
        WeightSection {
            s: SSetting::default(),
            auto_target: DEFAULT_AUTO_TARGET,
            lambda: DEFAULT_LAMBDA,
            exp_clamp: DEFAULT_EXP_CLAMP,
            floor_delta: DEFAULT_FLOOR_DELTA,
            export_csv: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub cg_max_iter: usize,
    pub cg_rel_tol: f64,
}

impl Default for SolverSection {
    fn default() -> Self {
        let d = CgOptions::default();
        SolverSection { cg_max_iter: d.max_iter, cg_rel_tol: d.rel_tol }
    }
}

impl SolverSection {
    pub fn cg(&self) -> CgOptions {
        CgOptions { max_iter: self.cg_max_iter, rel_tol: self.cg_rel_tol }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AuditSection {
    pub samples: usize,
    /// Sweep points as multiples of the resolved `s`.
    pub s_multipliers: Vec<f64>,
}

impl Default for AuditSection {
    fn default() -> Self {
        AuditSection { samples: 50, s_multipliers: vec![1.0, 2.0, 4.0] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct NonlinearSection {
    pub amplitude: f64,
    pub max_iter: usize,
    pub tol: f64,
    pub amplitudes: Vec<f64>,
    pub bisections: usize,
}

impl Default for NonlinearSection {
    fn default() -> Self {
        let d = PicardOptions::default();
        NonlinearSection {
            amplitude: 1e-2,
            max_iter: d.max_iter,
            tol: d.tol,
            amplitudes: vec![1e-2, 1e-1, 1.0, 10.0, 100.0],
            bisections: 3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ForwardSection {
    pub sizes: Vec<usize>,
    pub spatial_nt: usize,
    pub steps: Vec<usize>,
    pub reference_nt: usize,
}

impl Default for ForwardSection {
    fn default() -> Self {
        ForwardSection { sizes: vec![16, 32, 64], spatial_nt: 16, steps: vec![32, 64, 128], reference_nt: 2048 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub kind: Kind,
    #[serde(default)]
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<String>,
    #[serde(default = "default_component")]
    pub component: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps_list: Option<Vec<f64>>,
    /// Spectral modes per direction of the random initial state.
    #[serde(default = "default_modes")]
    pub modes: usize,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub weights: WeightSection,
    #[serde(default)]
    pub solver: SolverSection,
    #[serde(default)]
    pub audit: AuditSection,
    #[serde(default)]
    pub nonlinear: NonlinearSection,
    #[serde(default)]
    pub forward: ForwardSection,
}

fn default_component() -> usize {
    2
}

fn default_modes() -> usize {
    3
}

impl ExperimentConfig {
    /// Reference configuration of a given kind (32 x 32, 64 steps, `T = 1`).
    pub fn reference(kind: Kind) -> Self {
        ExperimentConfig {
            kind,
            seed: 0,
            output: None,
            component: default_component(),
            eps: Some(1e-4),
            eps_list: None,
            modes: default_modes(),
            grid: GridSection::default(),
            weights: WeightSection::default(),
            solver: SolverSection::default(),
            audit: AuditSection::default(),
            nonlinear: NonlinearSection::default(),
            forward: ForwardSection::default(),
        }
    }

    pub fn from_toml_str(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string().trim_end().to_string()))
    }

    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// Penalization values for `hum` runs.
    pub fn eps_values(&self) -> Vec<f64> {
        match (&self.eps_list, self.eps) {
            (Some(list), _) => list.clone(),
            (None, Some(e)) => vec![e],
            (None, None) => Vec::new(),
        }
    }
}

fn positive(diag: &mut Vec<String>, key: &str, v: f64) {
    if !(v > 0.0 && v.is_finite()) {
        diag.push(format!("{key} must be positive and finite (got {v})"));
    }
}

/// Schema and range diagnostics; empty iff [`run`] accepts the config.
pub fn validate(config: &ExperimentConfig) -> Vec<String> {
    let mut d = Vec::new();
    if config.component != 1 && config.component != 2 {
        d.push(format!("component index out of range: component = {} but N = 2 (allowed: 1, 2)", config.component));
    }
    if config.modes == 0 {
        d.push("modes must be at least 1".into());
    }
    let needs_eps = matches!(config.kind, Kind::Hum | Kind::Nonlinear | Kind::DeltaSweep);
    let eps = config.eps_values();
    if needs_eps && eps.is_empty() {
        d.push(format!("eps is required for kind = \"{}\"", config.kind.name()));
    }
    if config.eps_list.is_some() && config.kind != Kind::Hum {
        d.push("eps_list is only used by kind = \"hum\"".into());
    }
    if needs_eps {
        for e in &eps {
            positive(&mut d, "eps", *e);
        }
    }

    let g = &config.grid;
    let mut grid_ok = true;
    if g.nx < 4 || g.ny < 4 || g.nt < 4 {
        d.push(format!("grid.nx, grid.ny, grid.nt must be >= 4 (got {}, {}, {})", g.nx, g.ny, g.nt));
        grid_ok = false;
    }
    if !(g.t_final > 0.0 && g.t_final.is_finite()) {
        d.push(format!("grid.t_final must be positive (got {})", g.t_final));
        grid_ok = false;
    }
    if grid_ok {
        match build_grid(&g.config()) {
            Ok(grid) => {
                if let Err(e) = build_eta(&grid) {
                    d.push(format!("grid.omega0: {e}"));
                }
            }
            Err(e) => d.push(format!("grid: {e}")),
        }
    }

    let w = &config.weights;
    match &w.s {
        SSetting::Value(s) => positive(&mut d, "weights.s", *s),
        SSetting::Keyword(k) if k == "auto" => {}
        SSetting::Keyword(k) => d.push(format!("weights.s must be \"auto\" or a number (got \"{k}\")")),
    }
    positive(&mut d, "weights.auto_target", w.auto_target);
    positive(&mut d, "weights.lambda", w.lambda);
    positive(&mut d, "weights.exp_clamp", w.exp_clamp);
    if !(w.floor_delta > 0.0 && w.floor_delta < 0.25) {
        d.push(format!("weights.floor_delta must lie in (0, 0.25) (got {})", w.floor_delta));
    }

    if config.solver.cg_max_iter == 0 {
        d.push("solver.cg_max_iter must be at least 1".into());
    }
    if !(config.solver.cg_rel_tol > 0.0 && config.solver.cg_rel_tol < 1.0) {
        d.push(format!("solver.cg_rel_tol must lie in (0, 1) (got {})", config.solver.cg_rel_tol));
    }

    match config.kind {
        Kind::Audit => {
            if config.audit.samples == 0 {
                d.push("audit.samples must be at least 1".into());
            }
            if config.audit.s_multipliers.is_empty() {
                d.push("audit.s_multipliers must be nonempty".into());
            }
            for m in &config.audit.s_multipliers {
                positive(&mut d, "audit.s_multipliers", *m);
            }
        }
        Kind::Nonlinear | Kind::DeltaSweep => {
            let n = &config.nonlinear;
            if n.max_iter == 0 {
                d.push("nonlinear.max_iter must be at least 1".into());
            }
            positive(&mut d, "nonlinear.tol", n.tol);
            if config.kind == Kind::Nonlinear {
                if !(n.amplitude >= 0.0 && n.amplitude.is_finite()) {
                    d.push(format!("nonlinear.amplitude must be nonnegative (got {})", n.amplitude));
                }
            } else {
                if n.amplitudes.is_empty() {
                    d.push("nonlinear.amplitudes must be nonempty".into());
                }
                if n.amplitudes.windows(2).any(|p| !(p[0] < p[1])) {
                    d.push("nonlinear.amplitudes must be strictly ascending".into());
                }
                for a in &n.amplitudes {
                    positive(&mut d, "nonlinear.amplitudes", *a);
                }
            }
        }
        Kind::ForwardCheck => {
            let f = &config.forward;
            if f.sizes.len() < 2 || f.sizes.iter().any(|&n| n < 4) {
                d.push("forward.sizes needs at least two grid sizes, each >= 4".into());
            }
            if f.steps.len() < 2 || f.steps.iter().any(|&n| n < 4) {
                d.push("forward.steps needs at least two step counts, each >= 4".into());
            }
            if f.spatial_nt < 4 {
                d.push("forward.spatial_nt must be >= 4".into());
            }
            if f.steps.iter().any(|&n| n >= f.reference_nt) {
                d.push("forward.reference_nt must exceed every entry of forward.steps".into());
            }
        }
        Kind::Hum => {}
    }
    d
}

/// Grid, solver and weights resolved from a config.
pub struct Setup {
    pub grid: Grid<f64>,
    pub solver: StokesSolver<f64>,
    pub eta: EtaField<f64>,
    pub profile: TimeProfile<f64>,
    pub weights: WeightSet<f64>,
}

impl Setup {
    pub fn new(config: &ExperimentConfig) -> Result<Self> {
        let grid = build_grid(&config.grid.config())?;
        let solver = StokesSolver::new(&grid)?;
        let eta = build_eta(&grid)?;
        let w = &config.weights;
        let profile = build_time_profile(grid.t_final, grid.nt, w.floor_delta)?;
        let s = match w.s {
            SSetting::Value(s) => s,
            _ => auto_s(&eta, &profile, w.lambda, w.auto_target),
        };
        let weights = eval_weights(&eta, &profile, WeightParams { s, lambda: w.lambda, exp_clamp: w.exp_clamp })?;
        Ok(Setup { grid, solver, eta, profile, weights })
    }

    pub fn weights_at(&self, s: f64) -> Result<WeightSet<f64>> {
        eval_weights(&self.eta, &self.profile, WeightParams { s, ..self.weights.params })
    }

    /// Unit-norm divergence-free initial state drawn from the config seed.
    pub fn initial_state(&self, config: &ExperimentConfig) -> VelocityField<f64> {
        random_stream_field(&self.grid, config.seed, config.modes)
    }
}

fn check_divergence(what: &str, d: f64) -> Result<()> {
    if d.is_finite() && d > DIVERGENCE_TOL {
        return Err(Error::Invariant(format!("{what}: discrete divergence {d:e} exceeds {DIVERGENCE_TOL:e}")));
    }
    Ok(())
}

/// Runs `config`, writing every artifact under `out`, and returns the summary that
/// was written to `summary.json`.
pub fn run(config: &ExperimentConfig, out: &Path) -> Result<Value> {
    let diag = validate(config);
    if !diag.is_empty() {
        return Err(Error::Config(diag.join("; ")));
    }
    std::fs::create_dir_all(out)?;
    std::fs::write(out.join("config.toml"), config.to_toml_string())?;
    std::fs::write(out.join("version.txt"), format!("{} {}\n", env!("CARGO_PKG_NAME"), env!("CARGO_PKG_VERSION")))?;
    let setup = Setup::new(config)?;
    let mut body = match config.kind {
        Kind::ForwardCheck => run_forward(config, &setup, out)?,
        Kind::Hum => run_hum(config, &setup, out)?,
        Kind::Audit => run_audit(config, &setup, out)?,
        Kind::Nonlinear => run_nonlinear(config, &setup, out)?,
        Kind::DeltaSweep => run_delta(config, &setup, out)?,
    };
    let p = setup.weights.params;
    body["kind"] = json!(config.kind.name());
    body["seed"] = json!(config.seed);
    body["component"] = json!(config.component);
    body["version"] = json!(env!("CARGO_PKG_VERSION"));
    body["weights"] = json!({
        "s": p.s,
        "lambda": p.lambda,
        "exp_clamp": p.exp_clamp,
        "flush_fraction": setup.weights.flush_fraction,
        "flush_flag": setup.weights.flush_flag,
    });
    let text = serde_json::to_string_pretty(&body).expect("summary serializes");
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(body)
}

fn frames_at(n: usize) -> Vec<usize> {
    let mut v = vec![0, n / 2, n];
    v.dedup();
    v
}

fn run_forward(config: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<Value> {
    let f = &config.forward;
    let g = &setup.grid;
    let t_final = g.t_final;
    let space = spatial_study::<f64>(&f.sizes, f.spatial_nt, t_final)?;
    let time = temporal_study::<f64>(g.nx, &f.steps, f.reference_nt, t_final)?;
    let mut t = Table::new(&["h", "error"]);
    space.points.iter().for_each(|&(h, e)| t.push(vec![num(h), num(e)]));
    t.write(&out.join("convergence_space.csv"))?;
    let mut t = Table::new(&["dt", "error"]);
    time.points.iter().for_each(|&(h, e)| t.push(vec![num(h), num(e)]));
    t.write(&out.join("convergence_time.csv"))?;

    let y0 = setup.initial_state(config);
    let traj = setup.solver.solve_forward(&y0, None, None)?;
    let mut t = Table::new(&["t", "energy", "max_divergence"]);
    let mut max_div = space.max_divergence.max(time.max_divergence);
    for (k, y) in traj.velocity.iter().enumerate() {
        let d = y.max_divergence(g.hx, g.hy);
        max_div = max_div.max(d);
        t.push(vec![num(traj.times[k]), num(y.dot(y)), num(d)]);
    }
    t.write(&out.join("energy.csv"))?;
    let frames: Vec<(f64, &VelocityField<f64>)> = frames_at(g.nt).into_iter().map(|k| (traj.times[k], &traj.velocity[k])).collect();
    FieldDump::velocity(g, &frames).write(&out.join("y.bin"))?;

    let src = random_space_time_source(g, config.seed.wrapping_add(1), config.modes);
    let phi_t = random_stream_field(g, config.seed.wrapping_add(2), config.modes);
    let fwd = setup.solver.solve_forward(&VelocityField::zeros_like(g), Some(&src[1..]), None)?;
    let adj = setup.solver.solve_adjoint(None, &phi_t)?;
    let lhs: f64 = (0..g.nt).map(|k| g.dt * src[k + 1].dot(&adj.velocity[k])).sum();
    let rhs = fwd.terminal().dot(&phi_t);
    let f_norm = (src[1..].iter().map(|s| s.dot(s)).sum::<f64>() * g.dt).sqrt();
    let duality = (lhs - rhs).abs() / (f_norm * phi_t.norm());
    max_div = max_div.max(fwd.max_divergence(g.hx, g.hy)).max(adj.max_divergence(g.hx, g.hy));
    check_divergence("forward-check", max_div)?;
    Ok(json!({
        "spatial_order": space.order,
        "temporal_order": time.order,
        "spatial_errors": space.points.iter().map(|p| p.1).collect::<Vec<_>>(),
        "temporal_errors": time.points.iter().map(|p| p.1).collect::<Vec<_>>(),
        "max_divergence": max_div,
        "duality_error": duality,
    }))
}

fn run_hum(config: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<Value> {
    let g = &setup.grid;
    FieldDump::write(&weights_dump(g, &setup.weights), &out.join("weights.bin"))?;
    if config.weights.export_csv {
        weights_table(g, &setup.weights).write(&out.join("weights.csv"))?;
    }
    let y0 = setup.initial_state(config);
    let eps_values = config.eps_values();
    let results: Vec<Value> = eps_values
        .par_iter()
        .enumerate()
        .map(|(idx, &eps)| -> Result<Value> {
            let dir = out.join(format!("eps_{idx:02}"));
            std::fs::create_dir_all(&dir)?;
            let r = solve_penalized_hum(&y0, None, config.component, eps, &setup.weights, g, &setup.solver, config.solver.cg())?;
            if !r.control.structure_ok(g) {
                return Err(Error::Invariant(format!(
                    "eps = {eps:e}: control has a nonzero component {} or support outside omega",
                    config.component
                )));
            }
            let div = r.trajectory.max_divergence(g.hx, g.hy);
            check_divergence("controlled trajectory", div)?;

            let h = &r.dual.history;
            let mut t = Table::new(&["iteration", "functional", "residual"]);
            for (k, (j, res)) in h.objective.iter().zip(&h.residuals).enumerate() {
                t.push(vec![k.to_string(), num(*j), num(*res)]);
            }
            t.write(&dir.join("cg.csv"))?;
            let mut t = Table::new(&["t", "control_norm", "state_norm"]);
            for k in 0..=g.nt {
                let v = r.control.values.get(k).map_or(0.0, |v| v.norm());
                t.push(vec![num(g.time(k)), num(v), num(r.trajectory.velocity[k].norm())]);
            }
            t.write(&dir.join("history.csv"))?;
            let ks = frames_at(g.nt);
            let yf: Vec<(f64, &VelocityField<f64>)> = ks.iter().map(|&k| (g.time(k), &r.trajectory.velocity[k])).collect();
            FieldDump::velocity(g, &yf).write(&dir.join("y.bin"))?;
            let vf: Vec<(f64, &VelocityField<f64>)> =
                ks.iter().map(|&k| k.min(g.nt - 1)).map(|k| (g.time(k), &r.control.values[k])).collect();
            FieldDump::velocity(g, &vf).write(&dir.join("v.bin"))?;

            let [w1, w2, w3, w4] = r.weighted_norms;
            Ok(json!({
                "eps": eps,
                "terminal_norm": r.terminal_norm,
                "phi_t_norm": r.dual.phi_t.norm(),
                "weighted_norms": { "state": w1, "control": w2, "state_l2h2": w3, "state_linf_v": w4 },
                "cg_iterations": r.cg_iterations,
                "cg_converged": h.converged,
                "cg_stagnated": h.stagnated,
                "max_divergence": div,
                "max_abs_zero_component": r.control.max_abs_component(config.component),
            }))
        })
        .collect::<Result<_>>()?;
    let mut body = json!({ "runs": results });
    if let [single] = results.as_slice() {
        for key in ["terminal_norm", "weighted_norms", "cg_iterations", "eps"] {
            body[key] = single[key].clone();
        }
    }
    Ok(body)
}

fn run_audit(config: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<Value> {
    let g = &setup.grid;
    let s0 = setup.weights.params.s;
    let sets = config.audit.s_multipliers.iter().map(|m| setup.weights_at(m * s0)).collect::<Result<Vec<_>>>()?;
    let report = audit_sweep(&sets, config.audit.samples, config.seed, config.component, g, &setup.solver)?;
    let mut t = Table::new(&["s", "lambda", "sample_seed", "lhs27", "rhs27", "ratio27", "lhs33", "rhs33", "ratio33"]);
    for r in &report.samples {
        t.push(vec![
            num(r.s),
            num(r.lambda),
            r.seed.to_string(),
            num(r.lhs27),
            num(r.rhs27),
            num(r.ratio27),
            num(r.lhs33),
            num(r.rhs33),
            num(r.ratio33),
        ]);
    }
    t.write(&out.join("audit.csv"))?;
    let mut text = format!("carleman audit: {} samples, component {}\n", config.audit.samples, config.component);
    for p in &report.points {
        text += &format!(
            "s = {:.6e}: ratio27 max {:.6e} median {:.6e}; ratio33 max {:.6e} median {:.6e}; agreement {:.3e}; flagged {:?}{}\n",
            p.s,
            p.max27,
            p.median27,
            p.max33,
            p.median33,
            p.agreement,
            p.flagged_seeds,
            if p.flush_flag { "; flush-dominated weights" } else { "" }
        );
    }
    std::fs::write(out.join("audit_summary.txt"), text)?;
    let points: Vec<Value> = report
        .points
        .iter()
        .map(|p| {
            json!({
                "s": p.s, "max_ratio27": p.max27, "median_ratio27": p.median27,
                "max_ratio33": p.max33, "median_ratio33": p.median33,
                "flagged_seeds": p.flagged_seeds, "flush_flag": p.flush_flag, "agreement": p.agreement,
            })
        })
        .collect();
    Ok(json!({ "samples": config.audit.samples, "points": points }))
}

fn picard_table(h: &PicardHistory<f64>) -> Table {
    let mut t = Table::new(&["k", "residual", "terminal_norm", "source_norm"]);
    for s in &h.states {
        t.push(vec![s.iteration.to_string(), num(s.residual), num(s.terminal_norm), num(s.source_norm)]);
    }
    t
}

fn picard_options(config: &ExperimentConfig) -> PicardOptions {
    PicardOptions { max_iter: config.nonlinear.max_iter, tol: config.nonlinear.tol, cg: config.solver.cg(), ..PicardOptions::default() }
}

fn run_nonlinear(config: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<Value> {
    let g = &setup.grid;
    let eps = config.eps.unwrap_or_default();
    let y0 = setup.initial_state(config).scaled(config.nonlinear.amplitude);
    let h = solve_nonlinear(&y0, config.component, eps, picard_options(config), &setup.weights, g, &setup.solver)?;
    picard_table(&h).write(&out.join("picard.csv"))?;
    if let Some(last) = &h.last {
        check_divergence("Picard trajectory", last.trajectory.max_divergence(g.hx, g.hy))?;
    }
    Ok(json!({
        "amplitude": config.nonlinear.amplitude,
        "eps": eps,
        "converged": h.converged,
        "diverged": h.diverged,
        "iterations": h.states.len(),
        "final_residual": h.final_residual(),
        "residuals_strictly_decreasing": h.residuals_strictly_decreasing(),
        "linearized_terminal_norm": h.linearized_terminal_norm(),
        "nonlinear_terminal_norm": h.nonlinear_terminal_norm,
        "source_norms_finite": h.states.iter().all(|s| s.source_norm.is_finite()),
    }))
}

fn run_delta(config: &ExperimentConfig, setup: &Setup, out: &Path) -> Result<Value> {
    let g = &setup.grid;
    let eps = config.eps.unwrap_or_default();
    let unit = setup.initial_state(config);
    let opts = picard_options(config);
    let est = estimate_delta(&config.nonlinear.amplitudes, config.nonlinear.bisections, |a| {
        let h = solve_nonlinear(&unit.scaled(a), config.component, eps, opts, &setup.weights, g, &setup.solver)?;
        Ok(h.converged)
    })?;
    let mut t = Table::new(&["amplitude", "converged"]);
    for (a, c) in &est.tested {
        t.push(vec![num(*a), c.to_string()]);
    }
    t.write(&out.join("threshold.csv"))?;
    Ok(json!({
        "eps": eps,
        "lower": est.lower,
        "upper": est.upper,
        "open": est.is_open(),
        "initial_gap": est.initial_gap,
        "width": est.width(),
        "monotone": est.monotone,
        "all_diverged": est.all_diverged,
    }))
}
