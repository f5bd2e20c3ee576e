//! Navier-Stokes null control by successive linearization (Picard), and an empirical
//! smallness-threshold bracket.

use rayon::prelude::*;

use crate::cg::CgOptions;
use crate::control::{HumProblem, RunResult};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::stokes::StokesSolver;
use crate::weights::{Combo, Family, WeightSet};

/// `(a . grad) b` on the MAC grid: centered differences of `b`, the transverse
/// component of `a` averaged from its four neighbouring faces, ghost reflection for
/// the tangential derivative at the walls, zero on boundary normal faces.
pub fn bilinear<T: Real>(a: &VelocityField<T>, b: &VelocityField<T>, hx: T, hy: T) -> VelocityField<T> {
    let (nx, ny) = (a.nx, a.ny);
    let mut out = VelocityField::zeros(nx, ny);
    let quarter = T::lit(0.25);
    let (cx, cy) = (T::one() / (hx + hx), T::one() / (hy + hy));
    let ui = |i: usize, j: usize| j * (nx + 1) + i;
    let vi = |i: usize, j: usize| j * nx + i;
    for j in 0..ny {
        for i in 1..nx {
            let dudx = (b.u[ui(i + 1, j)] - b.u[ui(i - 1, j)]) * cx;
            let up = if j + 1 < ny { b.u[ui(i, j + 1)] } else { -b.u[ui(i, j)] };
            let dn = if j > 0 { b.u[ui(i, j - 1)] } else { -b.u[ui(i, j)] };
            let dudy = (up - dn) * cy;
            let vbar = quarter * (a.v[vi(i - 1, j)] + a.v[vi(i, j)] + a.v[vi(i - 1, j + 1)] + a.v[vi(i, j + 1)]);
            out.u[ui(i, j)] = a.u[ui(i, j)] * dudx + vbar * dudy;
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            let dvdy = (b.v[vi(i, j + 1)] - b.v[vi(i, j - 1)]) * cy;
            let rt = if i + 1 < nx { b.v[vi(i + 1, j)] } else { -b.v[vi(i, j)] };
            let lt = if i > 0 { b.v[vi(i - 1, j)] } else { -b.v[vi(i, j)] };
            let dvdx = (rt - lt) * cx;
            let ubar = quarter * (a.u[ui(i, j - 1)] + a.u[ui(i + 1, j - 1)] + a.u[ui(i, j)] + a.u[ui(i + 1, j)]);
            out.v[vi(i, j)] = ubar * dvdx + a.v[vi(i, j)] * dvdy;
        }
    }
    out
}

/// `(y . grad) y`.
pub fn convect<T: Real>(y: &VelocityField<T>, hx: T, hy: T) -> VelocityField<T> {
    bilinear(y, y, hx, hy)
}

#[derive(Debug, Clone, Copy)]
pub struct PicardOptions {
    pub max_iter: usize,
    /// Stop once the residual is at most `tol` times the weighted norm of the first iterate.
    pub tol: f64,
    /// Consecutive residual increases that count as divergence.
    pub divergence_window: usize,
    pub cg: CgOptions,
}

impl Default for PicardOptions {
    fn default() -> Self {
        PicardOptions { max_iter: 30, tol: 1e-8, divergence_window: 3, cg: CgOptions::default() }
    }
}

/// Record of one Picard iterate.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PicardState<T> {
    pub iteration: usize,
    /// Weighted distance to the previous iterate (`0` for the first one).
    pub residual: T,
    pub terminal_norm: T,
    /// `|e^{5/2 s beta*} (gamma*)^{-2} (y . grad) y|_{L2 L2}` of this iterate's trajectory.
    pub source_norm: T,
    pub cg_iterations: usize,
    pub structure_ok: bool,
}

#[derive(Debug, Clone)]
pub struct PicardHistory<T> {
    pub states: Vec<PicardState<T>>,
    pub converged: bool,
    pub diverged: bool,
    /// Last linear solve.
    pub last: Option<RunResult<T>>,
    /// `|y(T)|` of the convective forward run driven by the last control.
    pub nonlinear_terminal_norm: T,
    pub y0_norm: T,
}

impl<T: Real> PicardHistory<T> {
    pub fn linearized_terminal_norm(&self) -> T {
        self.last.as_ref().map_or(T::zero(), |r| r.terminal_norm)
    }

    pub fn final_residual(&self) -> T {
        self.states.last().map_or(T::zero(), |s| s.residual)
    }

    /// Residuals from the second iterate on.
    pub fn residuals(&self) -> Vec<T> {
        self.states.iter().skip(1).map(|s| s.residual).collect()
    }

    pub fn residuals_strictly_decreasing(&self) -> bool {
        self.residuals().windows(2).all(|w| w[1] < w[0])
    }
}

/// `(sum_k dt w_k^2 |y_k|^2)^(1/2)` over `k = 1..=nt` with the state weight `e^{3/2 s beta*}`.
pub fn weighted_state_distance<T: Real>(a: &[VelocityField<T>], b: &[VelocityField<T>], weights: &WeightSet<T>, dt: T) -> T {
    let mut acc = T::zero();
    for k in 1..a.len() {
        let w = weights.weight(Family::Beta, k, Combo::STATE);
        let d = a[k].sub(&b[k]);
        acc += dt * w * w * d.dot(&d);
    }
    acc.sqrt()
}

/// Weighted `L2 L2` norm of the convection of a trajectory, one sample per interval.
pub fn weighted_source_norm<T: Real>(ys: &[VelocityField<T>], weights: &WeightSet<T>, grid: &Grid<T>) -> T {
    let mut acc = T::zero();
    for k in 0..grid.nt {
        if let Some(lw) = weights.log_weight(Family::Beta, k, Combo::SOURCE_NORM) {
            let c = convect(&ys[k], grid.hx, grid.hy);
            acc += grid.dt * (lw + lw).exp() * c.dot(&c);
        }
    }
    acc.sqrt()
}

/// Forward run with explicit convection and the given control.
pub fn simulate_navier_stokes<T: Real>(
    y0: &VelocityField<T>,
    control: &[VelocityField<T>],
    grid: &Grid<T>,
    solver: &StokesSolver<T>,
) -> Result<Vec<VelocityField<T>>> {
    let (hx, hy) = (grid.hx, grid.hy);
    let traj = solver.solve_forward_with(y0, false, |k, y| {
        let mut f = control[k].clone();
        f.axpy(-T::one(), &convect(y, hx, hy));
        Some(f)
    })?;
    Ok(traj.velocity)
}

/// Picard iteration: iterate `m` solves the linear control problem with source
/// `-(y_{m-1} . grad) y_{m-1}` (zero for `m = 0`), convection taken at the start of
/// each interval.
pub fn solve_nonlinear<T: Real>(
    y0: &VelocityField<T>,
    component: usize,
    eps: T,
    opts: PicardOptions,
    weights: &WeightSet<T>,
    grid: &Grid<T>,
    solver: &StokesSolver<T>,
) -> Result<PicardHistory<T>> {
    if opts.max_iter == 0 {
        return Err(Error::InvalidParameter { name: "max_iter", reason: "need at least one Picard iterate".into() });
    }
    let mut hist = PicardHistory {
        states: Vec::new(),
        converged: false,
        diverged: false,
        last: None,
        nonlinear_terminal_norm: T::zero(),
        y0_norm: y0.norm(),
    };
    let mut source: Option<Vec<VelocityField<T>>> = None;
    let mut warm: Option<VelocityField<T>> = None;
    let mut scale = T::zero();
    let mut increases = 0usize;
    for m in 0..opts.max_iter {
        let problem = HumProblem::new(grid, solver, weights, y0, source.as_deref(), component, eps)?;
        let dual = problem.minimize(opts.cg, warm.take())?;
        let run = problem.realize(dual)?;
        let ys = &run.trajectory.velocity;
        let residual = match &hist.last {
            None => T::zero(),
            Some(prev) => weighted_state_distance(ys, &prev.trajectory.velocity, weights, grid.dt),
        };
        if m == 0 {
            scale = weighted_state_distance(ys, &vec![VelocityField::zeros_like(grid); ys.len()], weights, grid.dt);
        }
        let state = PicardState {
            iteration: m,
            residual,
            terminal_norm: run.terminal_norm,
            source_norm: weighted_source_norm(ys, weights, grid),
            cg_iterations: run.cg_iterations,
            structure_ok: run.control.structure_ok(grid),
        };
        if !state.structure_ok {
            return Err(Error::Invariant(format!("Picard iterate {m}: control structure violated")));
        }
        if let Some(prev) = hist.states.last() {
            if m >= 2 && residual >= prev.residual {
                increases += 1;
            } else {
                increases = 0;
            }
        }
        let bad = !residual.is_finite() || !state.terminal_norm.is_finite();
        source = Some(ys[..grid.nt].iter().map(|y| convect(y, grid.hx, grid.hy).scaled(-T::one())).collect());
        warm = Some(run.dual.phi_t.clone());
        hist.states.push(state);
        hist.last = Some(run);
        if bad || increases >= opts.divergence_window {
            hist.diverged = true;
            break;
        }
        let done = if m == 0 { scale == T::zero() } else { residual <= T::lit(opts.tol) * scale };
        if done {
            hist.converged = true;
            break;
        }
    }
    if let Some(last) = &hist.last {
        let ys = simulate_navier_stokes(y0, &last.control.values, grid, solver)?;
        hist.nonlinear_terminal_norm = ys[grid.nt].norm();
    }
    Ok(hist)
}

/// Bracket for the largest initial amplitude that still converges.
#[derive(Debug, Clone, PartialEq)]
pub struct ThresholdEstimate<T> {
    /// Every amplitude tried, in order, with its outcome.
    pub tested: Vec<(T, bool)>,
    /// Largest converged amplitude below the first divergence.
    pub lower: Option<T>,
    /// Smallest diverged amplitude; `None` when nothing diverged (open bracket).
    pub upper: Option<T>,
    pub initial_gap: Option<T>,
    /// No convergence after the first divergence in the initial sweep.
    pub monotone: bool,
    pub all_diverged: bool,
}

impl<T: Real> ThresholdEstimate<T> {
    pub fn is_open(&self) -> bool {
        self.upper.is_none()
    }

    pub fn width(&self) -> Option<T> {
        Some(self.upper? - self.lower?)
    }
}

/// Sweeps sorted `amplitudes` in parallel, then refines between the largest converged
/// and the smallest diverged amplitude by `bisections` sequential midpoint tests.
pub fn estimate_delta<T: Real>(
    amplitudes: &[T],
    bisections: usize,
    converges: impl Fn(T) -> Result<bool> + Sync,
) -> Result<ThresholdEstimate<T>> {
    if amplitudes.is_empty() || amplitudes.windows(2).any(|w| !(w[0] < w[1])) {
        return Err(Error::InvalidParameter { name: "amplitudes", reason: "must be nonempty and strictly ascending".into() });
    }
    let flags: Vec<bool> = amplitudes.par_iter().map(|&a| converges(a)).collect::<Result<_>>()?;
    let mut tested: Vec<(T, bool)> = amplitudes.iter().copied().zip(flags.iter().copied()).collect();
    let first_div = flags.iter().position(|&c| !c);
    let monotone = first_div.is_none_or(|d| flags[d..].iter().all(|&c| !c));
    let all_diverged = first_div == Some(0);
    let mut lower = match first_div {
        Some(0) => None,
        Some(d) => Some(amplitudes[d - 1]),
        None => amplitudes.last().copied(),
    };
    let mut upper = first_div.map(|d| amplitudes[d]);
    let initial_gap = match (lower, upper) {
        (Some(l), Some(u)) => Some(u - l),
        _ => None,
    };
    if let (Some(mut l), Some(mut u)) = (lower, upper) {
        for _ in 0..bisections {
            let mid = T::lit(0.5) * (l + u);
            let ok = converges(mid)?;
            tested.push((mid, ok));
            if ok {
                l = mid;
            } else {
                u = mid;
            }
        }
        lower = Some(l);
        upper = Some(u);
    }
    Ok(ThresholdEstimate { tested, lower, upper, initial_gap, monotone, all_diverged })
}
