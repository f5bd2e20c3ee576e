//! Controls with one vanishing component via a penalized dual problem.
//!
//! For terminal adjoint data `phiT` let `phi` solve the backward Stokes system with
//! no source. The control is `v_j = -rho^2 phi_j` on omega for `j != i`, `v_i = 0`,
//! with `rho^2 = exp(-2 s beta^ - 3 s beta*) gamma^7`. The dual functional
//!
//! ```text
//! J(phiT) = 1/2 sum_{j != i} int_omega rho^2 |phi_j|^2 + eps/2 |phiT|^2
//!           - <y0, phi(0)> - int f . phi
//! ```
//!
//! is minimized by conjugate gradient. With `Lambda` the Gramian and `b` the
//! uncontrolled terminal state, `J = 1/2 <(Lambda + eps) phiT, phiT> - <b, phiT>`, and
//! the controlled state satisfies `y(T) = eps phiT` at the optimum.

use crate::cg::{conjugate_gradient, CgHistory, CgOptions, InnerProductSpace};
use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::Grid;
use crate::scalar::Real;
use crate::stokes::{h1_norm, h2_norm, Source, StateTrajectory, StokesSolver};
use crate::weights::{Combo, Family, WeightSet};

impl<T: Real> InnerProductSpace<T> for VelocityField<T> {
    fn inner(&self, other: &Self) -> T {
        self.dot(other)
    }

    fn axpy(&mut self, c: T, x: &Self) {
        VelocityField::axpy(self, c, x)
    }

    fn scale(&mut self, c: T) {
        VelocityField::scale(self, c)
    }
}

/// Control on omega, one field per time interval `(t_k, t_{k+1}]`.
#[derive(Debug, Clone)]
pub struct ControlField<T> {
    pub values: Vec<VelocityField<T>>,
    /// Index `i` (1 = x, 2 = y) of the component forced to zero.
    pub zero_component: usize,
}

impl<T: Real> ControlField<T> {
    pub fn zeros(grid: &Grid<T>, zero_component: usize) -> Self {
        ControlField { values: vec![VelocityField::zeros_like(grid); grid.nt], zero_component }
    }

    /// `max |v_i|` over all samples.
    pub fn max_abs_component(&self, c: usize) -> T {
        self.values.iter().flat_map(|v| v.component(c).iter()).fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    /// `max |v|` over faces outside omega.
    pub fn max_abs_outside(&self, grid: &Grid<T>) -> T {
        let mut m = T::zero();
        for v in &self.values {
            for (a, &inside) in v.u.iter().zip(&grid.omega_u) {
                if !inside {
                    m = m.max(a.abs());
                }
            }
            for (a, &inside) in v.v.iter().zip(&grid.omega_v) {
                if !inside {
                    m = m.max(a.abs());
                }
            }
        }
        m
    }

    /// Component `i` identically zero and support inside omega, both exactly.
    pub fn structure_ok(&self, grid: &Grid<T>) -> bool {
        self.max_abs_component(self.zero_component) == T::zero() && self.max_abs_outside(grid) == T::zero()
    }

    /// `(t_k, |v(t_k)|)` per interval.
    pub fn norms(&self) -> Vec<T> {
        self.values.iter().map(|v| v.norm()).collect()
    }
}

/// Terminal adjoint datum with the CG log that produced it.
#[derive(Debug, Clone)]
pub struct DualIterate<T> {
    pub phi_t: VelocityField<T>,
    pub history: CgHistory<T>,
}

/// Outcome of one controllability solve.
#[derive(Debug, Clone)]
pub struct RunResult<T> {
    pub control: ControlField<T>,
    pub trajectory: StateTrajectory<T>,
    pub dual: DualIterate<T>,
    pub terminal_norm: T,
    pub weighted_norms: [T; 4],
    pub cg_iterations: usize,
    pub eps: T,
}

fn check_component(i: usize) -> Result<()> {
    if i == 1 || i == 2 {
        Ok(())
    } else {
        Err(Error::InvalidParameter { name: "component", reason: format!("component index {i} out of range for N = 2") })
    }
}

/// `v_j = -rho^2(t_k) phi_j(t_k)` on omega for `j != i`, `v_i = 0`, exact zeros elsewhere.
pub fn reconstruct_control<T: Real>(
    adjoint: &StateTrajectory<T>,
    weights: &WeightSet<T>,
    i: usize,
    grid: &Grid<T>,
) -> Result<ControlField<T>> {
    check_component(i)?;
    if adjoint.velocity.len() != grid.nt + 1 || weights.nt != grid.nt {
        return Err(Error::MeshMismatch("adjoint trajectory / weights do not match the grid".into()));
    }
    let values = (0..grid.nt)
        .map(|k| {
            let w = weights.control_weight[k];
            let phi = &adjoint.velocity[k];
            let mut v = VelocityField::zeros_like(grid);
            for c in [1usize, 2] {
                if c == i {
                    continue;
                }
                let mask = if c == 1 { &grid.omega_u } else { &grid.omega_v };
                let (src, dst) = (phi.component(c), v.component_mut(c));
                for ((d, &p), &inside) in dst.iter_mut().zip(src).zip(mask) {
                    if inside && w != T::zero() && p != T::zero() {
                        *d = -(w * p);
                    }
                }
            }
            v
        })
        .collect();
    Ok(ControlField { values, zero_component: i })
}

/// `sum_k dt sum_{j != i} int_omega rho^2 |phi_j|^2`.
pub fn observation_energy<T: Real>(adjoint: &StateTrajectory<T>, weights: &WeightSet<T>, i: usize, grid: &Grid<T>) -> T {
    let area = grid.cell_area();
    let mut total = T::zero();
    for k in 0..grid.nt {
        let w = weights.control_weight[k];
        if w == T::zero() {
            continue;
        }
        let phi = &adjoint.velocity[k];
        let mut local = T::zero();
        for c in [1usize, 2] {
            if c == i {
                continue;
            }
            let mask = if c == 1 { &grid.omega_u } else { &grid.omega_v };
            local += phi.component(c).iter().zip(mask).filter(|(_, &m)| m).map(|(&p, _)| p * p).sum::<T>();
        }
        total += grid.dt * w * local * area;
    }
    total
}

/// The linear controllability problem for fixed data.
pub struct HumProblem<'a, T: Real> {
    pub grid: &'a Grid<T>,
    pub solver: &'a StokesSolver<T>,
    pub weights: &'a WeightSet<T>,
    pub y0: &'a VelocityField<T>,
    pub f: Option<&'a Source<T>>,
    pub component: usize,
    pub eps: T,
}

impl<'a, T: Real> HumProblem<'a, T> {
    pub fn new(
        grid: &'a Grid<T>,
        solver: &'a StokesSolver<T>,
        weights: &'a WeightSet<T>,
        y0: &'a VelocityField<T>,
        f: Option<&'a Source<T>>,
        component: usize,
        eps: T,
    ) -> Result<Self> {
        check_component(component)?;
        if !(eps > T::zero()) {
            return Err(Error::InvalidParameter { name: "eps", reason: format!("penalization must be positive, got {eps}") });
        }
        if weights.nt != grid.nt || !y0.fits(grid) {
            return Err(Error::MeshMismatch("weights or y0 do not match the grid".into()));
        }
        if let Some(f) = f {
            if f.len() != grid.nt {
                return Err(Error::MeshMismatch(format!("{} source slices for {} steps", f.len(), grid.nt)));
            }
        }
        Ok(HumProblem { grid, solver, weights, y0, f, component, eps })
    }

    fn adjoint(&self, phi_t: &VelocityField<T>) -> Result<StateTrajectory<T>> {
        self.solver.solve_adjoint_opts(None, phi_t, false)
    }

    /// Uncontrolled terminal state `b`.
    pub fn free_terminal(&self) -> Result<VelocityField<T>> {
        let traj = self.solver.solve_forward_with(self.y0, false, |k, _| self.f.map(|f| f[k].clone()))?;
        Ok(traj.terminal().clone())
    }

    /// Gramian `Lambda phiT = -y_v(T)` where `y_v` is driven from rest by the control
    /// reconstructed from `phiT`.
    pub fn gramian(&self, phi_t: &VelocityField<T>) -> Result<VelocityField<T>> {
        let adj = self.adjoint(phi_t)?;
        let v = reconstruct_control(&adj, self.weights, self.component, self.grid)?;
        let traj = self.solver.solve_forward_with(&VelocityField::zeros_like(self.grid), false, |k, _| Some(v.values[k].clone()))?;
        Ok(traj.terminal().scaled(-T::one()))
    }

    /// `J(phiT)` evaluated from its definition.
    pub fn functional(&self, phi_t: &VelocityField<T>) -> Result<T> {
        let adj = self.adjoint(phi_t)?;
        let obs = observation_energy(&adj, self.weights, self.component, self.grid);
        let mut linear = self.y0.dot(adj.initial());
        if let Some(f) = self.f {
            for k in 0..self.grid.nt {
                linear += self.grid.dt * f[k].dot(&adj.velocity[k]);
            }
        }
        Ok(T::lit(0.5) * obs + T::lit(0.5) * self.eps * phi_t.dot(phi_t) - linear)
    }

    /// `grad J = (Lambda + eps) phiT - b`.
    pub fn gradient(&self, phi_t: &VelocityField<T>) -> Result<VelocityField<T>> {
        let mut g = self.gramian(phi_t)?;
        g.axpy(self.eps, phi_t);
        g.axpy(-T::one(), &self.free_terminal()?);
        Ok(g)
    }

    /// Minimizes `J` by CG from `initial` (zero when `None`).
    pub fn minimize(&self, opts: CgOptions, initial: Option<VelocityField<T>>) -> Result<DualIterate<T>> {
        let b = self.free_terminal()?;
        let x0 = initial.unwrap_or_else(|| VelocityField::zeros_like(self.grid));
        let err = std::cell::RefCell::new(None);
        let apply = |p: &VelocityField<T>| match self.gramian(p) {
            Ok(mut g) => {
                g.axpy(self.eps, p);
                g
            }
            Err(e) => {
                err.borrow_mut().get_or_insert(e);
                VelocityField::zeros_like(self.grid)
            }
        };
        let (phi_t, history) = conjugate_gradient(apply, &b, x0, opts);
        if let Some(e) = err.into_inner() {
            return Err(e);
        }
        Ok(DualIterate { phi_t, history })
    }

    /// Control and controlled trajectory (with pressure) for a given dual iterate.
    pub fn realize(&self, dual: DualIterate<T>) -> Result<RunResult<T>> {
        let adj = self.adjoint(&dual.phi_t)?;
        let control = reconstruct_control(&adj, self.weights, self.component, self.grid)?;
        let trajectory = self.solver.solve_forward(self.y0, self.f, Some(&control.values))?;
        let terminal_norm = trajectory.terminal().norm();
        let mut result = RunResult {
            control,
            trajectory,
            cg_iterations: dual.history.iterations,
            dual,
            terminal_norm,
            weighted_norms: [T::zero(); 4],
            eps: self.eps,
        };
        result.weighted_norms = weighted_norms(&result, self.weights, self.grid);
        Ok(result)
    }
}

/// Full controllability solve: CG on the dual functional, then reconstruction and
/// the controlled forward run.
#[allow(clippy::too_many_arguments)]
pub fn solve_penalized_hum<T: Real>(
    y0: &VelocityField<T>,
    f: Option<&Source<T>>,
    i: usize,
    eps: T,
    weights: &WeightSet<T>,
    grid: &Grid<T>,
    solver: &StokesSolver<T>,
    opts: CgOptions,
) -> Result<RunResult<T>> {
    let problem = HumProblem::new(grid, solver, weights, y0, f, i, eps)?;
    let dual = problem.minimize(opts, None)?;
    problem.realize(dual)
}

/// The four weighted components of the solution-space norm:
/// `|e^{3/2 s beta*} y|_{L2 L2}`, `|e^{s beta^ + 3/2 s beta*} gamma^{-7/2} v|_{L2 L2}`,
/// `|e^{3/2 s beta*} (gamma*)^{-9/8} y|_{L2 H2}` and the same weight in `L-inf H1`.
pub fn weighted_norms<T: Real>(result: &RunResult<T>, weights: &WeightSet<T>, grid: &Grid<T>) -> [T; 4] {
    let (dt, hx, hy) = (grid.dt, grid.hx, grid.hy);
    let ys = &result.trajectory.velocity;
    let mut state = T::zero();
    let mut state_h2 = T::zero();
    let mut state_v = T::zero();
    for (k, y) in ys.iter().enumerate() {
        let rho = weights.weight(Family::Beta, k, Combo::STATE_REGULAR);
        state_v = state_v.max(rho * h1_norm(y, hx, hy));
        if k == 0 {
            continue;
        }
        let w = weights.weight(Family::Beta, k, Combo::STATE);
        state += dt * w * w * y.dot(y);
        let h2 = h2_norm(y, hx, hy);
        state_h2 += dt * rho * rho * h2 * h2;
    }
    let mut control = T::zero();
    for (k, v) in result.control.values.iter().enumerate() {
        if let Some(lw) = weights.log_weight(Family::Beta, k, Combo::CONTROL_NORM) {
            control += dt * (lw + lw).exp() * v.dot(v);
        }
    }
    [state.sqrt(), control.sqrt(), state_h2.sqrt(), state_v]
}
