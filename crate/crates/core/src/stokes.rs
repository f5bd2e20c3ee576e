//! Implicit Euler Stokes solver on the MAC grid.
//!
//! One step solves the saddle-point problem
//!
//! ```text
//! (y' - y) / dt - Lap y' + grad p = f,     div y' = 0
//! ```
//!
//! exactly on the discretely divergence-free subspace. That subspace is the range
//! of the discrete curl `Z` of nodal stream functions, so the step is
//! `y' = Z (Z^T A Z)^-1 Z^T (y / dt + f)` with `A = I/dt - Lap`, a symmetric map.
//! The backward (adjoint) step applies the same symmetric map, which makes it the
//! exact transpose of the forward step. Pressure is recovered from the momentum
//! residual by a Neumann Poisson solve with zero mean.

use crate::banded::{BandedCholesky, BandedSpd};
use crate::error::{Error, Result};
use crate::field::{PressureField, VelocityField};
use crate::grid::Grid;
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    Forward,
    Backward,
}

/// Velocity (and optionally pressure) at every time level `t_k`, `k = 0..=nt`.
#[derive(Debug, Clone)]
pub struct StateTrajectory<T> {
    pub direction: Direction,
    pub times: Vec<T>,
    pub velocity: Vec<VelocityField<T>>,
    pub pressure: Option<Vec<PressureField<T>>>,
}

impl<T: Real> StateTrajectory<T> {
    pub fn initial(&self) -> &VelocityField<T> {
        &self.velocity[0]
    }

    pub fn terminal(&self) -> &VelocityField<T> {
        self.velocity.last().expect("nonempty trajectory")
    }

    pub fn energies(&self) -> Vec<T> {
        self.velocity.iter().map(|y| y.norm()).collect()
    }

    pub fn max_divergence(&self, hx: T, hy: T) -> T {
        self.velocity.iter().map(|y| y.max_divergence(hx, hy)).fold(T::zero(), T::max)
    }
}

/// Time-indexed source: entry `k` acts on the interval `(t_k, t_{k+1}]`.
/// Forward solves evaluate it at `t_{k+1}`, backward solves at `t_k`.
pub type Source<T> = [VelocityField<T>];

/// Factorized operators for one grid and time step.
#[derive(Debug, Clone)]
pub struct StokesSolver<T> {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub hx: T,
    pub hy: T,
    pub dt: T,
    step: BandedCholesky<T>,
    stream_laplace: BandedCholesky<T>,
    pressure: BandedCholesky<T>,
    /// Recover pressure in the public solve entry points.
    pub with_pressure: bool,
}

impl<T: Real> StokesSolver<T> {
    pub fn new(grid: &Grid<T>) -> Result<Self> {
        Self::with_dt(grid, grid.dt)
    }

    /// Operators for an arbitrary step `dt` on `grid`'s spatial mesh.
    pub fn with_dt(grid: &Grid<T>, dt: T) -> Result<Self> {
        let (nx, ny, hx, hy) = (grid.nx, grid.ny, grid.hx, grid.hy);
        let (mx, my) = (nx - 1, ny - 1);
        let inv_dt = T::one() / dt;
        let embed = |psi: &[T]| {
            let mut full = vec![T::zero(); (nx + 1) * (ny + 1)];
            for j in 0..my {
                for i in 0..mx {
                    full[(j + 1) * (nx + 1) + i + 1] = psi[j * mx + i];
                }
            }
            VelocityField::from_stream(nx, ny, hx, hy, &full)
        };
        let restrict = |w: &VelocityField<T>| {
            let full = w.curl_transpose(hx, hy);
            let mut out = vec![T::zero(); mx * my];
            for j in 0..my {
                for i in 0..mx {
                    out[j * mx + i] = full[(j + 1) * (nx + 1) + i + 1];
                }
            }
            out
        };
        let step_op = BandedSpd::probe_grid(mx, my, 2, |psi| {
            let y = embed(psi);
            let mut ay = y.scaled(inv_dt);
            ay.axpy(-T::one(), &y.laplacian(hx, hy));
            restrict(&ay)
        });
        let lap_op = BandedSpd::probe_grid(mx, my, 1, |psi| restrict(&embed(psi)));
        let p_op = BandedSpd::probe_grid(nx, ny, 1, |p| {
            let mut x = p.to_vec();
            let pinned = x[0];
            x[0] = T::zero();
            let mut y = VelocityField::gradient(&x, nx, ny, hx, hy).gradient_transpose(hx, hy);
            y[0] = pinned;
            y
        });
        Ok(StokesSolver {
            nx,
            ny,
            nt: grid.nt,
            hx,
            hy,
            dt,
            step: BandedCholesky::factor(&step_op)?,
            stream_laplace: BandedCholesky::factor(&lap_op)?,
            pressure: BandedCholesky::factor(&p_op)?,
            with_pressure: true,
        })
    }

    fn interior_stream(&self, w: &VelocityField<T>) -> Vec<T> {
        let (nx, ny) = (self.nx, self.ny);
        let full = w.curl_transpose(self.hx, self.hy);
        let mut out = Vec::with_capacity((nx - 1) * (ny - 1));
        for j in 1..ny {
            out.extend_from_slice(&full[j * (nx + 1) + 1..j * (nx + 1) + nx]);
        }
        out
    }

    fn curl_of_interior(&self, psi: &[T]) -> VelocityField<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut full = vec![T::zero(); (nx + 1) * (ny + 1)];
        for j in 1..ny {
            full[j * (nx + 1) + 1..j * (nx + 1) + nx].copy_from_slice(&psi[(j - 1) * (nx - 1)..j * (nx - 1)]);
        }
        VelocityField::from_stream(nx, ny, self.hx, self.hy, &full)
    }

    /// The symmetric solution map `b -> y` of `A y + grad p = b, div y = 0`.
    pub fn solve_step(&self, b: &VelocityField<T>) -> VelocityField<T> {
        let mut psi = self.interior_stream(b);
        self.step.solve_in_place(&mut psi);
        self.curl_of_interior(&psi)
    }

    fn apply_momentum(&self, y: &VelocityField<T>) -> VelocityField<T> {
        let mut ay = y.scaled(T::one() / self.dt);
        ay.axpy(-T::one(), &y.laplacian(self.hx, self.hy));
        ay
    }

    /// Zero-mean pressure with `grad p = b - A y` for a step solved from `b`.
    pub fn recover_pressure(&self, b: &VelocityField<T>, y: &VelocityField<T>) -> PressureField<T> {
        let mut r = b.clone();
        r.axpy(-T::one(), &self.apply_momentum(y));
        let mut rhs = r.gradient_transpose(self.hx, self.hy);
        rhs[0] = T::zero();
        self.pressure.solve_in_place(&mut rhs);
        let mut p = PressureField { nx: self.nx, ny: self.ny, p: rhs };
        p.remove_mean();
        p
    }

    fn check(&self, what: &str, y: &VelocityField<T>) -> Result<()> {
        if y.nx != self.nx || y.ny != self.ny || y.u.len() != (self.nx + 1) * self.ny || y.v.len() != self.nx * (self.ny + 1) {
            return Err(Error::MeshMismatch(format!("{what}: field {}x{} vs solver {}x{}", y.nx, y.ny, self.nx, self.ny)));
        }
        Ok(())
    }

    fn check_source(&self, what: &str, f: Option<&Source<T>>) -> Result<()> {
        if let Some(f) = f {
            if f.len() != self.nt {
                return Err(Error::MeshMismatch(format!("{what}: {} source slices for {} steps", f.len(), self.nt)));
            }
            for s in f {
                self.check(what, s)?;
            }
        }
        Ok(())
    }

    /// Forward solve from `y0` with an extra source computed from the step index and
    /// the current state (used for explicit convection).
    pub fn solve_forward_with(
        &self,
        y0: &VelocityField<T>,
        with_pressure: bool,
        mut source: impl FnMut(usize, &VelocityField<T>) -> Option<VelocityField<T>>,
    ) -> Result<StateTrajectory<T>> {
        self.check("y0", y0)?;
        let inv_dt = T::one() / self.dt;
        let mut velocity = Vec::with_capacity(self.nt + 1);
        let mut pressure = with_pressure.then(|| vec![PressureField::zeros(self.nx, self.ny)]);
        velocity.push(y0.clone());
        for k in 0..self.nt {
            let prev = &velocity[k];
            let mut b = prev.scaled(inv_dt);
            if let Some(f) = source(k, prev) {
                self.check("source", &f)?;
                b.axpy(T::one(), &f);
            }
            let y = self.solve_step(&b);
            if let Some(ps) = pressure.as_mut() {
                ps.push(self.recover_pressure(&b, &y));
            }
            velocity.push(y);
        }
        Ok(StateTrajectory { direction: Direction::Forward, times: self.times(), velocity, pressure })
    }

    /// Forward Stokes solve with source `f` and an already-restricted control `v`
    /// (both indexed by interval).
    pub fn solve_forward(&self, y0: &VelocityField<T>, f: Option<&Source<T>>, v: Option<&Source<T>>) -> Result<StateTrajectory<T>> {
        self.check_source("f", f)?;
        self.check_source("v", v)?;
        self.solve_forward_with(y0, self.with_pressure, |k, _| match (f, v) {
            (None, None) => None,
            (Some(f), None) => Some(f[k].clone()),
            (None, Some(v)) => Some(v[k].clone()),
            (Some(f), Some(v)) => Some(f[k].add(&v[k])),
        })
    }

    /// Backward adjoint solve `-phi_t - Lap phi + grad pi = g`, `phi(T) = phi_t`.
    pub fn solve_adjoint(&self, g: Option<&Source<T>>, phi_t: &VelocityField<T>) -> Result<StateTrajectory<T>> {
        self.solve_adjoint_opts(g, phi_t, self.with_pressure)
    }

    pub fn solve_adjoint_opts(&self, g: Option<&Source<T>>, phi_t: &VelocityField<T>, with_pressure: bool) -> Result<StateTrajectory<T>> {
        self.check("phiT", phi_t)?;
        self.check_source("g", g)?;
        let inv_dt = T::one() / self.dt;
        let mut velocity = vec![VelocityField::zeros(self.nx, self.ny); self.nt + 1];
        let mut pressure = with_pressure.then(|| vec![PressureField::zeros(self.nx, self.ny); self.nt + 1]);
        velocity[self.nt] = phi_t.clone();
        for k in (0..self.nt).rev() {
            let mut b = velocity[k + 1].scaled(inv_dt);
            if let Some(g) = g {
                b.axpy(T::one(), &g[k]);
            }
            let phi = self.solve_step(&b);
            if let Some(ps) = pressure.as_mut() {
                ps[k] = self.recover_pressure(&b, &phi);
            }
            velocity[k] = phi;
        }
        Ok(StateTrajectory { direction: Direction::Backward, times: self.times(), velocity, pressure })
    }

    pub fn times(&self) -> Vec<T> {
        (0..=self.nt).map(|k| T::from_count(k) * self.dt).collect()
    }

    /// L2-orthogonal projection onto discretely divergence-free fields.
    pub fn project_divergence_free(&self, w: &VelocityField<T>) -> Result<VelocityField<T>> {
        self.check("w", w)?;
        let mut psi = self.interior_stream(w);
        self.stream_laplace.solve_in_place(&mut psi);
        Ok(self.curl_of_interior(&psi))
    }

    /// `(|u|^2_{L2 H2} + |u|^2_{H1 L2}) / |f|^2_{L2 L2}` for the solution with zero
    /// initial data; `0` when `f = 0`.
    pub fn regularity_ratio(&self, f: &Source<T>) -> Result<T> {
        self.check_source("f", Some(f))?;
        let dt = self.dt;
        let f_norm: T = f.iter().map(|s| s.dot(s)).sum::<T>() * dt;
        if f_norm == T::zero() {
            return Ok(T::zero());
        }
        let traj = self.solve_forward_with(&VelocityField::zeros(self.nx, self.ny), false, |k, _| Some(f[k].clone()))?;
        let mut num = T::zero();
        for k in 1..=self.nt {
            let y = &traj.velocity[k];
            let y_l2 = y.dot(y);
            let grad = y.gradient_norm_sq(self.hx, self.hy);
            let lap = y.laplacian(self.hx, self.hy);
            let yt = y.sub(&traj.velocity[k - 1]).scaled(T::one() / dt);
            num += (y_l2 + grad + lap.dot(&lap) + y_l2 + yt.dot(&yt)) * dt;
        }
        Ok(num / f_norm)
    }
}

/// Discrete H1 norm `(|y|^2 + |grad y|^2)^(1/2)`.
pub fn h1_norm<T: Real>(y: &VelocityField<T>, hx: T, hy: T) -> T {
    (y.dot(y) + y.gradient_norm_sq(hx, hy)).sqrt()
}

/// Discrete H2 norm `(|y|^2 + |grad y|^2 + |Lap y|^2)^(1/2)`.
pub fn h2_norm<T: Real>(y: &VelocityField<T>, hx: T, hy: T) -> T {
    let lap = y.laplacian(hx, hy);
    (y.dot(y) + y.gradient_norm_sq(hx, hy) + lap.dot(&lap)).sqrt()
}
