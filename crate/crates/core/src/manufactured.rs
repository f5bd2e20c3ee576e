//! Manufactured Stokes solution for solver verification.
//!
//! `psi = sin^2(pi x) sin^2(pi y) e^-t`, `y = curl psi`, `p = cos(pi x) cos(pi y) e^-t`,
//! and `f = y_t - Lap y + grad p`.

use std::f64::consts::PI;

use crate::error::Result;
use crate::field::VelocityField;
use crate::grid::{build_grid, GridConfig};
use crate::scalar::Real;
use crate::stokes::StokesSolver;

/// Spatial part of the exact velocity.
pub fn velocity(x: f64, y: f64) -> (f64, f64) {
    let sx = (PI * x).sin();
    let sy = (PI * y).sin();
    (PI * sx * sx * (2.0 * PI * y).sin(), -PI * (2.0 * PI * x).sin() * sy * sy)
}

/// Spatial part of `Lap y`.
pub fn velocity_laplacian(x: f64, y: f64) -> (f64, f64) {
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    let lu = PI * (2.0 * PI * PI * (2.0 * PI * x).cos() * (2.0 * PI * y).sin() - 4.0 * PI * PI * sx * sx * (2.0 * PI * y).sin());
    let lv = -PI * (-4.0 * PI * PI * (2.0 * PI * x).sin() * sy * sy + 2.0 * PI * PI * (2.0 * PI * x).sin() * (2.0 * PI * y).cos());
    (lu, lv)
}

/// Spatial part of `grad p`.
pub fn pressure_gradient(x: f64, y: f64) -> (f64, f64) {
    (-PI * (PI * x).sin() * (PI * y).cos(), -PI * (PI * x).cos() * (PI * y).sin())
}

pub fn stream(x: f64, y: f64) -> f64 {
    let (sx, sy) = ((PI * x).sin(), (PI * y).sin());
    sx * sx * sy * sy
}

/// Exact source `f(x, y, t)`.
pub fn source(x: f64, y: f64, t: f64) -> (f64, f64) {
    let e = (-t).exp();
    let (u, v) = velocity(x, y);
    let (lu, lv) = velocity_laplacian(x, y);
    let (px, py) = pressure_gradient(x, y);
    (e * (-u - lu + px), e * (-v - lv + py))
}

/// Spatial part of `(y . grad) y` (multiply by `e^-2t`).
pub fn convection(x: f64, y: f64) -> (f64, f64) {
    let (ax, ay) = ((PI * x).sin().powi(2), (PI * y).sin().powi(2));
    let (bx, by) = ((2.0 * PI * x).sin(), (2.0 * PI * y).sin());
    let (cx, cy) = ((2.0 * PI * x).cos(), (2.0 * PI * y).cos());
    let u = PI * ax * by;
    let v = -PI * bx * ay;
    let ux = PI * PI * bx * by;
    let uy = 2.0 * PI * PI * ax * cy;
    let vx = -2.0 * PI * PI * cx * ay;
    let vy = -PI * PI * bx * by;
    (u * ux + v * uy, u * vx + v * vy)
}

/// Exactly divergence-free discrete initial datum: discrete curl of the sampled stream function.
pub fn initial_velocity<T: Real>(nx: usize, ny: usize) -> VelocityField<T> {
    let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
    let psi: Vec<T> = (0..(nx + 1) * (ny + 1)).map(|n| T::lit(stream((n % (nx + 1)) as f64 * hx, (n / (nx + 1)) as f64 * hy))).collect();
    VelocityField::from_stream(nx, ny, T::lit(hx), T::lit(hy), &psi)
}

/// Least-squares slope of `log err` against `log h`.
pub fn fitted_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let (lx, ly): (Vec<f64>, Vec<f64>) = points.iter().map(|&(h, e)| (h.ln(), e.ln())).unzip();
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let num: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = lx.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

/// Result of a refinement study: `(h or dt, error)` pairs and the fitted order.
#[derive(Debug, Clone)]
pub struct ConvergenceStudy {
    pub points: Vec<(f64, f64)>,
    pub order: f64,
    /// Largest per-step divergence seen across all runs.
    pub max_divergence: f64,
}

/// Spatial refinement with the time-discrete forcing
/// `f_k = Y (e^-t_{k+1} - e^-t_k) / dt + e^-t_{k+1} (-Lap Y + grad P)`,
/// for which implicit Euler reproduces `e^-t_k` exactly, isolating the spatial error.
/// Errors are relative L2 errors at `T`.
pub fn spatial_study<T: Real>(sizes: &[usize], nt: usize, t_final: f64) -> Result<ConvergenceStudy> {
    let mut points = Vec::new();
    let mut max_div = 0.0f64;
    for &n in sizes {
        let mut cfg = GridConfig::<T>::reference(n, nt);
        cfg.t_final = T::lit(t_final);
        let grid = build_grid(&cfg)?;
        let mut solver = StokesSolver::new(&grid)?;
        solver.with_pressure = false;
        let dt = t_final / nt as f64;
        let f: Vec<VelocityField<T>> = (0..nt)
            .map(|k| {
                let (t0, t1) = (k as f64 * dt, (k + 1) as f64 * dt);
                let ramp = ((-t1).exp() - (-t0).exp()) / dt;
                VelocityField::sample(&grid, |x, y| {
                    let (x, y) = (x.as_f64(), y.as_f64());
                    let (u, v) = velocity(x, y);
                    let (lu, lv) = velocity_laplacian(x, y);
                    let (px, py) = pressure_gradient(x, y);
                    let e = (-t1).exp();
                    (T::lit(ramp * u + e * (px - lu)), T::lit(ramp * v + e * (py - lv)))
                })
            })
            .collect();
        let traj = solver.solve_forward(&initial_velocity(n, n), Some(&f), None)?;
        max_div = max_div.max(traj.max_divergence(grid.hx, grid.hy).as_f64());
        let exact = VelocityField::<T>::sample(&grid, |x, y| {
            let (u, v) = velocity(x.as_f64(), y.as_f64());
            let e = (-t_final).exp();
            (T::lit(u * e), T::lit(v * e))
        });
        let err = traj.terminal().sub(&exact).norm() / exact.norm();
        points.push((1.0 / n as f64, err.as_f64()));
    }
    let order = fitted_slope(&points);
    Ok(ConvergenceStudy { points, order, max_divergence: max_div })
}

/// Temporal refinement on a fixed `n x n` grid with the exact source sampled at
/// `t_{k+1}`. Errors are measured against a run with `reference_nt` steps on the
/// same grid, which removes the spatial error from the comparison.
pub fn temporal_study<T: Real>(n: usize, steps: &[usize], reference_nt: usize, t_final: f64) -> Result<ConvergenceStudy> {
    let run = |nt: usize| -> Result<(VelocityField<T>, f64)> {
        let mut cfg = GridConfig::<T>::reference(n, nt);
        cfg.t_final = T::lit(t_final);
        let grid = build_grid(&cfg)?;
        let mut solver = StokesSolver::new(&grid)?;
        solver.with_pressure = false;
        let dt = t_final / nt as f64;
        let f: Vec<VelocityField<T>> = (0..nt)
            .map(|k| {
                let t1 = (k + 1) as f64 * dt;
                VelocityField::sample(&grid, |x, y| {
                    let (a, b) = source(x.as_f64(), y.as_f64(), t1);
                    (T::lit(a), T::lit(b))
                })
            })
            .collect();
        let traj = solver.solve_forward(&initial_velocity(n, n), Some(&f), None)?;
        let div = traj.max_divergence(grid.hx, grid.hy).as_f64();
        Ok((traj.terminal().clone(), div))
    };
    let (reference, mut max_div) = run(reference_nt)?;
    let mut points = Vec::new();
    for &nt in steps {
        let (y, div) = run(nt)?;
        max_div = max_div.max(div);
        let err = y.sub(&reference).norm() / reference.norm();
        points.push((t_final / nt as f64, err.as_f64()));
    }
    let order = fitted_slope(&points);
    Ok(ConvergenceStudy { points, order, max_divergence: max_div })
}

#[cfg(test)]
mod tests {
    use super::*;

    // Central-difference oracle on the closed forms, independent of the hand-derived
    // derivatives above.
    fn fd_lap(f: impl Fn(f64, f64) -> (f64, f64), x: f64, y: f64) -> (f64, f64) {
        let h = 1e-4;
        let c = f(x, y);
        let (a, b, cc, d) = (f(x + h, y), f(x - h, y), f(x, y + h), f(x, y - h));
        ((a.0 + b.0 + cc.0 + d.0 - 4.0 * c.0) / (h * h), (a.1 + b.1 + cc.1 + d.1 - 4.0 * c.1) / (h * h))
    }

    #[test]
    fn closed_forms_match_finite_differences() {
        let h = 1e-6;
        for &(x, y) in &[(0.2, 0.7), (0.45, 0.33), (0.81, 0.12)] {
            let (lu, lv) = velocity_laplacian(x, y);
            let (fu, fv) = fd_lap(velocity, x, y);
            assert!((lu - fu).abs() < 1e-4 * lu.abs().max(1.0), "{lu} vs {fu}");
            assert!((lv - fv).abs() < 1e-4 * lv.abs().max(1.0));
            // velocity is the curl of the stream function
            let su = (stream(x, y + h) - stream(x, y - h)) / (2.0 * h);
            let sv = -(stream(x + h, y) - stream(x - h, y)) / (2.0 * h);
            let (u, v) = velocity(x, y);
            assert!((u - su).abs() < 1e-7 && (v - sv).abs() < 1e-7);
            // divergence-free
            let div = (velocity(x + h, y).0 - velocity(x - h, y).0 + velocity(x, y + h).1 - velocity(x, y - h).1) / (2.0 * h);
            assert!(div.abs() < 1e-6);
            let p = |x: f64, y: f64| (PI * x).cos() * (PI * y).cos();
            let (px, py) = pressure_gradient(x, y);
            assert!((px - (p(x + h, y) - p(x - h, y)) / (2.0 * h)).abs() < 1e-7);
            assert!((py - (p(x, y + h) - p(x, y - h)) / (2.0 * h)).abs() < 1e-7);
            let (cu, cv) = convection(x, y);
            let ux = (velocity(x + h, y).0 - velocity(x - h, y).0) / (2.0 * h);
            let uy = (velocity(x, y + h).0 - velocity(x, y - h).0) / (2.0 * h);
            let vx = (velocity(x + h, y).1 - velocity(x - h, y).1) / (2.0 * h);
            let vy = (velocity(x, y + h).1 - velocity(x, y - h).1) / (2.0 * h);
            assert!((cu - (u * ux + v * uy)).abs() < 1e-6 * cu.abs().max(1.0));
            assert!((cv - (u * vx + v * vy)).abs() < 1e-6 * cv.abs().max(1.0));
        }
    }

    #[test]
    fn slope_of_exact_power_law() {
        let pts: Vec<(f64, f64)> = [0.1, 0.05, 0.025].iter().map(|&h| (h, 3.0 * h * h)).collect();
        assert!((fitted_slope(&pts) - 2.0).abs() < 1e-12);
    }
}
