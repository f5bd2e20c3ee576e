//! Seeded smooth random fields built from truncated sine spectra.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::field::VelocityField;
use crate::grid::Grid;
use crate::scalar::Real;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Coefficients `c[m][n] ~ U(-1, 1) / (m^2 + n^2)` for modes `1..=modes`.
fn spectrum(rng: &mut ChaCha8Rng, modes: usize) -> Vec<f64> {
    let mut c = Vec::with_capacity(modes * modes);
    for m in 1..=modes {
        for n in 1..=modes {
            c.push(rng.gen_range(-1.0..1.0) / (m * m + n * n) as f64);
        }
    }
    c
}

/// Tables `sin(m pi x_i)` for every mode and coordinate, so sampling stays separable.
fn sine_table(coords: &[f64], modes: usize) -> Vec<Vec<f64>> {
    (1..=modes).map(|m| coords.iter().map(|&x| (m as f64 * std::f64::consts::PI * x).sin()).collect()).collect()
}

fn eval_spectrum(c: &[f64], modes: usize, sx: &[Vec<f64>], sy: &[Vec<f64>], ix: usize, iy: usize) -> f64 {
    let mut acc = 0.0;
    for m in 0..modes {
        let a = sx[m][ix];
        for n in 0..modes {
            acc += c[m * modes + n] * a * sy[n][iy];
        }
    }
    acc
}

/// Samples `sum c_mn sin(m pi x) sin(n pi y)` per component on the faces.
fn face_field<T: Real>(grid: &Grid<T>, cu: &[f64], cv: &[f64], modes: usize) -> VelocityField<T> {
    let (nx, ny) = (grid.nx, grid.ny);
    let (hx, hy) = (grid.hx.as_f64(), grid.hy.as_f64());
    let xs_node: Vec<f64> = (0..=nx).map(|i| i as f64 * hx).collect();
    let xs_mid: Vec<f64> = (0..nx).map(|i| (i as f64 + 0.5) * hx).collect();
    let ys_node: Vec<f64> = (0..=ny).map(|j| j as f64 * hy).collect();
    let ys_mid: Vec<f64> = (0..ny).map(|j| (j as f64 + 0.5) * hy).collect();
    let (sxn, sxm) = (sine_table(&xs_node, modes), sine_table(&xs_mid, modes));
    let (syn, sym) = (sine_table(&ys_node, modes), sine_table(&ys_mid, modes));
    let mut out = VelocityField::zeros(nx, ny);
    for j in 0..ny {
        for i in 1..nx {
            out.u[j * (nx + 1) + i] = T::lit(eval_spectrum(cu, modes, &sxn, &sym, i, j));
        }
    }
    for j in 1..ny {
        for i in 0..nx {
            out.v[j * nx + i] = T::lit(eval_spectrum(cv, modes, &sxm, &syn, i, j));
        }
    }
    out
}

/// Smooth, not divergence-free field vanishing on the walls.
pub fn random_smooth_field<T: Real>(grid: &Grid<T>, seed: u64, modes: usize) -> VelocityField<T> {
    let mut r = rng(seed);
    let cu = spectrum(&mut r, modes);
    let cv = spectrum(&mut r, modes);
    face_field(grid, &cu, &cv, modes)
}

/// Divergence-free field `curl psi` with `psi = eta * sum c_mn sin(m pi x) sin(n pi y)`,
/// so that `psi` and `grad psi` vanish on the walls. Normalized to unit L2 norm.
pub fn random_stream_field<T: Real>(grid: &Grid<T>, seed: u64, modes: usize) -> VelocityField<T> {
    let mut r = rng(seed);
    let c = spectrum(&mut r, modes);
    let (nx, ny) = (grid.nx, grid.ny);
    let xs: Vec<f64> = (0..=nx).map(|i| i as f64 * grid.hx.as_f64()).collect();
    let ys: Vec<f64> = (0..=ny).map(|j| j as f64 * grid.hy.as_f64()).collect();
    let (sx, sy) = (sine_table(&xs, modes), sine_table(&ys, modes));
    let mut psi = vec![T::zero(); (nx + 1) * (ny + 1)];
    for j in 1..ny {
        for i in 1..nx {
            psi[j * (nx + 1) + i] = T::lit(sx[0][i] * sy[0][j] * eval_spectrum(&c, modes, &sx, &sy, i, j));
        }
    }
    let y = VelocityField::from_stream(nx, ny, grid.hx, grid.hy, &psi);
    let n = y.norm();
    if n > T::zero() {
        y.scaled(T::one() / n)
    } else {
        y
    }
}

/// Random smooth space-time source sampled at every time level `t_k`, `k = 0..=nt`:
/// each spatial coefficient is modulated by `a + b cos(pi t / T) + c sin(pi t / T)`.
pub fn random_space_time_source<T: Real>(grid: &Grid<T>, seed: u64, modes: usize) -> Vec<VelocityField<T>> {
    let mut r = rng(seed);
    let n_time = 3;
    let parts: Vec<VelocityField<T>> = (0..n_time)
        .map(|_| {
            let cu = spectrum(&mut r, modes);
            let cv = spectrum(&mut r, modes);
            face_field(grid, &cu, &cv, modes)
        })
        .collect();
    let tf = grid.t_final.as_f64();
    (0..=grid.nt)
        .map(|k| {
            let t = grid.time(k).as_f64();
            let w = [1.0, (std::f64::consts::PI * t / tf).cos(), (std::f64::consts::PI * t / tf).sin()];
            let mut out = VelocityField::zeros_like(grid);
            for (p, &c) in parts.iter().zip(&w) {
                out.axpy(T::lit(c), p);
            }
            out
        })
        .collect()
}
