//! Empirical audit of the two Carleman inequalities for the adjoint Stokes system.
//!
//! Both sides are computed by quadrature for seeded random data `(g, phiT)`. All
//! weights are time-only (starred/hatted extrema), so each inequality reduces to
//! weighted sums over per-step energies. With weights vanishing at both ends:
//!
//! ```text
//! s^4 ∬ e^{-5s a*} xi*^4 |phi|^2
//!     <= C ( ∬ e^{-3s a*} |g|^2 + s^7 sum_{j!=i} ∬_omega e^{-2s a^ - 3s a*} xi^^7 |phi_j|^2 )
//! ```
//!
//! and with the beta family, nondegenerate at `t = 0`:
//!
//! ```text
//! ∬ e^{-5s b*} g*^4 |phi|^2 + |phi(0)|^2
//!     <= C ( ∬ e^{-3s b*} |g|^2 + sum_{j!=i} ∬_omega e^{-2s b^ - 3s b*} g^^7 |phi_j|^2 )
//! ```

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::VelocityField;
use crate::grid::Grid;
use crate::random::{random_smooth_field, random_space_time_source};
use crate::scalar::Real;
use crate::stokes::StokesSolver;
use crate::weights::{Combo, Family, WeightSet};

/// Random adjoint data: `g` sampled at every `t_k` (`nt + 1` slices) and a discretely
/// divergence-free terminal datum.
#[derive(Debug, Clone, PartialEq)]
pub struct AdjointData<T> {
    pub seed: u64,
    pub g: Vec<VelocityField<T>>,
    pub phi_t: VelocityField<T>,
}

impl<T: Real> AdjointData<T> {
    pub fn scaled(&self, c: T) -> Self {
        AdjointData { seed: self.seed, g: self.g.iter().map(|f| f.scaled(c)).collect(), phi_t: self.phi_t.scaled(c) }
    }
}

fn audit_modes(nx: usize) -> usize {
    (nx / 4).clamp(1, 8)
}

pub fn sample_adjoint_data<T: Real>(seed: u64, grid: &Grid<T>, solver: &StokesSolver<T>) -> Result<AdjointData<T>> {
    let modes = audit_modes(grid.nx);
    let g = random_space_time_source(grid, seed.wrapping_mul(2), modes);
    let raw = random_smooth_field(grid, seed.wrapping_mul(2).wrapping_add(1), modes);
    let phi_t = solver.project_divergence_free(&raw)?;
    Ok(AdjointData { seed, g, phi_t })
}

/// Per-step spatial integrals of one adjoint solve:
/// `|phi(t_k)|^2`, `sum_{j!=i} ∫_omega |phi_j(t_k)|^2`, `|g(t_k)|^2`.
#[derive(Debug, Clone)]
pub struct AdjointSlices<T> {
    pub seed: u64,
    pub component: usize,
    pub energy: Vec<T>,
    pub observed: Vec<T>,
    pub source: Vec<T>,
    pub initial: T,
}

pub fn adjoint_slices<T: Real>(
    data: &AdjointData<T>,
    component: usize,
    grid: &Grid<T>,
    solver: &StokesSolver<T>,
) -> Result<AdjointSlices<T>> {
    if component != 1 && component != 2 {
        return Err(Error::InvalidParameter { name: "component", reason: format!("component index {component} out of range for N = 2") });
    }
    if data.g.len() != grid.nt + 1 {
        return Err(Error::MeshMismatch(format!("{} source samples for {} steps", data.g.len(), grid.nt)));
    }
    let adj = solver.solve_adjoint_opts(Some(&data.g[..grid.nt]), &data.phi_t, false)?;
    let area = grid.cell_area();
    let observed = adj
        .velocity
        .iter()
        .map(|phi| {
            let mut acc = T::zero();
            for c in [1usize, 2] {
                if c == component {
                    continue;
                }
                let mask = if c == 1 { &grid.omega_u } else { &grid.omega_v };
                acc += phi.component(c).iter().zip(mask).filter(|(_, &m)| m).map(|(&p, _)| p * p).sum::<T>();
            }
            acc * area
        })
        .collect();
    Ok(AdjointSlices {
        seed: data.seed,
        component,
        energy: adj.velocity.iter().map(|p| p.dot(p)).collect(),
        observed,
        source: data.g.iter().map(|f| f.dot(f)).collect(),
        initial: adj.initial().dot(adj.initial()),
    })
}

/// One audited sample at one weight setting.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CarlemanSample<T> {
    pub seed: u64,
    pub s: T,
    pub lambda: T,
    pub lhs27: T,
    pub rhs27: T,
    pub ratio27: T,
    pub lhs33: T,
    pub rhs33: T,
    pub ratio33: T,
}

/// Time quadrature weight: trapezoid with the vanishing endpoints dropped for the
/// alpha family, and only `t = T` dropped for the beta family.
fn time_weight<T: Real>(family: Family, k: usize, nt: usize, dt: T) -> T {
    match (family, k) {
        (_, k) if k == nt => T::zero(),
        (Family::Alpha, 0) => T::zero(),
        (Family::Beta, 0) => T::lit(0.5) * dt,
        _ => dt,
    }
}

fn ratio<T: Real>(lhs: T, rhs: T, seed: u64) -> Result<T> {
    if rhs == T::zero() {
        if lhs == T::zero() {
            return Ok(T::zero());
        }
        return Err(Error::DegenerateRhs { lhs: lhs.as_f64(), seed });
    }
    Ok(lhs / rhs)
}

fn sides<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>, dt: T, family: Family, global: Combo, observe: Combo) -> (T, T) {
    let nt = ws.nt;
    let (mut lhs, mut rhs) = (T::zero(), T::zero());
    for k in 0..=nt {
        let q = time_weight(family, k, nt, dt);
        if q == T::zero() {
            continue;
        }
        lhs += q * ws.weight(family, k, global) * sl.energy[k];
        rhs += q * (ws.weight(family, k, Combo::SOURCE) * sl.source[k] + ws.weight(family, k, observe) * sl.observed[k]);
    }
    (lhs, rhs)
}

fn check_slices<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>) -> Result<()> {
    if sl.energy.len() != ws.nt + 1 || sl.source.len() != ws.nt + 1 {
        return Err(Error::MeshMismatch("adjoint slices do not match the weight set".into()));
    }
    Ok(())
}

/// Both sides of the inequality with weights vanishing at `t = 0` and `t = T`.
pub fn carleman_ratio_27<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>, grid: &Grid<T>) -> Result<(T, T, T)> {
    check_slices(sl, ws)?;
    let (lhs, rhs) = sides(sl, ws, grid.dt, Family::Alpha, Combo::GLOBAL_27, Combo::OBSERVE_27);
    Ok((lhs, rhs, ratio(lhs, rhs, sl.seed)?))
}

/// Both sides of the inequality with the `|phi(0)|^2` term.
pub fn carleman_ratio_33<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>, grid: &Grid<T>) -> Result<(T, T, T)> {
    check_slices(sl, ws)?;
    let (lhs, rhs) = sides(sl, ws, grid.dt, Family::Beta, Combo::GLOBAL_33, Combo::CONTROL);
    let lhs = lhs + sl.initial;
    Ok((lhs, rhs, ratio(lhs, rhs, sl.seed)?))
}

pub fn audit_sample<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>, grid: &Grid<T>) -> Result<CarlemanSample<T>> {
    let (lhs27, rhs27, ratio27) = carleman_ratio_27(sl, ws, grid)?;
    let (lhs33, rhs33, ratio33) = carleman_ratio_33(sl, ws, grid)?;
    Ok(CarlemanSample { seed: sl.seed, s: ws.params.s, lambda: ws.params.lambda, lhs27, rhs27, ratio27, lhs33, rhs33, ratio33 })
}

/// Largest relative mismatch on `(T/2, T)` between alpha- and beta-family integrands
/// (global, source and observation terms, without the powers of `s`).
pub fn integrand_agreement<T: Real>(sl: &AdjointSlices<T>, ws: &WeightSet<T>, grid: &Grid<T>) -> T {
    let strip = |c: Combo| Combo { s_pow: 0, ..c };
    let pairs = [
        (strip(Combo::GLOBAL_27), Combo::GLOBAL_33, &sl.energy),
        (Combo::SOURCE, Combo::SOURCE, &sl.source),
        (strip(Combo::OBSERVE_27), Combo::CONTROL, &sl.observed),
    ];
    let half = grid.t_final * T::lit(0.5);
    let mut worst = T::zero();
    for k in 0..=ws.nt {
        let t = grid.time(k);
        if !(t > half && t < grid.t_final) {
            continue;
        }
        for (ca, cb, vals) in &pairs {
            let a = ws.weight(Family::Alpha, k, *ca) * vals[k];
            let b = ws.weight(Family::Beta, k, *cb) * vals[k];
            let scale = a.abs().max(b.abs());
            if scale > T::zero() {
                worst = worst.max((a - b).abs() / scale);
            }
        }
    }
    worst
}

/// Max and median ratios at one sweep point, plus outliers beyond 10x the median.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint<T> {
    pub s: T,
    pub max27: T,
    pub median27: T,
    pub max33: T,
    pub median33: T,
    pub flagged_seeds: Vec<u64>,
    pub flush_flag: bool,
    pub agreement: T,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport<T> {
    pub component: usize,
    pub s_values: Vec<T>,
    pub samples: Vec<CarlemanSample<T>>,
    pub points: Vec<SweepPoint<T>>,
}

fn median<T: Real>(mut v: Vec<T>) -> T {
    if v.is_empty() {
        return T::zero();
    }
    v.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        T::lit(0.5) * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Audits seeds `base_seed .. base_seed + n_samples` against every weight set.
/// One adjoint solve per sample serves all sweep points.
pub fn audit_sweep<T: Real>(
    weight_sets: &[WeightSet<T>],
    n_samples: usize,
    base_seed: u64,
    component: usize,
    grid: &Grid<T>,
    solver: &StokesSolver<T>,
) -> Result<AuditReport<T>> {
    if weight_sets.is_empty() {
        return Err(Error::InvalidParameter { name: "s_values", reason: "sweep needs at least one s value".into() });
    }
    let per_sample: Vec<(Vec<CarlemanSample<T>>, Vec<T>)> = (0..n_samples as u64)
        .into_par_iter()
        .map(|n| {
            let data = sample_adjoint_data(base_seed + n, grid, solver)?;
            let sl = adjoint_slices(&data, component, grid, solver)?;
            let mut rows = Vec::with_capacity(weight_sets.len());
            let mut agree = Vec::with_capacity(weight_sets.len());
            for ws in weight_sets {
                rows.push(audit_sample(&sl, ws, grid)?);
                agree.push(integrand_agreement(&sl, ws, grid));
            }
            Ok((rows, agree))
        })
        .collect::<Result<_>>()?;

    let mut samples = Vec::with_capacity(n_samples * weight_sets.len());
    let mut points = Vec::with_capacity(weight_sets.len());
    for (p, ws) in weight_sets.iter().enumerate() {
        let rows: Vec<CarlemanSample<T>> = per_sample.iter().map(|(r, _)| r[p]).collect();
        let r27: Vec<T> = rows.iter().map(|r| r.ratio27).collect();
        let r33: Vec<T> = rows.iter().map(|r| r.ratio33).collect();
        let (median27, median33) = (median(r27.clone()), median(r33.clone()));
        let ten = T::lit(10.0);
        let flagged_seeds = rows.iter().filter(|r| r.ratio27 > ten * median27 || r.ratio33 > ten * median33).map(|r| r.seed).collect();
        points.push(SweepPoint {
            s: ws.params.s,
            max27: r27.iter().copied().fold(T::zero(), T::max),
            median27,
            max33: r33.iter().copied().fold(T::zero(), T::max),
            median33,
            flagged_seeds,
            flush_flag: ws.flush_flag,
            agreement: per_sample.iter().map(|(_, a)| a[p]).fold(T::zero(), T::max),
        });
        samples.extend(rows);
    }
    Ok(AuditReport { component, s_values: weight_sets.iter().map(|w| w.params.s).collect(), samples, points })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig};
    use crate::weights::{auto_s, build_eta, build_time_profile, eval_weights, WeightParams};

    fn setup(n: usize, nt: usize) -> (Grid<f64>, StokesSolver<f64>, WeightSet<f64>) {
        let g = build_grid(&GridConfig::reference(n, nt)).unwrap();
        let solver = StokesSolver::new(&g).unwrap();
        let eta = build_eta(&g).unwrap();
        let prof = build_time_profile(1.0, nt, 1e-2).unwrap();
        let s = auto_s(&eta, &prof, 1.0, 2.0);
        let ws = eval_weights(&eta, &prof, WeightParams::new(s, 1.0)).unwrap();
        (g, solver, ws)
    }

    #[test]
    fn sampling_is_deterministic_and_solenoidal() {
        let (g, solver, _) = setup(12, 8);
        let a = sample_adjoint_data(3, &g, &solver).unwrap();
        assert_eq!(a, sample_adjoint_data(3, &g, &solver).unwrap());
        assert_ne!(a, sample_adjoint_data(4, &g, &solver).unwrap());
        assert!(a.phi_t.max_divergence(g.hx, g.hy) <= 1e-10);
        assert_eq!(a.g.len(), 9);
    }

    #[test]
    fn zero_data_gives_zero_ratio() {
        let (g, solver, ws) = setup(12, 8);
        let zero = AdjointData { seed: 0, g: vec![VelocityField::zeros_like(&g); 9], phi_t: VelocityField::zeros_like(&g) };
        let sl = adjoint_slices(&zero, 2, &g, &solver).unwrap();
        let s = audit_sample(&sl, &ws, &g).unwrap();
        assert_eq!((s.lhs27, s.rhs27, s.ratio27), (0.0, 0.0, 0.0));
        assert_eq!((s.lhs33, s.rhs33, s.ratio33), (0.0, 0.0, 0.0));
    }

    #[test]
    fn positive_rhs_required() {
        let (g, _, ws) = setup(12, 8);
        let sl = AdjointSlices { seed: 7, component: 2, energy: vec![1.0; 9], observed: vec![0.0; 9], source: vec![0.0; 9], initial: 1.0 };
        assert!(matches!(carleman_ratio_33(&sl, &ws, &g), Err(Error::DegenerateRhs { .. })));
    }

    #[test]
    fn scale_invariance_and_agreement() {
        let (g, solver, ws) = setup(12, 16);
        let d = sample_adjoint_data(11, &g, &solver).unwrap();
        let a = audit_sample(&adjoint_slices(&d, 2, &g, &solver).unwrap(), &ws, &g).unwrap();
        let sl = adjoint_slices(&d.scaled(10.0), 2, &g, &solver).unwrap();
        let b = audit_sample(&sl, &ws, &g).unwrap();
        assert!(a.lhs27 > 0.0 && a.rhs27 > 0.0 && a.lhs33 > 0.0 && a.rhs33 > 0.0);
        assert!((a.ratio27 - b.ratio27).abs() <= 1e-10 * a.ratio27);
        assert!((a.ratio33 - b.ratio33).abs() <= 1e-10 * a.ratio33);
        assert!(integrand_agreement(&sl, &ws, &g) <= 1e-12);
    }

    #[test]
    fn sweep_shape() {
        let (g, solver, ws) = setup(8, 8);
        let r = audit_sweep(std::slice::from_ref(&ws), 1, 0, 2, &g, &solver).unwrap();
        assert_eq!(r.points.len(), 1);
        assert_eq!(r.samples.len(), 1);
        assert!(r.points[0].flagged_seeds.is_empty());
        assert!(audit_sweep(&[], 1, 0, 2, &g, &solver).is_err());
    }

    #[test]
    fn median_helper() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }
}
