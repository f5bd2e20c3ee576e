//! Carleman weight families sampled in log-space.
//!
//! `eta(x, y) = sin(pi x) sin(pi y)` is the auxiliary spatial function, `ell` the
//! time profile that vanishes linearly at both ends of `[0, T]` and `ell_tilde`
//! its variant frozen at `max ell` on `[0, T/2]`. From those,
//!
//! ```text
//! alpha = (exp(2 lambda |eta|_inf) - exp(lambda eta)) / ell^8      xi = exp(lambda eta) / ell^8
//! beta, gamma: same with ell_tilde
//! ```
//!
//! and their spatial extrema (`*` = max of alpha / min of xi, `^` = min of alpha /
//! max of xi). Every exponent `s * alpha` is clamped at `exp_clamp`; a weight of
//! the form `exp(-c s alpha)` whose exponent was clamped is flushed to exactly 0.

use crate::error::{Error, Result};
use crate::grid::Grid;
use crate::scalar::Real;

/// Auxiliary function sampled at cell corners.
#[derive(Debug, Clone)]
pub struct EtaField<T> {
    pub nx: usize,
    pub ny: usize,
    /// Node values, row-major `(nx + 1) x (ny + 1)`.
    pub values: Vec<T>,
    /// Analytic `|grad eta|` at the nodes.
    pub grad_norm: Vec<T>,
    pub sup_norm: T,
}

/// Builds `eta = sin(pi x) sin(pi y)`. Its only interior critical point is
/// `(1/2, 1/2)`, which therefore has to lie in omega0.
pub fn build_eta<T: Real>(grid: &Grid<T>) -> Result<EtaField<T>> {
    let half = T::lit(0.5);
    if !grid.omega0.contains(half, half) {
        return Err(Error::EtaRejected("omega0 must contain (0.5, 0.5), the critical point of sin(pi x) sin(pi y)".into()));
    }
    let pi = T::PI();
    let n = grid.n_nodes();
    let mut values = Vec::with_capacity(n);
    let mut grad_norm = Vec::with_capacity(n);
    for j in 0..=grid.ny {
        for i in 0..=grid.nx {
            let (x, y) = grid.node_pos(i, j);
            let (sx, cx) = (pi * x).sin_cos();
            let (sy, cy) = (pi * y).sin_cos();
            // sin(pi) is not exactly zero in floating point
            values.push(if grid.is_boundary_node(i, j) { T::zero() } else { sx * sy });
            grad_norm.push(pi * (cx * sy).hypot(sx * cy));
        }
    }
    let sup_norm = values.iter().fold(T::zero(), |m, &v| m.max(v.abs()));
    Ok(EtaField { nx: grid.nx, ny: grid.ny, values, grad_norm, sup_norm })
}

impl<T: Real> EtaField<T> {
    fn at(&self, i: usize, j: usize) -> T {
        self.values[j * (self.nx + 1) + i]
    }

    pub fn min_value(&self) -> T {
        self.values.iter().copied().fold(T::infinity(), T::min)
    }

    pub fn max_value(&self) -> T {
        self.values.iter().copied().fold(T::neg_infinity(), T::max)
    }

    /// `|grad eta|` from finite differences (central inside, second-order one-sided on
    /// the boundary) at node `(i, j)`.
    pub fn fd_gradient_norm(&self, i: usize, j: usize, hx: T, hy: T) -> T {
        let d = |f0: T, f1: T, f2: T, h: T| (T::lit(-3.0) * f0 + T::lit(4.0) * f1 - f2) / (T::lit(2.0) * h);
        let gx = if i == 0 {
            d(self.at(0, j), self.at(1, j), self.at(2, j), hx)
        } else if i == self.nx {
            -d(self.at(i, j), self.at(i - 1, j), self.at(i - 2, j), hx)
        } else {
            (self.at(i + 1, j) - self.at(i - 1, j)) / (T::lit(2.0) * hx)
        };
        let gy = if j == 0 {
            d(self.at(i, 0), self.at(i, 1), self.at(i, 2), hy)
        } else if j == self.ny {
            -d(self.at(i, j), self.at(i, j - 1), self.at(i, j - 2), hy)
        } else {
            (self.at(i, j + 1) - self.at(i, j - 1)) / (T::lit(2.0) * hy)
        };
        gx.hypot(gy)
    }

    /// Smallest finite-difference `|grad eta|` over nodes outside the omega0 mask.
    /// The four corners of the square are skipped: every smooth function vanishing
    /// on both adjacent sides has a critical point there.
    pub fn min_gradient_outside_omega0(&self, grid: &Grid<T>) -> T {
        let mut min = T::infinity();
        for j in 0..=self.ny {
            for i in 0..=self.nx {
                let corner = (i == 0 || i == self.nx) && (j == 0 || j == self.ny);
                if corner || grid.omega0_nodes[j * (self.nx + 1) + i] {
                    continue;
                }
                min = min.min(self.fd_gradient_norm(i, j, grid.hx, grid.hy));
            }
        }
        min
    }
}

/// Sampled time profiles `ell` and `ell_tilde`.
#[derive(Debug, Clone)]
pub struct TimeProfile<T> {
    pub t_final: T,
    pub nt: usize,
    pub ell: Vec<T>,
    pub ell_tilde: Vec<T>,
    /// Weights use `max(ell, floor_delta * T)`.
    pub floor_delta: T,
    /// `max ell = ell(T/2) = 13 T / 32`.
    pub sup: T,
}

/// `ell(t)`: linear ramps on `[0, T/4]` and `[3T/4, T]`, joined by the even quartic
/// (a degenerate quintic) that matches value, slope and curvature at both ends.
pub fn ell<T: Real>(t: T, t_final: T) -> T {
    let a = t_final / T::lit(4.0);
    if t <= a {
        t
    } else if t >= t_final - a {
        t_final - t
    } else {
        let u = t - t_final / T::lit(2.0);
        let u2 = u * u;
        T::lit(13.0) * a / T::lit(8.0) - T::lit(0.75) * u2 / a + u2 * u2 / (T::lit(8.0) * a * a * a)
    }
}

pub fn build_time_profile<T: Real>(t_final: T, nt: usize, floor_delta: T) -> Result<TimeProfile<T>> {
    if !(t_final > T::zero()) {
        return Err(Error::InvalidParameter { name: "t_final", reason: format!("must be positive, got {t_final}") });
    }
    if nt < 4 {
        return Err(Error::InvalidParameter { name: "nt", reason: format!("must be >= 4, got {nt}") });
    }
    if !(floor_delta > T::zero() && floor_delta < T::lit(0.25)) {
        return Err(Error::InvalidParameter { name: "floor_delta", reason: format!("must lie in (0, 1/4), got {floor_delta}") });
    }
    let dt = t_final / T::from_count(nt);
    let sup = T::lit(13.0) * t_final / T::lit(32.0);
    let half = t_final / T::lit(2.0);
    let ell_samples: Vec<T> = (0..=nt).map(|k| ell(T::from_count(k) * dt, t_final)).collect();
    let ell_tilde = (0..=nt)
        .map(|k| {
            let t = T::from_count(k) * dt;
            if t <= half {
                sup
            } else {
                ell_samples[k]
            }
        })
        .collect();
    Ok(TimeProfile { t_final, nt, ell: ell_samples, ell_tilde, floor_delta, sup })
}

impl<T: Real> TimeProfile<T> {
    pub fn floor(&self) -> T {
        self.floor_delta * self.t_final
    }

    pub fn ell_floored(&self, k: usize) -> T {
        self.ell[k].max(self.floor())
    }

    pub fn ell_tilde_floored(&self, k: usize) -> T {
        self.ell_tilde[k].max(self.floor())
    }
}

/// Carleman parameters `(s, lambda)` and the exponent clamp.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WeightParams<T> {
    pub s: T,
    pub lambda: T,
    pub exp_clamp: T,
}

impl<T: Real> WeightParams<T> {
    pub fn new(s: T, lambda: T) -> Self {
        WeightParams { s, lambda, exp_clamp: T::lit(DEFAULT_EXP_CLAMP) }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > T::zero() && self.s.is_finite()) {
            return Err(Error::InvalidParameter { name: "s", reason: format!("must be positive, got {}", self.s) });
        }
        if !(self.lambda >= T::one() && self.lambda.is_finite()) {
            return Err(Error::InvalidParameter { name: "lambda", reason: format!("must be >= 1, got {}", self.lambda) });
        }
        if !(self.exp_clamp > T::zero()) {
            return Err(Error::InvalidParameter { name: "exp_clamp", reason: format!("must be positive, got {}", self.exp_clamp) });
        }
        Ok(())
    }
}

pub const DEFAULT_EXP_CLAMP: f64 = 60.0;
pub const DEFAULT_FLOOR_DELTA: f64 = 1e-2;
pub const DEFAULT_LAMBDA: f64 = 1.0;

/// `log(exp(2 lambda M) - exp(lambda eta))` without forming either exponential.
fn log_alpha_numerator<T: Real>(lambda: T, sup: T, eta: T) -> T {
    let top = T::lit(2.0) * lambda * sup;
    top + (-(lambda * eta - top).exp()).ln_1p()
}

/// `s` such that `s * min_t alpha*(t) = target`, i.e. the weight exponent at mid-time
/// equals `target`.
pub fn auto_s<T: Real>(eta: &EtaField<T>, profile: &TimeProfile<T>, lambda: T, target: T) -> T {
    let num = log_alpha_numerator(lambda, eta.sup_norm, eta.min_value());
    let ell_max = (0..=profile.nt).map(|k| profile.ell_floored(k)).fold(T::zero(), T::max);
    let log_alpha_star_min = num - T::lit(8.0) * ell_max.ln();
    target / log_alpha_star_min.exp()
}

/// Which time profile a weight is built on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Family {
    /// `alpha, xi` built on `ell`; vanish at both ends of `[0, T]`.
    Alpha,
    /// `beta, gamma` built on `ell_tilde`; nondegenerate at `t = 0`.
    Beta,
}

/// Exponents and log-powers of a time-only weight
/// `s^s_pow * exp(-c_hat s alpha_hat - c_star s alpha_star) * xi_star^p_star * xi_hat^p_hat`.
#[derive(Debug, Clone, Copy, Default)]
pub struct Combo {
    pub c_hat: f64,
    pub c_star: f64,
    pub p_star: f64,
    pub p_hat: f64,
    pub s_pow: i32,
}

impl Combo {
    /// `s^4 exp(-5 s alpha*) (xi*)^4`: global term of the Carleman inequality.
    pub const GLOBAL_27: Combo = Combo { c_hat: 0.0, c_star: 5.0, p_star: 4.0, p_hat: 0.0, s_pow: 4 };
    /// `exp(-5 s beta*) (gamma*)^4`.
    pub const GLOBAL_33: Combo = Combo { c_hat: 0.0, c_star: 5.0, p_star: 4.0, p_hat: 0.0, s_pow: 0 };
    /// `exp(-3 s alpha*)`: source weight.
    pub const SOURCE: Combo = Combo { c_hat: 0.0, c_star: 3.0, p_star: 0.0, p_hat: 0.0, s_pow: 0 };
    /// `s^7 exp(-2 s alpha^ - 3 s alpha*) xi^7`.
    pub const OBSERVE_27: Combo = Combo { c_hat: 2.0, c_star: 3.0, p_star: 0.0, p_hat: 7.0, s_pow: 7 };
    /// `exp(-2 s beta^ - 3 s beta*) gamma^7`: control weight.
    pub const CONTROL: Combo = Combo { c_hat: 2.0, c_star: 3.0, p_star: 0.0, p_hat: 7.0, s_pow: 0 };
    /// `exp(3/2 s beta*)`.
    pub const STATE: Combo = Combo { c_hat: 0.0, c_star: -1.5, p_star: 0.0, p_hat: 0.0, s_pow: 0 };
    /// `exp(s beta^ + 3/2 s beta*) gamma^(-7/2)`.
    pub const CONTROL_NORM: Combo = Combo { c_hat: -1.0, c_star: -1.5, p_star: 0.0, p_hat: -3.5, s_pow: 0 };
    /// `exp(3/2 s beta*) (gamma*)^(-9/8)`.
    pub const STATE_REGULAR: Combo = Combo { c_hat: 0.0, c_star: -1.5, p_star: -1.125, p_hat: 0.0, s_pow: 0 };
    /// `exp(5/2 s beta*) (gamma*)^(-2)`.
    pub const SOURCE_NORM: Combo = Combo { c_hat: 0.0, c_star: -2.5, p_star: -2.0, p_hat: 0.0, s_pow: 0 };
}

/// Log-space samples of every weight family at one `(s, lambda)`.
#[derive(Debug, Clone)]
pub struct WeightSet<T> {
    pub params: WeightParams<T>,
    pub nt: usize,
    pub n_nodes: usize,
    /// Space-time samples, index `k * n_nodes + node`.
    pub log_alpha: Vec<T>,
    pub log_xi: Vec<T>,
    pub log_beta: Vec<T>,
    pub log_gamma: Vec<T>,
    pub log_alpha_star: Vec<T>,
    pub log_xi_star: Vec<T>,
    pub log_alpha_hat: Vec<T>,
    pub log_xi_hat: Vec<T>,
    pub log_beta_star: Vec<T>,
    pub log_gamma_star: Vec<T>,
    pub log_beta_hat: Vec<T>,
    pub log_gamma_hat: Vec<T>,
    /// `exp(-2 s beta^ - 3 s beta*) gamma^7` with flushing applied.
    pub control_weight: Vec<T>,
    /// `log rho_v^2 = -2 s beta^ - 3 s beta* + 7 log gamma^` on clamped exponents.
    pub log_rho_v2: Vec<T>,
    /// `log rho_y = 3/2 s beta*` (clamped).
    pub log_rho_y: Vec<T>,
    /// `log rho_f = 5/2 s beta* - 2 log gamma*` (clamped).
    pub log_rho_f: Vec<T>,
    /// Fraction of space-time `exp(-s alpha)` samples that flush to zero.
    pub flush_fraction: f64,
    /// Set when more than half of the `exp(-s alpha)` samples flush.
    pub flush_flag: bool,
}

pub fn eval_weights<T: Real>(eta: &EtaField<T>, profile: &TimeProfile<T>, params: WeightParams<T>) -> Result<WeightSet<T>> {
    params.validate()?;
    let nt = profile.nt;
    let n_nodes = eta.values.len();
    let lambda = params.lambda;
    let eight = T::lit(8.0);
    let num: Vec<T> = eta.values.iter().map(|&e| log_alpha_numerator(lambda, eta.sup_norm, e)).collect();
    let (eta_min, eta_max) = (eta.min_value(), eta.max_value());
    let num_max = log_alpha_numerator(lambda, eta.sup_norm, eta_min);
    let num_min = log_alpha_numerator(lambda, eta.sup_norm, eta_max);

    let mut ws = WeightSet {
        params,
        nt,
        n_nodes,
        log_alpha: Vec::with_capacity((nt + 1) * n_nodes),
        log_xi: Vec::with_capacity((nt + 1) * n_nodes),
        log_beta: Vec::with_capacity((nt + 1) * n_nodes),
        log_gamma: Vec::with_capacity((nt + 1) * n_nodes),
        log_alpha_star: Vec::with_capacity(nt + 1),
        log_xi_star: Vec::with_capacity(nt + 1),
        log_alpha_hat: Vec::with_capacity(nt + 1),
        log_xi_hat: Vec::with_capacity(nt + 1),
        log_beta_star: Vec::with_capacity(nt + 1),
        log_gamma_star: Vec::with_capacity(nt + 1),
        log_beta_hat: Vec::with_capacity(nt + 1),
        log_gamma_hat: Vec::with_capacity(nt + 1),
        control_weight: Vec::new(),
        log_rho_v2: Vec::new(),
        log_rho_y: Vec::new(),
        log_rho_f: Vec::new(),
        flush_fraction: 0.0,
        flush_flag: false,
    };
    let mut flushed = 0usize;
    for k in 0..=nt {
        let log_ell = profile.ell_floored(k).ln();
        let log_ell_tilde = profile.ell_tilde_floored(k).ln();
        for (n, &e) in eta.values.iter().enumerate() {
            let la = num[n] - eight * log_ell;
            ws.log_alpha.push(la);
            ws.log_xi.push(lambda * e - eight * log_ell);
            ws.log_beta.push(num[n] - eight * log_ell_tilde);
            ws.log_gamma.push(lambda * e - eight * log_ell_tilde);
            if params.s * la.exp() > params.exp_clamp {
                flushed += 1;
            }
        }
        ws.log_alpha_star.push(num_max - eight * log_ell);
        ws.log_alpha_hat.push(num_min - eight * log_ell);
        ws.log_xi_star.push(lambda * eta_min - eight * log_ell);
        ws.log_xi_hat.push(lambda * eta_max - eight * log_ell);
        ws.log_beta_star.push(num_max - eight * log_ell_tilde);
        ws.log_beta_hat.push(num_min - eight * log_ell_tilde);
        ws.log_gamma_star.push(lambda * eta_min - eight * log_ell_tilde);
        ws.log_gamma_hat.push(lambda * eta_max - eight * log_ell_tilde);
    }
    for k in 0..=nt {
        let (b_hat, _) = ws.exponent(ws.log_beta_hat[k]);
        let (b_star, _) = ws.exponent(ws.log_beta_star[k]);
        ws.log_rho_v2.push(-T::lit(2.0) * b_hat - T::lit(3.0) * b_star + T::lit(7.0) * ws.log_gamma_hat[k]);
        ws.log_rho_y.push(T::lit(1.5) * b_star);
        ws.log_rho_f.push(T::lit(2.5) * b_star - T::lit(2.0) * ws.log_gamma_star[k]);
        ws.control_weight.push(ws.weight(Family::Beta, k, Combo::CONTROL));
    }
    ws.flush_fraction = flushed as f64 / ((nt + 1) * n_nodes) as f64;
    ws.flush_flag = ws.flush_fraction > 0.5;
    Ok(ws)
}

impl<T: Real> WeightSet<T> {
    /// `s * exp(log_a)` clamped at `exp_clamp`, and whether the clamp engaged.
    pub fn exponent(&self, log_a: T) -> (T, bool) {
        let e = self.params.s * log_a.exp();
        if e > self.params.exp_clamp {
            (self.params.exp_clamp, true)
        } else {
            (e, false)
        }
    }

    /// Log of a time-only weight, or `None` when it flushes to zero.
    pub fn log_weight(&self, family: Family, k: usize, combo: Combo) -> Option<T> {
        let (la_star, la_hat, lx_star, lx_hat) = match family {
            Family::Alpha => (self.log_alpha_star[k], self.log_alpha_hat[k], self.log_xi_star[k], self.log_xi_hat[k]),
            Family::Beta => (self.log_beta_star[k], self.log_beta_hat[k], self.log_gamma_star[k], self.log_gamma_hat[k]),
        };
        let (e_star, f_star) = self.exponent(la_star);
        let (e_hat, f_hat) = self.exponent(la_hat);
        if (combo.c_star > 0.0 && f_star) || (combo.c_hat > 0.0 && f_hat) {
            return None;
        }
        let mut log =
            -T::lit(combo.c_hat) * e_hat - T::lit(combo.c_star) * e_star + T::lit(combo.p_star) * lx_star + T::lit(combo.p_hat) * lx_hat;
        if combo.s_pow != 0 {
            log += T::from_i32(combo.s_pow).unwrap() * self.params.s.ln();
        }
        Some(log)
    }

    /// Value of a time-only weight (exact zero when flushed).
    pub fn weight(&self, family: Family, k: usize, combo: Combo) -> T {
        self.log_weight(family, k, combo).map_or(T::zero(), T::exp)
    }

    /// `exp(-s alpha(x, t))` at a node, flushed when clamped.
    pub fn exp_neg_s_alpha(&self, k: usize, node: usize) -> T {
        let (e, f) = self.exponent(self.log_alpha[k * self.n_nodes + node]);
        if f {
            T::zero()
        } else {
            (-e).exp()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{build_grid, GridConfig, Region};

    fn setup(n: usize, nt: usize) -> (Grid<f64>, EtaField<f64>, TimeProfile<f64>) {
        let g = build_grid(&GridConfig::reference(n, nt)).unwrap();
        let eta = build_eta(&g).unwrap();
        let p = build_time_profile(1.0, nt, DEFAULT_FLOOR_DELTA).unwrap();
        (g, eta, p)
    }

    #[test]
    fn eta_vanishes_on_boundary_and_positive_inside() {
        let (g, eta, _) = setup(16, 8);
        for j in 0..=g.ny {
            for i in 0..=g.nx {
                let v = eta.values[j * (g.nx + 1) + i];
                if g.is_boundary_node(i, j) {
                    assert_eq!(v, 0.0);
                } else {
                    assert!(v > 0.0);
                }
            }
        }
        assert!((eta.sup_norm - 1.0).abs() < 1e-15);
    }

    #[test]
    fn eta_gradient_outside_omega0_matches_closed_form() {
        let mut cfg = GridConfig::<f64>::reference(16, 8);
        cfg.omega0 = Region::disc(0.5, 0.5, 0.15);
        let g = build_grid(&cfg).unwrap();
        let eta = build_eta(&g).unwrap();
        let pi = std::f64::consts::PI;
        // closed-form oracle over the same node set
        let mut oracle = f64::INFINITY;
        let mut fd_vs_exact = 0.0f64;
        for j in 0..=16 {
            for i in 0..=16 {
                let corner = (i == 0 || i == 16) && (j == 0 || j == 16);
                if corner || g.omega0_nodes[j * 17 + i] {
                    continue;
                }
                let (x, y) = (i as f64 / 16.0, j as f64 / 16.0);
                let exact = pi * ((pi * x).cos() * (pi * y).sin()).hypot((pi * x).sin() * (pi * y).cos());
                oracle = oracle.min(exact);
                fd_vs_exact = fd_vs_exact.max((eta.fd_gradient_norm(i, j, g.hx, g.hy) - exact).abs());
            }
        }
        let min_fd = eta.min_gradient_outside_omega0(&g);
        assert!(min_fd > 0.0);
        assert!(oracle > 0.0);
        // second-order differences on h = 1/16
        assert!((min_fd - oracle).abs() < 0.1 * oracle, "{min_fd} vs {oracle}");
        assert!(fd_vs_exact < 0.1);
    }

    #[test]
    fn eta_rejects_omega0_without_center() {
        let mut cfg = GridConfig::<f64>::reference(16, 8);
        cfg.omega0 = Region::disc(0.4, 0.4, 0.05);
        let g = build_grid(&cfg).unwrap();
        assert!(matches!(build_eta(&g), Err(Error::EtaRejected(_))));
    }

    #[test]
    fn profile_linear_segments_and_tilde() {
        let p = build_time_profile(1.0f64, 64, 1e-2).unwrap();
        assert!((p.ell[8] - 0.125).abs() < 1e-15);
        assert!((p.ell[56] - 0.125).abs() < 1e-15);
        for k in 0..=32 {
            assert_eq!(p.ell_tilde[k], p.sup);
        }
        for k in 33..=64 {
            assert_eq!(p.ell_tilde[k], p.ell[k]);
        }
        for k in 1..64 {
            assert!(p.ell[k] > 0.0 && p.ell_tilde[k] > 0.0);
            assert!(p.ell[k] <= p.ell[32]);
        }
    }

    #[test]
    fn profile_max_at_midpoint_and_monotone() {
        let p = build_time_profile(1.0, 64, 1e-2).unwrap();
        let (kmax, _) = p.ell.iter().enumerate().fold((0, f64::MIN), |b, (k, &v)| if v > b.1 { (k, v) } else { b });
        assert_eq!(kmax, 32);
        assert!((p.ell[32] - 13.0 / 32.0).abs() < 1e-15);
        for k in 0..32 {
            assert!(p.ell[k + 1] >= p.ell[k]);
        }
    }

    #[test]
    fn profile_is_c2_at_joins() {
        let t = 1.0;
        let h = 1e-4;
        for &a in &[0.25, 0.75] {
            let left = |x: f64| ell(x, t);
            let d1l = (left(a) - left(a - h)) / h;
            let d1r = (left(a + h) - left(a)) / h;
            assert!((d1l - d1r).abs() < 1e-3);
            let d2 = (left(a + h) - 2.0 * left(a) + left(a - h)) / (h * h);
            assert!(d2.abs() < 1e-2, "{d2}");
        }
    }

    #[test]
    fn boundary_node_log_xi() {
        let (_, eta, p) = setup(8, 64);
        let ws = eval_weights(&eta, &p, WeightParams::new(1e-3, 1.0)).unwrap();
        let node = 0;
        let v = ws.log_xi[8 * ws.n_nodes + node];
        assert!((v - 8.0 * 8f64.ln()).abs() < 1e-12);
        assert!((v - 16.635532333438686).abs() < 1e-12);
    }

    #[test]
    fn center_node_alpha_matches_direct_evaluation() {
        let (g, eta, p) = setup(8, 64);
        let ws = eval_weights(&eta, &p, WeightParams::new(1e-3, 1.0)).unwrap();
        let center = 4 * (g.nx + 1) + 4;
        let e = std::f64::consts::E;
        let oracle = (e * e - e) * 8f64.powi(8);
        let got = ws.log_alpha[8 * ws.n_nodes + center].exp();
        assert!((got - oracle).abs() / oracle < 1e-12, "{got} vs {oracle}");
        assert!((oracle - 7.836e7).abs() / 7.836e7 < 1e-3);
    }

    #[test]
    fn extrema_bracket_every_sample() {
        let (_, eta, p) = setup(12, 16);
        let ws = eval_weights(&eta, &p, WeightParams::new(1e-3, 2.0)).unwrap();
        for k in 0..=16 {
            for n in 0..ws.n_nodes {
                let i = k * ws.n_nodes + n;
                assert!(ws.log_alpha_hat[k] <= ws.log_alpha[i] && ws.log_alpha[i] <= ws.log_alpha_star[k]);
                assert!(ws.log_xi_star[k] <= ws.log_xi[i] && ws.log_xi[i] <= ws.log_xi_hat[k]);
                assert!(ws.log_beta_hat[k] <= ws.log_beta[i] && ws.log_beta[i] <= ws.log_beta_star[k]);
            }
            // xi* = ell^-8 since eta = 0 on the boundary
            assert!((ws.log_xi_star[k] + 8.0 * p.ell_floored(k).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn beta_equals_alpha_after_midpoint() {
        let (_, eta, p) = setup(8, 16);
        let ws = eval_weights(&eta, &p, WeightParams::new(1e-3, 1.0)).unwrap();
        for k in 9..=16 {
            for n in 0..ws.n_nodes {
                let i = k * ws.n_nodes + n;
                assert_eq!(ws.log_beta[i], ws.log_alpha[i]);
                assert_eq!(ws.log_gamma[i], ws.log_xi[i]);
            }
        }
    }

    #[test]
    fn beta_weights_nondegenerate_at_zero() {
        let (_, eta, p) = setup(8, 16);
        let s = auto_s(&eta, &p, 1.0, 5.0);
        let ws = eval_weights(&eta, &p, WeightParams::new(s, 1.0)).unwrap();
        assert!(ws.weight(Family::Beta, 0, Combo::SOURCE) > 0.0);
        assert!(ws.log_gamma_star[0].is_finite());
        assert!(ws.control_weight[0] > 0.0);
        // alpha family flushes at t = 0
        assert_eq!(ws.weight(Family::Alpha, 0, Combo::SOURCE), 0.0);
    }

    #[test]
    fn auto_s_hits_target_at_midtime() {
        let (_, eta, p) = setup(8, 16);
        let s = auto_s(&eta, &p, 1.0, 3.0);
        let ws = eval_weights(&eta, &p, WeightParams::new(s, 1.0)).unwrap();
        let (e, f) = ws.exponent(ws.log_alpha_star[8]);
        assert!(!f);
        assert!((e - 3.0).abs() < 1e-12);
    }

    #[test]
    fn flush_flag_for_oversized_s() {
        let (_, eta, p) = setup(8, 16);
        let ws = eval_weights(&eta, &p, WeightParams::new(1.0, 1.0)).unwrap();
        assert!(ws.flush_flag);
        let ws = eval_weights(&eta, &p, WeightParams::new(1e-12, 1.0)).unwrap();
        assert!(!ws.flush_flag);
    }

    #[test]
    fn unclamped_values_match_direct_evaluation_on_submesh() {
        let (g, eta, p) = setup(16, 16);
        let s = auto_s(&eta, &p, 1.5, 2.0);
        let ws = eval_weights(&eta, &p, WeightParams::new(s, 1.5)).unwrap();
        for &k in &[2usize, 6, 10, 14] {
            for &j in &[1usize, 5, 9, 13] {
                for &i in &[2usize, 6, 8, 12] {
                    let (x, y) = g.node_pos(i, j);
                    let e = (std::f64::consts::PI * x).sin() * (std::f64::consts::PI * y).sin();
                    let l = ell(k as f64 / 16.0, 1.0).max(1e-2);
                    let direct = ((3.0f64).exp() - (1.5 * e).exp()) / l.powi(8);
                    let n = j * 17 + i;
                    let (exp_s, clamped) = ws.exponent(ws.log_alpha[k * ws.n_nodes + n]);
                    if !clamped {
                        assert!((exp_s - s * direct).abs() <= 1e-12 * s * direct);
                    }
                }
            }
        }
    }

    #[test]
    fn rejects_invalid_params() {
        let (_, eta, p) = setup(8, 16);
        assert!(eval_weights(&eta, &p, WeightParams::new(-1.0, 1.0)).is_err());
        assert!(eval_weights(&eta, &p, WeightParams::new(1.0, 0.5)).is_err());
        let mut wp = WeightParams::new(1.0, 1.0);
        wp.exp_clamp = 0.0;
        assert!(eval_weights(&eta, &p, wp).is_err());
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(32))]

            #[test]
            fn exponent_monotone_in_s(s in 1e-8f64..1e-2, k in 0usize..=16, n in 0usize..81, factor in 1.01f64..3.0) {
                let (_, eta, p) = setup(8, 16);
                let w1 = eval_weights(&eta, &p, WeightParams::new(s, 1.0)).unwrap();
                let w2 = eval_weights(&eta, &p, WeightParams::new(s * factor, 1.0)).unwrap();
                let i = k * w1.n_nodes + n;
                let (e1, f1) = w1.exponent(w1.log_alpha[i]);
                let (e2, _) = w2.exponent(w2.log_alpha[i]);
                prop_assert!(e1.is_finite() && e2.is_finite());
                if f1 { prop_assert_eq!(e1, e2); } else { prop_assert!(e2 >= e1); }
                prop_assert!(w2.exp_neg_s_alpha(k, n) <= w1.exp_neg_s_alpha(k, n));
                // clamping only ever reduces magnitudes
                prop_assert!(e1 <= s * w1.log_alpha[i].exp());
            }

            #[test]
            fn hat_star_ordering(s in 1e-6f64..1e-3, k in 0usize..=16) {
                let (_, eta, p) = setup(8, 16);
                let ws = eval_weights(&eta, &p, WeightParams::new(s, 1.0)).unwrap();
                let (hat, _) = ws.exponent(ws.log_alpha_hat[k]);
                let (star, _) = ws.exponent(ws.log_alpha_star[k]);
                for n in 0..ws.n_nodes {
                    let (mid, _) = ws.exponent(ws.log_alpha[k * ws.n_nodes + n]);
                    prop_assert!((-2.0 * hat).exp() >= (-2.0 * mid).exp());
                    prop_assert!((-2.0 * mid).exp() >= (-2.0 * star).exp());
                }
            }
        }
    }
}
