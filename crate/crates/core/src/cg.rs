//! Conjugate gradient for SPD operators on an arbitrary inner-product space.

use crate::scalar::Real;

/// Minimal vector-space interface needed by [`conjugate_gradient`].
pub trait InnerProductSpace<T>: Clone {
    fn inner(&self, other: &Self) -> T;
    /// `self += c * x`
    fn axpy(&mut self, c: T, x: &Self);
    fn scale(&mut self, c: T);
}

impl<T: Real> InnerProductSpace<T> for Vec<T> {
    fn inner(&self, other: &Self) -> T {
        self.iter().zip(other).map(|(&a, &b)| a * b).sum()
    }

    fn axpy(&mut self, c: T, x: &Self) {
        self.iter_mut().zip(x).for_each(|(a, &b)| *a += c * b);
    }

    fn scale(&mut self, c: T) {
        self.iter_mut().for_each(|a| *a *= c);
    }
}

#[derive(Debug, Clone, Copy)]
pub struct CgOptions {
    pub max_iter: usize,
    /// Stop once `|r| <= rel_tol * |b|`.
    pub rel_tol: f64,
}

impl Default for CgOptions {
    fn default() -> Self {
        CgOptions { max_iter: 1000, rel_tol: 1e-10 }
    }
}

/// Iteration log of a CG run.
#[derive(Debug, Clone, Default)]
pub struct CgHistory<T> {
    /// `|r_k| / |b|`, starting with the initial residual.
    pub residuals: Vec<T>,
    /// Quadratic objective `1/2 <A x, x> - <b, x>` at every iterate.
    pub objective: Vec<T>,
    pub iterations: usize,
    pub converged: bool,
    /// Set when the search direction lost positive curvature or the residual stopped
    /// improving; the best iterate is returned.
    pub stagnated: bool,
}

/// Solves `A x = b` starting from `x0`. The objective is tracked through
/// `-1/2 <b + r, x>`, which needs no extra operator application.
pub fn conjugate_gradient<T: Real, V: InnerProductSpace<T>>(apply: impl Fn(&V) -> V, b: &V, x0: V, opts: CgOptions) -> (V, CgHistory<T>) {
    let mut hist = CgHistory::default();
    let b_norm = b.inner(b).sqrt();
    let mut x = x0;
    if b_norm == T::zero() {
        let ax = apply(&x);
        if ax.inner(&ax) == T::zero() {
            hist.residuals.push(T::zero());
            hist.objective.push(T::zero());
            hist.converged = true;
            return (x, hist);
        }
    }
    let denom = if b_norm > T::zero() { b_norm } else { T::one() };
    let mut r = b.clone();
    r.axpy(-T::one(), &apply(&x));
    let objective = |x: &V, r: &V| {
        let mut br = b.clone();
        br.axpy(T::one(), r);
        -T::lit(0.5) * br.inner(x)
    };
    let mut rr = r.inner(&r);
    hist.residuals.push(rr.sqrt() / denom);
    hist.objective.push(objective(&x, &r));
    let tol = T::lit(opts.rel_tol);
    let mut p = r.clone();
    let mut best = (rr, x.clone());
    let mut since_best = 0usize;
    while hist.iterations < opts.max_iter {
        if rr.sqrt() <= tol * denom {
            hist.converged = true;
            break;
        }
        let ap = apply(&p);
        let pap = p.inner(&ap);
        if !(pap > T::zero()) {
            hist.stagnated = true;
            break;
        }
        let alpha = rr / pap;
        x.axpy(alpha, &p);
        r.axpy(-alpha, &ap);
        let rr_new = r.inner(&r);
        hist.iterations += 1;
        hist.residuals.push(rr_new.sqrt() / denom);
        hist.objective.push(objective(&x, &r));
        if rr_new < best.0 {
            best = (rr_new, x.clone());
            since_best = 0;
        } else {
            since_best += 1;
            if since_best > 50 {
                hist.stagnated = true;
                break;
            }
        }
        let beta = rr_new / rr;
        p.scale(beta);
        p.axpy(T::one(), &r);
        rr = rr_new;
    }
    if rr.sqrt() <= tol * denom {
        hist.converged = true;
    }
    if !hist.converged && best.0 < rr {
        x = best.1;
    }
    (x, hist)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn solves_small_spd_system_with_decreasing_objective() {
        let a = [[4.0, 1.0, 0.0], [1.0, 3.0, 0.5], [0.0, 0.5, 2.0]];
        let apply = |x: &Vec<f64>| (0..3).map(|i| (0..3).map(|j| a[i][j] * x[j]).sum()).collect::<Vec<f64>>();
        let b = vec![1.0, 2.0, 3.0];
        let (x, h) = conjugate_gradient(apply, &b, vec![0.0; 3], CgOptions { max_iter: 10, rel_tol: 1e-14 });
        assert!(h.converged);
        let ax = apply(&x);
        for i in 0..3 {
            assert!((ax[i] - b[i]).abs() < 1e-12);
        }
        for w in h.objective.windows(2) {
            assert!(w[1] < w[0]);
        }
    }

    #[test]
    fn zero_rhs_returns_zero() {
        let (x, h) = conjugate_gradient(|x: &Vec<f64>| x.clone(), &vec![0.0; 4], vec![0.0; 4], CgOptions::default());
        assert!(h.converged);
        assert_eq!(x, vec![0.0; 4]);
    }
}
