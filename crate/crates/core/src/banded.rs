//! Symmetric positive definite banded Cholesky factorization.

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Lower band of an SPD matrix: `band[i * (bw + 1) + d] = A[i][i - d]`.
#[derive(Debug, Clone)]
pub struct BandedSpd<T> {
    pub n: usize,
    pub bw: usize,
    band: Vec<T>,
}

impl<T: Real> BandedSpd<T> {
    pub fn zeros(n: usize, bw: usize) -> Self {
        BandedSpd { n, bw, band: vec![T::zero(); n * (bw + 1)] }
    }

    /// Stores `A[row][col]` for `row >= col`; entries outside the band are ignored.
    pub fn set(&mut self, row: usize, col: usize, value: T) {
        debug_assert!(row >= col);
        let d = row - col;
        if d <= self.bw {
            self.band[row * (self.bw + 1) + d] = value;
        }
    }

    pub fn get(&self, row: usize, col: usize) -> T {
        let (r, c) = if row >= col { (row, col) } else { (col, row) };
        let d = r - c;
        if d > self.bw {
            T::zero()
        } else {
            self.band[r * (self.bw + 1) + d]
        }
    }

    pub fn mul(&self, x: &[T]) -> Vec<T> {
        let mut y = vec![T::zero(); self.n];
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            for j in lo..=i {
                let a = self.band[i * (self.bw + 1) + (i - j)];
                y[i] += a * x[j];
                if j != i {
                    y[j] += a * x[i];
                }
            }
        }
        y
    }

    /// Assembles a symmetric operator on an `mx x my` grid of unknowns whose stencil
    /// reaches at most `reach` points in each direction, by probing with colored
    /// sums of unit vectors.
    pub fn probe_grid(mx: usize, my: usize, reach: usize, apply: impl Fn(&[T]) -> Vec<T>) -> Self {
        let n = mx * my;
        let bw = (reach * mx + reach).min(n.saturating_sub(1));
        let mut out = Self::zeros(n, bw);
        let period = 2 * reach + 1;
        for ci in 0..period.min(mx) {
            for cj in 0..period.min(my) {
                let mut probe = vec![T::zero(); n];
                for j in (cj..my).step_by(period) {
                    for i in (ci..mx).step_by(period) {
                        probe[j * mx + i] = T::one();
                    }
                }
                let y = apply(&probe);
                for j in (cj..my).step_by(period) {
                    for i in (ci..mx).step_by(period) {
                        let col = j * mx + i;
                        for rj in j..(j + reach + 1).min(my) {
                            let i_lo = if rj == j { i } else { i.saturating_sub(reach) };
                            for ri in i_lo..(i + reach + 1).min(mx) {
                                out.set(rj * mx + ri, col, y[rj * mx + ri]);
                            }
                        }
                    }
                }
            }
        }
        out
    }
}

/// Cholesky factor `L` of a banded SPD matrix, same storage as [`BandedSpd`].
#[derive(Debug, Clone)]
pub struct BandedCholesky<T> {
    n: usize,
    bw: usize,
    l: Vec<T>,
}

impl<T: Real> BandedCholesky<T> {
    pub fn factor(a: &BandedSpd<T>) -> Result<Self> {
        let (n, bw) = (a.n, a.bw);
        let w = bw + 1;
        let mut l = a.band.clone();
        for i in 0..n {
            let lo = i.saturating_sub(bw);
            for j in lo..=i {
                let mut sum = l[i * w + (i - j)];
                let k_lo = lo.max(j.saturating_sub(bw));
                for k in k_lo..j {
                    sum -= l[i * w + (i - k)] * l[j * w + (j - k)];
                }
                if j == i {
                    if !(sum > T::zero()) {
                        return Err(Error::NotPositiveDefinite { row: i });
                    }
                    l[i * w] = sum.sqrt();
                } else {
                    l[i * w + (i - j)] = sum / l[j * w];
                }
            }
        }
        Ok(BandedCholesky { n, bw, l })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Solves `A x = b` in place.
    pub fn solve_in_place(&self, x: &mut [T]) {
        let w = self.bw + 1;
        for i in 0..self.n {
            let lo = i.saturating_sub(self.bw);
            let mut s = x[i];
            for k in lo..i {
                s -= self.l[i * w + (i - k)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
        for i in (0..self.n).rev() {
            let hi = (i + self.bw).min(self.n - 1);
            let mut s = x[i];
            for k in i + 1..=hi {
                s -= self.l[k * w + (k - i)] * x[k];
            }
            x[i] = s / self.l[i * w];
        }
    }

    pub fn solve(&self, b: &[T]) -> Vec<T> {
        let mut x = b.to_vec();
        self.solve_in_place(&mut x);
        x
    }
}
