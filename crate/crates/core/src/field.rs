//! MAC velocity and pressure fields and the discrete operators between them.

use crate::grid::Grid;
use crate::scalar::Real;

/// Velocity on cell faces; boundary normal components are stored and kept at zero.
#[derive(Debug, Clone, PartialEq)]
pub struct VelocityField<T> {
    pub nx: usize,
    pub ny: usize,
    /// `(nx + 1) x ny`, row-major.
    pub u: Vec<T>,
    /// `nx x (ny + 1)`, row-major.
    pub v: Vec<T>,
}

/// Cell-centered pressure, normalized to zero mean.
#[derive(Debug, Clone, PartialEq)]
pub struct PressureField<T> {
    pub nx: usize,
    pub ny: usize,
    pub p: Vec<T>,
}

impl<T: Real> PressureField<T> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        PressureField { nx, ny, p: vec![T::zero(); nx * ny] }
    }

    pub fn mean(&self) -> T {
        self.p.iter().copied().sum::<T>() / T::from_count(self.p.len())
    }

    pub fn remove_mean(&mut self) {
        let m = self.mean();
        self.p.iter_mut().for_each(|x| *x -= m);
    }
}

impl<T: Real> VelocityField<T> {
    pub fn zeros(nx: usize, ny: usize) -> Self {
        VelocityField { nx, ny, u: vec![T::zero(); (nx + 1) * ny], v: vec![T::zero(); nx * (ny + 1)] }
    }

    pub fn zeros_like(grid: &Grid<T>) -> Self {
        Self::zeros(grid.nx, grid.ny)
    }

    /// Samples `f(x, y) -> (u, v)` at face midpoints; wall-normal faces are set to zero.
    pub fn sample(grid: &Grid<T>, f: impl Fn(T, T) -> (T, T)) -> Self {
        let mut out = Self::zeros_like(grid);
        for j in 0..grid.ny {
            for i in 1..grid.nx {
                let (x, y) = grid.u_pos(i, j);
                out.u[j * (grid.nx + 1) + i] = f(x, y).0;
            }
        }
        for j in 1..grid.ny {
            for i in 0..grid.nx {
                let (x, y) = grid.v_pos(i, j);
                out.v[j * grid.nx + i] = f(x, y).1;
            }
        }
        out
    }

    /// Discrete curl of a nodal stream function (values on boundary nodes are
    /// treated as zero). The result is exactly divergence-free.
    pub fn from_stream(nx: usize, ny: usize, hx: T, hy: T, psi: &[T]) -> Self {
        let stride = nx + 1;
        let at = |i: usize, j: usize| if i == 0 || j == 0 || i == nx || j == ny { T::zero() } else { psi[j * stride + i] };
        let mut out = Self::zeros(nx, ny);
        for j in 0..ny {
            for i in 1..nx {
                out.u[j * stride + i] = (at(i, j + 1) - at(i, j)) / hy;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.v[j * nx + i] = -(at(i + 1, j) - at(i, j)) / hx;
            }
        }
        out
    }

    /// Transpose of [`VelocityField::from_stream`]: nodal values, zero on the boundary.
    pub fn curl_transpose(&self, hx: T, hy: T) -> Vec<T> {
        let (nx, ny) = (self.nx, self.ny);
        let stride = nx + 1;
        let mut out = vec![T::zero(); (nx + 1) * (ny + 1)];
        for j in 1..ny {
            for i in 1..nx {
                let du = (self.u[(j - 1) * stride + i] - self.u[j * stride + i]) / hy;
                let dv = (self.v[j * nx + i] - self.v[j * nx + i - 1]) / hx;
                out[j * stride + i] = du + dv;
            }
        }
        out
    }

    pub fn same_shape(&self, other: &Self) -> bool {
        self.nx == other.nx && self.ny == other.ny
    }

    pub fn fits(&self, grid: &Grid<T>) -> bool {
        self.nx == grid.nx && self.ny == grid.ny && self.u.len() == grid.n_u() && self.v.len() == grid.n_v()
    }

    fn zip_map(&self, other: &Self, f: impl Fn(T, T) -> T) -> Self {
        VelocityField {
            nx: self.nx,
            ny: self.ny,
            u: self.u.iter().zip(&other.u).map(|(&a, &b)| f(a, b)).collect(),
            v: self.v.iter().zip(&other.v).map(|(&a, &b)| f(a, b)).collect(),
        }
    }

    pub fn add(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a + b)
    }

    pub fn sub(&self, other: &Self) -> Self {
        self.zip_map(other, |a, b| a - b)
    }

    pub fn scaled(&self, c: T) -> Self {
        VelocityField { nx: self.nx, ny: self.ny, u: self.u.iter().map(|&a| a * c).collect(), v: self.v.iter().map(|&a| a * c).collect() }
    }

    /// `self += c * x`
    pub fn axpy(&mut self, c: T, x: &Self) {
        self.u.iter_mut().zip(&x.u).for_each(|(a, &b)| *a += c * b);
        self.v.iter_mut().zip(&x.v).for_each(|(a, &b)| *a += c * b);
    }

    pub fn scale(&mut self, c: T) {
        self.u.iter_mut().chain(self.v.iter_mut()).for_each(|a| *a *= c);
    }

    /// Plain coefficient dot product.
    pub fn raw_dot(&self, other: &Self) -> T {
        self.u.iter().zip(&other.u).chain(self.v.iter().zip(&other.v)).map(|(&a, &b)| a * b).sum()
    }

    /// Discrete L2(Omega) inner product (every face carries area `hx hy`).
    pub fn dot(&self, other: &Self) -> T {
        self.raw_dot(other) / T::from_count(self.nx * self.ny)
    }

    pub fn norm(&self) -> T {
        self.dot(self).sqrt()
    }

    pub fn max_abs(&self) -> T {
        self.u.iter().chain(&self.v).fold(T::zero(), |m, &a| m.max(a.abs()))
    }

    pub fn is_finite(&self) -> bool {
        self.u.iter().chain(&self.v).all(|a| a.is_finite())
    }

    /// Per-cell divergence `(u_e - u_w)/hx + (v_n - v_s)/hy`.
    pub fn divergence(&self, hx: T, hy: T) -> Vec<T> {
        let (nx, ny) = (self.nx, self.ny);
        let mut out = Vec::with_capacity(nx * ny);
        for j in 0..ny {
            for i in 0..nx {
                let du = self.u[j * (nx + 1) + i + 1] - self.u[j * (nx + 1) + i];
                let dv = self.v[(j + 1) * nx + i] - self.v[j * nx + i];
                out.push(du / hx + dv / hy);
            }
        }
        out
    }

    pub fn max_divergence(&self, hx: T, hy: T) -> T {
        self.divergence(hx, hy).into_iter().fold(T::zero(), |m, d| m.max(d.abs()))
    }

    /// Max divergence relative to the velocity scale `max|y| / min(hx, hy)`;
    /// zero for the zero field.
    pub fn relative_divergence(&self, hx: T, hy: T) -> T {
        let scale = self.max_abs() / hx.min(hy);
        if scale == T::zero() {
            T::zero()
        } else {
            self.max_divergence(hx, hy) / scale
        }
    }

    /// Discrete gradient of a cell field onto interior faces (wall-normal faces stay zero).
    pub fn gradient(p: &[T], nx: usize, ny: usize, hx: T, hy: T) -> Self {
        let mut out = Self::zeros(nx, ny);
        for j in 0..ny {
            for i in 1..nx {
                out.u[j * (nx + 1) + i] = (p[j * nx + i] - p[j * nx + i - 1]) / hx;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                out.v[j * nx + i] = (p[j * nx + i] - p[(j - 1) * nx + i]) / hy;
            }
        }
        out
    }

    /// Transpose of [`VelocityField::gradient`] in plain coefficients (equals `-divergence`).
    pub fn gradient_transpose(&self, hx: T, hy: T) -> Vec<T> {
        self.divergence(hx, hy).into_iter().map(|d| -d).collect()
    }

    /// Five-point vector Laplacian with no-slip walls: wall-normal faces are
    /// Dirichlet points, tangential components use a reflected ghost value.
    pub fn laplacian(&self, hx: T, hy: T) -> Self {
        let (nx, ny) = (self.nx, self.ny);
        let (ihx2, ihy2) = (T::one() / (hx * hx), T::one() / (hy * hy));
        let two = T::lit(2.0);
        let mut out = Self::zeros(nx, ny);
        let su = nx + 1;
        for j in 0..ny {
            for i in 1..nx {
                let c = self.u[j * su + i];
                let xx = (self.u[j * su + i + 1] - two * c + self.u[j * su + i - 1]) * ihx2;
                let s = if j == 0 { -c } else { self.u[(j - 1) * su + i] };
                let n = if j == ny - 1 { -c } else { self.u[(j + 1) * su + i] };
                out.u[j * su + i] = xx + (n - two * c + s) * ihy2;
            }
        }
        for j in 1..ny {
            for i in 0..nx {
                let c = self.v[j * nx + i];
                let yy = (self.v[(j + 1) * nx + i] - two * c + self.v[(j - 1) * nx + i]) * ihy2;
                let w = if i == 0 { -c } else { self.v[j * nx + i - 1] };
                let e = if i == nx - 1 { -c } else { self.v[j * nx + i + 1] };
                out.v[j * nx + i] = yy + (e - two * c + w) * ihx2;
            }
        }
        out
    }

    /// `sum |grad y|^2` over faces with one-sided ghost differences, scaled by area.
    pub fn gradient_norm_sq(&self, hx: T, hy: T) -> T {
        // <-Lap y, y> equals the squared discrete gradient norm for this stencil
        -self.laplacian(hx, hy).dot(self)
    }

    /// Zeroes every face outside the omega masks.
    pub fn restrict_to(&mut self, omega_u: &[bool], omega_v: &[bool]) {
        self.u.iter_mut().zip(omega_u).filter(|(_, &m)| !m).for_each(|(a, _)| *a = T::zero());
        self.v.iter_mut().zip(omega_v).filter(|(_, &m)| !m).for_each(|(a, _)| *a = T::zero());
    }

    /// Component `c` (1 = x, 2 = y) as a slice.
    pub fn component(&self, c: usize) -> &[T] {
        if c == 1 {
            &self.u
        } else {
            &self.v
        }
    }

    pub fn component_mut(&mut self, c: usize) -> &mut [T] {
        if c == 1 {
            &mut self.u
        } else {
            &mut self.v
        }
    }
}
