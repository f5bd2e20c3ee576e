//! Staggered space-time mesh on the unit square with control and observation regions.
//!
//! Layout (all arrays row-major, `i` fastest):
//! - `u` faces: `(nx + 1) x ny`, located at `(i hx, (j + 1/2) hy)`
//! - `v` faces: `nx x (ny + 1)`, located at `((i + 1/2) hx, j hy)`
//! - cells: `nx x ny`, centers at `((i + 1/2) hx, (j + 1/2) hy)`
//! - nodes: `(nx + 1) x (ny + 1)`, located at `(i hx, j hy)`

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// Open subregion of the unit square.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "lowercase")]
pub enum Region<T> {
    Rect { x0: T, x1: T, y0: T, y1: T },
    Disc { cx: T, cy: T, r: T },
}

impl<T: Real> Region<T> {
    pub fn rect(x0: T, x1: T, y0: T, y1: T) -> Self {
        Region::Rect { x0, x1, y0, y1 }
    }

    pub fn disc(cx: T, cy: T, r: T) -> Self {
        Region::Disc { cx, cy, r }
    }

    fn validate(&self) -> Result<()> {
        let ok = match *self {
            Region::Rect { x0, x1, y0, y1 } => x0 < x1 && y0 < y1 && [x0, x1, y0, y1].iter().all(|v| v.is_finite()),
            Region::Disc { cx, cy, r } => r > T::zero() && cx.is_finite() && cy.is_finite() && r.is_finite(),
        };
        if ok {
            Ok(())
        } else {
            Err(Error::InvalidRegion(format!("degenerate descriptor {self:?}")))
        }
    }

    /// Membership in the open region.
    pub fn contains(&self, x: T, y: T) -> bool {
        match *self {
            Region::Rect { x0, x1, y0, y1 } => x > x0 && x < x1 && y > y0 && y < y1,
            Region::Disc { cx, cy, r } => {
                let (dx, dy) = (x - cx, y - cy);
                dx * dx + dy * dy < r * r
            }
        }
    }

    /// True when the closure of `self` lies inside the open region `outer`.
    pub fn closure_within(&self, outer: &Region<T>) -> bool {
        match (*self, *outer) {
            (Region::Rect { x0, x1, y0, y1 }, Region::Rect { x0: a0, x1: a1, y0: b0, y1: b1 }) => x0 > a0 && x1 < a1 && y0 > b0 && y1 < b1,
            (Region::Disc { cx, cy, r }, Region::Rect { x0, x1, y0, y1 }) => cx - r > x0 && cx + r < x1 && cy - r > y0 && cy + r < y1,
            (Region::Disc { cx, cy, r }, Region::Disc { cx: ox, cy: oy, r: or }) => {
                let d = ((cx - ox) * (cx - ox) + (cy - oy) * (cy - oy)).sqrt();
                d + r < or
            }
            (Region::Rect { x0, x1, y0, y1 }, outer @ Region::Disc { .. }) => {
                [(x0, y0), (x0, y1), (x1, y0), (x1, y1)].iter().all(|&(x, y)| outer.contains(x, y))
            }
        }
    }

    fn unit_square() -> Self {
        Region::Rect { x0: T::zero(), x1: T::one(), y0: T::zero(), y1: T::one() }
    }
}

/// Parameters accepted by [`build_grid`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridConfig<T> {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: T,
    pub omega: Region<T>,
    pub omega0: Region<T>,
}

impl<T: Real> GridConfig<T> {
    /// `n x n` cells, `nt` steps on `[0, 1]`, omega = `[0.3, 0.7]^2`, omega0 = disc((0.5, 0.5), 0.1).
    pub fn reference(n: usize, nt: usize) -> Self {
        GridConfig {
            nx: n,
            ny: n,
            nt,
            t_final: T::one(),
            omega: Region::rect(T::lit(0.3), T::lit(0.7), T::lit(0.3), T::lit(0.7)),
            omega0: Region::disc(T::lit(0.5), T::lit(0.5), T::lit(0.1)),
        }
    }
}

/// Space-time mesh with region masks.
#[derive(Debug, Clone)]
pub struct Grid<T> {
    pub nx: usize,
    pub ny: usize,
    pub nt: usize,
    pub t_final: T,
    pub hx: T,
    pub hy: T,
    pub dt: T,
    pub omega: Region<T>,
    pub omega0: Region<T>,
    /// omega membership of `u` faces.
    pub omega_u: Vec<bool>,
    /// omega membership of `v` faces.
    pub omega_v: Vec<bool>,
    pub omega_cells: Vec<bool>,
    pub omega0_cells: Vec<bool>,
    pub omega0_nodes: Vec<bool>,
}

/// Validates `config` and builds the mesh and region masks.
pub fn build_grid<T: Real>(config: &GridConfig<T>) -> Result<Grid<T>> {
    let GridConfig { nx, ny, nt, t_final, omega, omega0 } = config.clone();
    if nx < 4 || ny < 4 || nt < 4 {
        return Err(Error::InvalidGrid(format!("nx, ny, nt must be >= 4 (got {nx}, {ny}, {nt})")));
    }
    if !(t_final > T::zero()) || !t_final.is_finite() {
        return Err(Error::InvalidGrid(format!("horizon T must be positive (got {t_final})")));
    }
    omega.validate()?;
    omega0.validate()?;
    if !omega.closure_within(&Region::unit_square()) {
        return Err(Error::InvalidRegion("omega must lie strictly inside the unit square".into()));
    }
    if !omega0.closure_within(&omega) {
        return Err(Error::InvalidRegion("closure of omega0 must lie inside omega".into()));
    }

    let hx = T::one() / T::from_count(nx);
    let hy = T::one() / T::from_count(ny);
    let dt = t_final / T::from_count(nt);
    let half = T::lit(0.5);

    let mut omega_u = vec![false; (nx + 1) * ny];
    for j in 0..ny {
        for i in 1..nx {
            omega_u[j * (nx + 1) + i] = omega.contains(T::from_count(i) * hx, (T::from_count(j) + half) * hy);
        }
    }
    let mut omega_v = vec![false; nx * (ny + 1)];
    for j in 1..ny {
        for i in 0..nx {
            omega_v[j * nx + i] = omega.contains((T::from_count(i) + half) * hx, T::from_count(j) * hy);
        }
    }
    let cell_mask = |r: &Region<T>| -> Vec<bool> {
        (0..nx * ny)
            .map(|c| {
                let (i, j) = (c % nx, c / nx);
                r.contains((T::from_count(i) + half) * hx, (T::from_count(j) + half) * hy)
            })
            .collect()
    };
    let omega_cells = cell_mask(&omega);
    let omega0_cells = cell_mask(&omega0);
    let omega0_nodes = (0..(nx + 1) * (ny + 1))
        .map(|n| {
            let (i, j) = (n % (nx + 1), n / (nx + 1));
            omega0.contains(T::from_count(i) * hx, T::from_count(j) * hy)
        })
        .collect();

    if !omega_u.iter().any(|&b| b) || !omega_v.iter().any(|&b| b) {
        return Err(Error::InvalidGrid("omega contains no interior velocity faces at this resolution".into()));
    }

    let grid = Grid { nx, ny, nt, t_final, hx, hy, dt, omega, omega0, omega_u, omega_v, omega_cells, omega0_cells, omega0_nodes };
    if !grid.masks_nested() {
        return Err(Error::InvalidRegion("omega0 cell mask escapes the omega cell mask".into()));
    }
    Ok(grid)
}

impl<T: Real> Grid<T> {
    pub fn n_u(&self) -> usize {
        (self.nx + 1) * self.ny
    }

    pub fn n_v(&self) -> usize {
        self.nx * (self.ny + 1)
    }

    pub fn n_cells(&self) -> usize {
        self.nx * self.ny
    }

    pub fn n_nodes(&self) -> usize {
        (self.nx + 1) * (self.ny + 1)
    }

    /// Area attached to every face and cell in the discrete L2 inner product.
    pub fn cell_area(&self) -> T {
        self.hx * self.hy
    }

    pub fn time(&self, k: usize) -> T {
        T::from_count(k) * self.dt
    }

    pub fn u_pos(&self, i: usize, j: usize) -> (T, T) {
        (T::from_count(i) * self.hx, (T::from_count(j) + T::lit(0.5)) * self.hy)
    }

    pub fn v_pos(&self, i: usize, j: usize) -> (T, T) {
        ((T::from_count(i) + T::lit(0.5)) * self.hx, T::from_count(j) * self.hy)
    }

    pub fn node_pos(&self, i: usize, j: usize) -> (T, T) {
        (T::from_count(i) * self.hx, T::from_count(j) * self.hy)
    }

    pub fn is_boundary_node(&self, i: usize, j: usize) -> bool {
        i == 0 || j == 0 || i == self.nx || j == self.ny
    }

    /// Cell-wise check that the omega0 mask is contained in the omega mask.
    pub fn masks_nested(&self) -> bool {
        self.omega0_cells.iter().zip(&self.omega_cells).all(|(&a, &b)| !a || b)
    }

    /// Same spatial and temporal resolution.
    pub fn same_mesh(&self, other: &Grid<T>) -> bool {
        self.nx == other.nx && self.ny == other.ny && self.nt == other.nt && self.t_final == other.t_final
    }
}
