//! Periodic uniform grids, cell-centered fields and the discrete operators
//! used by the solver.
//!
//! Cells are stored x-fastest: the flat index of cell `(i, j, k)` is
//! `i + nx * (j + ny * k)`. Two-dimensional grids have `nz == 1`. Every axis
//! wraps, so the grid is a discrete torus.

use thiserror::Error;

use crate::exec;

pub const MIN_CELLS_PER_AXIS: usize = 8;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GridError {
    #[error("grid must have 2 or 3 axes, got {0}")]
    AxisCount(usize),
    #[error("dims has {dims} entries but lengths has {lengths}")]
    DimensionMismatch { dims: usize, lengths: usize },
    #[error("axis {axis}: need at least {MIN_CELLS_PER_AXIS} cells, got {cells}")]
    TooFewCells { axis: usize, cells: usize },
    #[error("axis {axis}: side length must be positive and finite, got {length}")]
    BadLength { axis: usize, length: f64 },
    #[error("field has {got} values but the grid has {expected} cells")]
    ValueCount { expected: usize, got: usize },
    #[error("non-finite value {value} at cell {index}")]
    NonFinite { index: usize, value: f64 },
    #[error("helmholtz coefficients must satisfy a > 0, b >= 0 (got a={a}, b={b})")]
    BadCoefficients { a: f64, b: f64 },
    #[error("helmholtz solve did not converge in {iterations} iterations (relative residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
}

/// A periodic uniform lattice over `(R / L_0 Z) x (R / L_1 Z) [x (R / L_2 Z)]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Grid {
    ndim: usize,
    dims: [usize; 3],
    lengths: [f64; 3],
    spacing: [f64; 3],
}

/// Build a grid from per-axis cell counts and side lengths.
pub fn make_grid(dims: &[usize], lengths: &[f64]) -> Result<Grid, GridError> {
    Grid::new(dims, lengths)
}

impl Grid {
    pub fn new(dims: &[usize], lengths: &[f64]) -> Result<Self, GridError> {
        if !(2..=3).contains(&dims.len()) {
            return Err(GridError::AxisCount(dims.len()));
        }
        if dims.len() != lengths.len() {
            return Err(GridError::DimensionMismatch {
                dims: dims.len(),
                lengths: lengths.len(),
            });
        }
        let mut d = [1usize; 3];
        let mut l = [1.0f64; 3];
        let mut h = [1.0f64; 3];
        for axis in 0..dims.len() {
            if dims[axis] < MIN_CELLS_PER_AXIS {
                return Err(GridError::TooFewCells {
                    axis,
                    cells: dims[axis],
                });
            }
            let len = lengths[axis];
            if !(len.is_finite() && len > 0.0) {
                return Err(GridError::BadLength { axis, length: len });
            }
            d[axis] = dims[axis];
            l[axis] = len;
            h[axis] = len / dims[axis] as f64;
        }
        Ok(Self {
            ndim: dims.len(),
            dims: d,
            lengths: l,
            spacing: h,
        })
    }

    /// Square/cubic grid of `cells` per axis on the unit torus.
    pub fn unit(ndim: usize, cells: usize) -> Result<Self, GridError> {
        Self::new(&vec![cells; ndim], &vec![1.0; ndim])
    }

    pub fn ndim(&self) -> usize {
        self.ndim
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims[..self.ndim]
    }

    pub fn lengths(&self) -> &[f64] {
        &self.lengths[..self.ndim]
    }

    pub fn spacing(&self) -> &[f64] {
        &self.spacing[..self.ndim]
    }

    pub fn min_spacing(&self) -> f64 {
        self.spacing().iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn len(&self) -> usize {
        self.dims.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Measure of the whole torus.
    pub fn volume(&self) -> f64 {
        self.lengths().iter().product()
    }

    /// Measure of one cell, `h_0 * h_1 [* h_2]`.
    pub fn cell_volume(&self) -> f64 {
        self.spacing().iter().product()
    }

    pub(crate) fn nx(&self) -> usize {
        self.dims[0]
    }

    #[inline]
    pub fn index(&self, i: usize, j: usize, k: usize) -> usize {
        i + self.dims[0] * (j + self.dims[1] * k)
    }

    /// Cell coordinates `(i, j, k)` of a flat index (`k == 0` in 2D).
    #[inline]
    pub fn coords(&self, idx: usize) -> [usize; 3] {
        let i = idx % self.dims[0];
        let rest = idx / self.dims[0];
        [i, rest % self.dims[1], rest / self.dims[1]]
    }

    /// Physical position of a cell center.
    pub fn center(&self, idx: usize) -> [f64; 3] {
        let c = self.coords(idx);
        let mut x = [0.0; 3];
        for a in 0..self.ndim {
            x[a] = (c[a] as f64 + 0.5) * self.spacing[a];
        }
        x
    }

    /// Row indices of the y- and z-neighbours of x-row `row` (`j + ny * k`).
    #[inline]
    pub(crate) fn row_neighbours(&self, row: usize) -> [usize; 4] {
        let ny = self.dims[1];
        let nz = self.dims[2];
        let j = row % ny;
        let k = row / ny;
        let jm = if j == 0 { ny - 1 } else { j - 1 };
        let jp = if j + 1 == ny { 0 } else { j + 1 };
        let km = if k == 0 { nz - 1 } else { k - 1 };
        let kp = if k + 1 == nz { 0 } else { k + 1 };
        [jm + ny * k, jp + ny * k, j + ny * km, j + ny * kp]
    }

    /// Inverse squared spacings, zero for absent axes.
    pub(crate) fn inv_h2(&self) -> [f64; 3] {
        let mut out = [0.0; 3];
        for a in 0..self.ndim {
            out[a] = 1.0 / (self.spacing[a] * self.spacing[a]);
        }
        out
    }

    /// Shortest signed periodic offset `b - a` along `axis`, in `[-L/2, L/2)`.
    pub fn periodic_offset(&self, axis: usize, a: f64, b: f64) -> f64 {
        let l = self.lengths[axis];
        let d = b - a;
        d - l * (d / l + 0.5).floor()
    }

    /// Torus distance between two points.
    pub fn torus_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        (0..self.ndim)
            .map(|ax| self.periodic_offset(ax, a[ax], b[ax]).powi(2))
            .sum::<f64>()
            .sqrt()
    }
}

/// Cell-centered real values on a [`Grid`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: Grid,
    values: Vec<f64>,
}

impl ScalarField {
    pub fn new(grid: &Grid, values: Vec<f64>) -> Result<Self, GridError> {
        if values.len() != grid.len() {
            return Err(GridError::ValueCount {
                expected: grid.len(),
                got: values.len(),
            });
        }
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, v)| !v.is_finite()) {
            return Err(GridError::NonFinite { index, value });
        }
        Ok(Self {
            grid: grid.clone(),
            values,
        })
    }

    pub fn constant(grid: &Grid, c: f64) -> Self {
        Self {
            grid: grid.clone(),
            values: vec![c; grid.len()],
        }
    }

    /// Sample `f` at every cell center.
    pub fn from_fn<F: FnMut([f64; 3]) -> f64>(grid: &Grid, mut f: F) -> Self {
        let values = (0..grid.len()).map(|i| f(grid.center(i))).collect();
        Self {
            grid: grid.clone(),
            values,
        }
    }

    /// Wrap values without the finiteness scan; callers guarantee validity.
    pub(crate) fn from_raw(grid: &Grid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.len());
        Self {
            grid: grid.clone(),
            values,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub(crate) fn values_mut_vec(&mut self) -> &mut Vec<f64> {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn map<F: Fn(f64) -> f64>(&self, f: F) -> Self {
        Self {
            grid: self.grid.clone(),
            values: self.values.iter().map(|&v| f(v)).collect(),
        }
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Index and value of the first non-finite entry.
    pub fn first_non_finite(&self) -> Option<(usize, f64)> {
        self.values
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite())
            .map(|(i, &v)| (i, v))
    }

    /// Periodic translation by `cells` along `axis`: `out[x + s] = self[x]`.
    pub fn shifted(&self, axis: usize, cells: isize) -> Self {
        let g = &self.grid;
        let n = g.dims[axis] as isize;
        let mut out = vec![0.0; self.values.len()];
        for (idx, &v) in self.values.iter().enumerate() {
            let mut c = g.coords(idx);
            c[axis] = (c[axis] as isize + cells).rem_euclid(n) as usize;
            out[g.index(c[0], c[1], c[2])] = v;
        }
        Self::from_raw(g, out)
    }
}

/// Five/seven-point Laplacian of `src` written into `dst`.
pub(crate) fn laplacian_into(grid: &Grid, src: &[f64], dst: &mut [f64]) {
    let nx = grid.nx();
    let [cx, cy, cz] = grid.inv_h2();
    let three_d = grid.ndim() == 3;
    exec::map_rows(dst, nx, |row, out| {
        let [ym, yp, zm, zp] = grid.row_neighbours(row);
        let c = &src[row * nx..(row + 1) * nx];
        let ym = &src[ym * nx..(ym + 1) * nx];
        let yp = &src[yp * nx..(yp + 1) * nx];
        for i in 0..nx {
            let l = if i == 0 { c[nx - 1] } else { c[i - 1] };
            let r = if i + 1 == nx { c[0] } else { c[i + 1] };
            out[i] = cx * (l + r - 2.0 * c[i]) + cy * (ym[i] + yp[i] - 2.0 * c[i]);
        }
        if three_d {
            let zm = &src[zm * nx..(zm + 1) * nx];
            let zp = &src[zp * nx..(zp + 1) * nx];
            for i in 0..nx {
                out[i] += cz * (zm[i] + zp[i] - 2.0 * c[i]);
            }
        }
    });
}

/// Second-order periodic Laplacian.
pub fn laplacian(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    laplacian_into(&f.grid, &f.values, &mut out);
    ScalarField::from_raw(&f.grid, out)
}

/// Squared gradient magnitude.
///
/// Per axis this is the mean of the squared forward and backward differences,
/// `((f[i+1]-f[i])^2 + (f[i]-f[i-1])^2) / (2 h^2)`, which is centered and
/// second-order accurate. Its sum over the grid equals the sum of squared
/// face differences, so the variation of `sum(grad_sq) h^n / 2` is exactly
/// `-laplacian`.
pub fn grad_sq(f: &ScalarField) -> ScalarField {
    let mut out = vec![0.0; f.values.len()];
    grad_sq_into(&f.grid, &f.values, &mut out);
    ScalarField::from_raw(&f.grid, out)
}

pub(crate) fn grad_sq_into(grid: &Grid, src: &[f64], dst: &mut [f64]) {
    let nx = grid.nx();
    let [cx, cy, cz] = grid.inv_h2();
    let three_d = grid.ndim() == 3;
    exec::map_rows(dst, nx, |row, out| {
        let [ym, yp, zm, zp] = grid.row_neighbours(row);
        let c = &src[row * nx..(row + 1) * nx];
        let ym = &src[ym * nx..(ym + 1) * nx];
        let yp = &src[yp * nx..(yp + 1) * nx];
        for i in 0..nx {
            let l = if i == 0 { c[nx - 1] } else { c[i - 1] };
            let r = if i + 1 == nx { c[0] } else { c[i + 1] };
            let gx = (r - c[i]).powi(2) + (c[i] - l).powi(2);
            let gy = (yp[i] - c[i]).powi(2) + (c[i] - ym[i]).powi(2);
            out[i] = 0.5 * (cx * gx + cy * gy);
        }
        if three_d {
            let zm = &src[zm * nx..(zm + 1) * nx];
            let zp = &src[zp * nx..(zp + 1) * nx];
            for i in 0..nx {
                let gz = (zp[i] - c[i]).powi(2) + (c[i] - zm[i]).powi(2);
                out[i] += 0.5 * cz * gz;
            }
        }
    });
}

/// Midpoint-rule integral over the torus with deterministic summation.
pub fn integrate(f: &ScalarField) -> f64 {
    exec::sum(&f.values) * f.grid.cell_volume()
}

/// Solve `(a + b) w - laplacian(w) = rhs` on the periodic grid.
pub fn helmholtz_solve(rhs: &ScalarField, a: f64, b: f64) -> Result<ScalarField, GridError> {
    helmholtz_solve_from(rhs, a, b, None)
}

/// Relative residual target of [`helmholtz_solve`].
pub const HELMHOLTZ_TOL: f64 = 1e-10;
const HELMHOLTZ_MAX_ITER: usize = 20_000;

/// [`helmholtz_solve`] with an optional starting guess (conjugate gradients).
pub fn helmholtz_solve_from(
    rhs: &ScalarField,
    a: f64,
    b: f64,
    guess: Option<&ScalarField>,
) -> Result<ScalarField, GridError> {
    let mut x = match guess {
        Some(g) => g.values.clone(),
        None => vec![0.0; rhs.values.len()],
    };
    let mut work = HelmholtzWork::default();
    helmholtz_solve_in_place(&rhs.grid, &rhs.values, a, b, &mut x, &mut work)?;
    Ok(ScalarField::from_raw(&rhs.grid, x))
}

/// Scratch vectors reused across [`helmholtz_solve_in_place`] calls.
#[derive(Debug, Default, Clone)]
pub struct HelmholtzWork {
    ap: Vec<f64>,
    r: Vec<f64>,
    p: Vec<f64>,
}

/// Conjugate gradients on `x`, which holds the starting guess on entry.
/// Returns the iteration count.
pub fn helmholtz_solve_in_place(
    grid: &Grid,
    rhs: &[f64],
    a: f64,
    b: f64,
    x: &mut [f64],
    work: &mut HelmholtzWork,
) -> Result<usize, GridError> {
    if !(a > 0.0 && a.is_finite() && b >= 0.0 && b.is_finite()) {
        return Err(GridError::BadCoefficients { a, b });
    }
    let n = rhs.len();
    assert_eq!(x.len(), n, "guess and rhs lengths differ");
    let shift = a + b;
    let apply = |x: &[f64], out: &mut [f64]| {
        laplacian_into(grid, x, out);
        for (o, &xi) in out.iter_mut().zip(x) {
            *o = shift * xi - *o;
        }
    };

    let rhs_norm = exec::dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        x.fill(0.0);
        return Ok(0);
    }
    let target = HELMHOLTZ_TOL * rhs_norm;

    let HelmholtzWork { ap, r, p } = work;
    ap.resize(n, 0.0);
    r.resize(n, 0.0);
    p.resize(n, 0.0);
    apply(x, ap);
    for ((ri, &bi), &axi) in r.iter_mut().zip(rhs).zip(ap.iter()) {
        *ri = bi - axi;
    }
    p.copy_from_slice(r);
    let mut rr = exec::dot(r, r);

    let mut iterations = 0;
    // Stop a little below the target so the recomputed residual passes too.
    while rr.sqrt() > 0.5 * target {
        if iterations == HELMHOLTZ_MAX_ITER {
            return Err(GridError::NoConvergence {
                iterations,
                residual: rr.sqrt() / rhs_norm,
            });
        }
        apply(p, ap);
        let step = rr / exec::dot(p, ap);
        for i in 0..n {
            x[i] += step * p[i];
            r[i] -= step * ap[i];
        }
        let rr_next = exec::dot(r, r);
        let beta = rr_next / rr;
        for i in 0..n {
            p[i] = r[i] + beta * p[i];
        }
        rr = rr_next;
        iterations += 1;
    }

    apply(x, ap);
    let residual = exec::sum_by_index(n, |i| (ap[i] - rhs[i]).powi(2)).sqrt();
    if residual > target {
        return Err(GridError::NoConvergence {
            iterations,
            residual: residual / rhs_norm,
        });
    }
    Ok(iterations)
}
