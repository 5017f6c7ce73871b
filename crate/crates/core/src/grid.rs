//! Uniform square grids, scalar and dual fields, and the discrete
//! difference operators with the homogeneous Neumann convention.
//!
//! Grid point `(i, j)` (row `i`, column `j`) sits at
//! `(x1, x2) = (-L + j h, L - i h)`, so row 0 is the top of the domain as in
//! an image. Internally fields are plain row-major `N x N` arrays; the
//! column-stacked vector layout used in some texts is never materialised.
//!
//! `D1` is the forward difference in `x1` (along a row, increasing `j`) and
//! `D2` the forward difference in `x2` (up a column, decreasing `i`). Both
//! vanish at the last index along their own axis. The divergence is the
//! exact negative adjoint, `<grad u, g> = -<u, div g>`.

use ndarray::Array2;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GridSpec {
    n: usize,
    half_width: f64,
}

impl GridSpec {
    /// An `n x n` grid covering `[-half_width, half_width]^2` with the
    /// outermost samples on the boundary.
    pub fn new(n: usize, half_width: f64) -> Result<Self> {
        if n < 2 {
            return Err(Error::invalid("n", format!("need at least 2 points, got {n}")));
        }
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid("half_width", format!("must be positive, got {half_width}")));
        }
        Ok(Self { n, half_width })
    }

    /// Unit-spacing grid with `N = 2L + 1`.
    pub fn pixel(n: usize) -> Result<Self> {
        Self::new(n, (n as f64 - 1.0) / 2.0)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn n_rows(&self) -> usize {
        self.n
    }

    pub fn n_cols(&self) -> usize {
        self.n
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.half_width / (self.n as f64 - 1.0)
    }

    /// Area weight of one sample, `spacing^2`.
    pub fn cell_area(&self) -> f64 {
        let h = self.spacing();
        h * h
    }

    /// Area of the continuous domain, `(2L)^2`.
    pub fn domain_area(&self) -> f64 {
        4.0 * self.half_width * self.half_width
    }

    pub fn len(&self) -> usize {
        self.n * self.n
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn x1(&self, j: usize) -> f64 {
        -self.half_width + j as f64 * self.spacing()
    }

    pub fn x2(&self, i: usize) -> f64 {
        self.half_width - i as f64 * self.spacing()
    }

    pub fn coords(&self, i: usize, j: usize) -> (f64, f64) {
        (self.x1(j), self.x2(i))
    }

    /// Nearest grid point to `(x1, x2)`, or `None` outside the domain.
    pub fn nearest_index(&self, x1: f64, x2: f64) -> Option<(usize, usize)> {
        let h = self.spacing();
        let j = ((x1 + self.half_width) / h).round();
        let i = ((self.half_width - x2) / h).round();
        let last = (self.n - 1) as f64;
        if (0.0..=last).contains(&i) && (0.0..=last).contains(&j) {
            Some((i as usize, j as usize))
        } else {
            None
        }
    }

    fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self == other {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!(
                "{}x{} (L = {}) vs {}x{} (L = {})",
                self.n, self.n, self.half_width, other.n, other.n, other.half_width
            )))
        }
    }
}

/// A real function sampled on a [`GridSpec`].
#[derive(Debug, Clone, PartialEq)]
pub struct ScalarField {
    grid: GridSpec,
    values: Array2<f64>,
}

impl ScalarField {
    pub fn new(grid: GridSpec, values: Array2<f64>) -> Result<Self> {
        if values.dim() != (grid.n, grid.n) {
            return Err(Error::GridMismatch(format!(
                "values have shape {:?}, grid is {}x{}",
                values.dim(),
                grid.n,
                grid.n
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("scalar field"));
        }
        Ok(Self {
            grid,
            values: values.as_standard_layout().into_owned(),
        })
    }

    pub fn constant(grid: GridSpec, c: f64) -> Self {
        Self {
            grid,
            values: Array2::from_elem((grid.n, grid.n), c),
        }
    }

    pub fn zeros(grid: GridSpec) -> Self {
        Self::constant(grid, 0.0)
    }

    /// Samples `f(x1, x2)` at every grid point.
    pub fn from_fn(grid: GridSpec, mut f: impl FnMut(f64, f64) -> f64) -> Result<Self> {
        let values = Array2::from_shape_fn((grid.n, grid.n), |(i, j)| f(grid.x1(j), grid.x2(i)));
        Self::new(grid, values)
    }

    /// Like [`ScalarField::from_fn`] but with a fallible sampler.
    pub fn try_from_fn(
        grid: GridSpec,
        mut f: impl FnMut(f64, f64) -> Result<f64>,
    ) -> Result<Self> {
        let mut values = Array2::zeros((grid.n, grid.n));
        for ((i, j), v) in values.indexed_iter_mut() {
            *v = f(grid.x1(j), grid.x2(i))?;
        }
        Self::new(grid, values)
    }

    pub(crate) fn from_raw(grid: GridSpec, values: Array2<f64>) -> Self {
        debug_assert_eq!(values.dim(), (grid.n, grid.n));
        Self { grid, values }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn values(&self) -> &Array2<f64> {
        &self.values
    }

    pub fn into_values(self) -> Array2<f64> {
        self.values
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[[i, j]]
    }

    pub(crate) fn slice(&self) -> &[f64] {
        self.values.as_slice().expect("standard layout")
    }

    pub fn min(&self) -> f64 {
        self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(self.grid, self.values.mapv(f))
    }

    /// `a * self + b * other`.
    pub fn axpby(&self, a: f64, other: &ScalarField, b: f64) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let values = &self.values * a + &other.values * b;
        Self::new(self.grid, values)
    }

    pub fn check_same_grid(&self, other: &ScalarField) -> Result<()> {
        self.grid.check_same(&other.grid)
    }
}

/// A pair of grids `(g1, g2)`: either a dual variable (bounded
/// componentwise by 1 after solver updates) or a discrete gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct DualField {
    grid: GridSpec,
    g1: Array2<f64>,
    g2: Array2<f64>,
}

impl DualField {
    pub fn new(grid: GridSpec, g1: Array2<f64>, g2: Array2<f64>) -> Result<Self> {
        let shape = (grid.n, grid.n);
        if g1.dim() != shape || g2.dim() != shape {
            return Err(Error::GridMismatch(format!(
                "components have shapes {:?} and {:?}, grid is {}x{}",
                g1.dim(),
                g2.dim(),
                grid.n,
                grid.n
            )));
        }
        if g1.iter().chain(g2.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("dual field"));
        }
        Ok(Self {
            grid,
            g1: g1.as_standard_layout().into_owned(),
            g2: g2.as_standard_layout().into_owned(),
        })
    }

    pub fn zeros(grid: GridSpec) -> Self {
        let shape = (grid.n, grid.n);
        Self {
            grid,
            g1: Array2::zeros(shape),
            g2: Array2::zeros(shape),
        }
    }

    pub(crate) fn from_raw(grid: GridSpec, g1: Array2<f64>, g2: Array2<f64>) -> Self {
        Self { grid, g1, g2 }
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn g1(&self) -> &Array2<f64> {
        &self.g1
    }

    pub fn g2(&self) -> &Array2<f64> {
        &self.g2
    }

    pub fn into_components(self) -> (Array2<f64>, Array2<f64>) {
        (self.g1, self.g2)
    }

    /// `max(|g1|, |g2|)` over the grid.
    pub fn sup_norm(&self) -> f64 {
        self.g1
            .iter()
            .chain(self.g2.iter())
            .fold(0.0_f64, |acc, v| acc.max(v.abs()))
    }

    /// `max(0, max|g| - 1)`.
    pub fn feasibility_excess(&self) -> f64 {
        (self.sup_norm() - 1.0).max(0.0)
    }
}

// Slice kernels shared with the solver hot loop. All arrays are square,
// row-major, `n * n` long.

pub(crate) fn grad_kernel(u: &[f64], n: usize, h: f64, d1: &mut [f64], d2: &mut [f64]) {
    let inv_h = 1.0 / h;
    for i in 0..n {
        let row = i * n;
        for j in 0..n - 1 {
            d1[row + j] = (u[row + j + 1] - u[row + j]) * inv_h;
        }
        d1[row + n - 1] = 0.0;
    }
    d2[..n].fill(0.0);
    for i in 1..n {
        let row = i * n;
        let up = row - n;
        for j in 0..n {
            d2[row + j] = (u[up + j] - u[row + j]) * inv_h;
        }
    }
}

pub(crate) fn div_kernel(g1: &[f64], g2: &[f64], n: usize, h: f64, out: &mut [f64]) {
    let inv_h = 1.0 / h;
    for i in 0..n {
        let row = i * n;
        out[row] = g1[row];
        for j in 1..n - 1 {
            out[row + j] = g1[row + j] - g1[row + j - 1];
        }
        out[row + n - 1] = -g1[row + n - 2];
    }
    // x2 runs opposite to the row index: the x2-predecessor of row i is row i + 1.
    for j in 0..n {
        out[j] -= g2[n + j];
    }
    for i in 1..n - 1 {
        let row = i * n;
        let below = row + n;
        for j in 0..n {
            out[row + j] += g2[row + j] - g2[below + j];
        }
    }
    let last = (n - 1) * n;
    for j in 0..n {
        out[last + j] += g2[last + j];
    }
    for v in out.iter_mut() {
        *v *= inv_h;
    }
}

/// Forward differences `(D1 u, D2 u)`.
pub fn grad(u: &ScalarField) -> DualField {
    let n = u.grid.n;
    let mut d1 = Array2::zeros((n, n));
    let mut d2 = Array2::zeros((n, n));
    grad_kernel(
        u.slice(),
        n,
        u.grid.spacing(),
        d1.as_slice_mut().unwrap(),
        d2.as_slice_mut().unwrap(),
    );
    DualField::from_raw(u.grid, d1, d2)
}

/// Discrete divergence, the negative adjoint of [`grad`].
pub fn divergence(g: &DualField) -> ScalarField {
    let n = g.grid.n;
    let mut out = Array2::zeros((n, n));
    div_kernel(
        g.g1.as_slice().unwrap(),
        g.g2.as_slice().unwrap(),
        n,
        g.grid.spacing(),
        out.as_slice_mut().unwrap(),
    );
    ScalarField::from_raw(g.grid, out)
}

/// Area-weighted inner product `h^2 * sum(u * v)`.
pub fn inner(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u.grid.cell_area() * dot(u.slice(), v.slice()))
}

/// Area-weighted inner product of two vector fields.
pub fn inner_dual(a: &DualField, b: &DualField) -> Result<f64> {
    a.grid.check_same(&b.grid)?;
    let s = dot(a.g1.as_slice().unwrap(), b.g1.as_slice().unwrap())
        + dot(a.g2.as_slice().unwrap(), b.g2.as_slice().unwrap());
    Ok(a.grid.cell_area() * s)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Anisotropic total variation energy `β h^2 Σ (|D1 u| + |D2 u|)`.
pub fn energy_phi0(u: &ScalarField, beta: f64) -> f64 {
    let g = grad(u);
    let tv: f64 = g.g1.iter().chain(g.g2.iter()).map(|d| d.abs()).sum();
    beta * u.grid.cell_area() * tv
}

/// `Φ0(u) + (γ/2) h^2 Σ ((D1 u)^2 + (D2 u)^2)`.
pub fn energy_phi1(u: &ScalarField, gamma: f64, beta: f64) -> f64 {
    let g = grad(u);
    let area = u.grid.cell_area();
    let (mut tv, mut dirichlet) = (0.0, 0.0);
    for d in g.g1.iter().chain(g.g2.iter()) {
        tv += d.abs();
        dirichlet += d * d;
    }
    beta * area * tv + 0.5 * gamma * area * dirichlet
}

pub fn mean(u: &ScalarField) -> f64 {
    u.values.sum() / u.grid.len() as f64
}

/// Unweighted Euclidean norm of the sample vector.
pub fn l2_norm(u: &ScalarField) -> f64 {
    dot(u.slice(), u.slice()).sqrt()
}

/// Unweighted Euclidean norm of `u - v`.
pub fn l2_diff(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u
        .slice()
        .iter()
        .zip(v.slice())
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

pub fn linf_diff(u: &ScalarField, v: &ScalarField) -> Result<f64> {
    u.check_same_grid(v)?;
    Ok(u
        .slice()
        .iter()
        .zip(v.slice())
        .fold(0.0_f64, |acc, (a, b)| acc.max((a - b).abs())))
}
