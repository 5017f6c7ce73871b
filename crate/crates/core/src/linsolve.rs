//! The discrete elliptic operator `A = I - γ Δ_h` with homogeneous Neumann
//! boundary conditions.
//!
//! `Δ_h` is the 5-point stencil where a missing neighbour is replaced by the
//! centre value. It coincides with `divergence(grad(.))` from [`crate::grid`]
//! and is diagonalised by the separable DCT-II basis
//! `cos(π p (j + 1/2) / N) cos(π q (i + 1/2) / N)` with eigenvalues
//!
//! ```text
//! λ_pq = 1 + (γ / h²) (4 - 2 cos(π p / N) - 2 cos(π q / N))
//! ```
//!
//! so `solve` is two forward transforms, a diagonal scaling and two inverse
//! transforms. A matrix-free conjugate gradient solve is kept alongside it
//! as an independent route.

use std::sync::Arc;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rustdct::{DctPlanner, TransformType2And3};

use crate::grid::{dot, GridSpec, ScalarField};
use crate::{Error, Result};

#[derive(Clone)]
pub struct EllipticOperator {
    grid: GridSpec,
    gamma: f64,
    dct: Arc<dyn TransformType2And3<f64>>,
    /// `1 / λ_pq`, row-major in (q, p) after the transpose in `solve`.
    inv_eigen: Vec<f64>,
}

impl std::fmt::Debug for EllipticOperator {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("EllipticOperator")
            .field("grid", &self.grid)
            .field("gamma", &self.gamma)
            .finish_non_exhaustive()
    }
}

impl EllipticOperator {
    pub fn new(grid: GridSpec, gamma: f64) -> Result<Self> {
        if !(gamma.is_finite() && gamma >= 0.0) {
            return Err(Error::invalid("gamma", format!("must be >= 0, got {gamma}")));
        }
        let n = grid.n();
        let dct = DctPlanner::new().plan_dct2(n);
        let mut inv_eigen = vec![0.0; n * n];
        for q in 0..n {
            for p in 0..n {
                inv_eigen[q * n + p] = 1.0 / eigenvalue(grid, gamma, p, q);
            }
        }
        Ok(Self {
            grid,
            gamma,
            dct,
            inv_eigen,
        })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    /// `u - γ Δ_h u`.
    pub fn apply(&self, u: &ScalarField) -> Result<ScalarField> {
        if u.grid() != &self.grid {
            return Err(Error::GridMismatch("operand does not live on the operator grid".into()));
        }
        let mut out = vec![0.0; self.grid.len()];
        self.apply_slice(u.values().as_slice().unwrap(), &mut out);
        Ok(ScalarField::from_raw(
            self.grid,
            Array2::from_shape_vec((self.grid.n(), self.grid.n()), out).unwrap(),
        ))
    }

    pub(crate) fn apply_slice(&self, u: &[f64], out: &mut [f64]) {
        let n = self.grid.n();
        if self.gamma == 0.0 {
            out.copy_from_slice(u);
            return;
        }
        let c = self.gamma / self.grid.cell_area();
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                let centre = u[k];
                let mut lap = 0.0;
                if j > 0 {
                    lap += u[k - 1] - centre;
                }
                if j + 1 < n {
                    lap += u[k + 1] - centre;
                }
                if i > 0 {
                    lap += u[k - n] - centre;
                }
                if i + 1 < n {
                    lap += u[k + n] - centre;
                }
                out[k] = centre - c * lap;
            }
        }
    }

    /// Solves `A u = rhs` by diagonalisation in the cosine basis.
    pub fn solve(&self, rhs: &ScalarField) -> Result<ScalarField> {
        if rhs.grid() != &self.grid {
            return Err(Error::GridMismatch("right-hand side does not live on the operator grid".into()));
        }
        let mut buf = rhs.values().as_slice().unwrap().to_vec();
        if buf.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let mut scratch = Vec::new();
        self.solve_in_place(&mut buf, &mut scratch);
        let n = self.grid.n();
        Ok(ScalarField::from_raw(self.grid, Array2::from_shape_vec((n, n), buf).unwrap()))
    }

    /// In-place solve on a raw row-major buffer; `scratch` is resized as needed.
    pub(crate) fn solve_in_place(&self, buf: &mut [f64], scratch: &mut Vec<f64>) {
        if self.gamma == 0.0 {
            return;
        }
        let n = self.grid.n();
        let dct_scratch_len = self.dct.get_scratch_len();
        scratch.resize(n * n + dct_scratch_len, 0.0);
        let (transposed, dct_scratch) = scratch.split_at_mut(n * n);

        for row in buf.chunks_exact_mut(n) {
            self.dct.process_dct2_with_scratch(row, dct_scratch);
        }
        transpose(buf, transposed, n);
        for row in transposed.chunks_exact_mut(n) {
            self.dct.process_dct2_with_scratch(row, dct_scratch);
        }
        // transposed[p * n + q] holds the coefficient of column mode p, row mode q
        for p in 0..n {
            for q in 0..n {
                transposed[p * n + q] *= self.inv_eigen[q * n + p];
            }
        }
        for row in transposed.chunks_exact_mut(n) {
            self.dct.process_dct3_with_scratch(row, dct_scratch);
        }
        transpose(transposed, buf, n);
        for row in buf.chunks_exact_mut(n) {
            self.dct.process_dct3_with_scratch(row, dct_scratch);
        }
        // DCT-III after DCT-II scales by N/2 per axis
        let scale = (2.0 / n as f64) * (2.0 / n as f64);
        for v in buf.iter_mut() {
            *v *= scale;
        }
    }

    /// Matrix-free conjugate gradient solve, started from zero.
    pub fn solve_cg(&self, rhs: &ScalarField, rel_tol: f64, max_iter: usize) -> Result<ScalarField> {
        if rhs.grid() != &self.grid {
            return Err(Error::GridMismatch("right-hand side does not live on the operator grid".into()));
        }
        let b = rhs.values().as_slice().unwrap();
        if b.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("right-hand side"));
        }
        let len = b.len();
        let mut x = vec![0.0; len];
        let mut r = b.to_vec();
        let mut p = r.clone();
        let mut ap = vec![0.0; len];
        let b_norm = dot(b, b).sqrt();
        let mut rr = dot(&r, &r);
        let mut iterations = 0;
        while rr.sqrt() > rel_tol * b_norm {
            if iterations == max_iter {
                return Err(Error::NonConvergence {
                    iterations,
                    last_change: rr.sqrt() / b_norm,
                });
            }
            self.apply_slice(&p, &mut ap);
            let alpha = rr / dot(&p, &ap);
            for k in 0..len {
                x[k] += alpha * p[k];
                r[k] -= alpha * ap[k];
            }
            let rr_next = dot(&r, &r);
            let beta = rr_next / rr;
            for k in 0..len {
                p[k] = r[k] + beta * p[k];
            }
            rr = rr_next;
            iterations += 1;
        }
        let n = self.grid.n();
        Ok(ScalarField::from_raw(self.grid, Array2::from_shape_vec((n, n), x).unwrap()))
    }

    /// `‖A u - rhs‖₂ / ‖rhs‖₂` (unweighted); `‖A u‖₂` when `rhs = 0`.
    pub fn relative_residual(&self, u: &ScalarField, rhs: &ScalarField) -> Result<f64> {
        let au = self.apply(u)?;
        let diff = crate::grid::l2_diff(&au, rhs)?;
        let norm = crate::grid::l2_norm(rhs);
        Ok(if norm > 0.0 { diff / norm } else { diff })
    }

    /// Smallest eigenvalue of `A`. The Neumann Laplacian annihilates
    /// constants and is negative semidefinite, so this is exactly 1.
    pub fn smallest_eigenvalue(&self) -> f64 {
        eigenvalue(self.grid, self.gamma, 0, 0)
    }

    /// Largest eigenvalue of `A`, attained by the checkerboard mode.
    pub fn largest_eigenvalue(&self) -> f64 {
        let n = self.grid.n();
        eigenvalue(self.grid, self.gamma, n - 1, n - 1)
    }

    /// The cosine mode `v_pq` as a field.
    pub fn cosine_mode(&self, p: usize, q: usize) -> ScalarField {
        let n = self.grid.n();
        let values = Array2::from_shape_fn((n, n), |(i, j)| {
            let nf = n as f64;
            (std::f64::consts::PI * p as f64 * (j as f64 + 0.5) / nf).cos()
                * (std::f64::consts::PI * q as f64 * (i as f64 + 0.5) / nf).cos()
        });
        ScalarField::from_raw(self.grid, values)
    }

    pub fn mode_eigenvalue(&self, p: usize, q: usize) -> f64 {
        eigenvalue(self.grid, self.gamma, p, q)
    }
}

fn eigenvalue(grid: GridSpec, gamma: f64, p: usize, q: usize) -> f64 {
    let n = grid.n() as f64;
    let pi = std::f64::consts::PI;
    let sym = 4.0 - 2.0 * (pi * p as f64 / n).cos() - 2.0 * (pi * q as f64 / n).cos();
    1.0 + gamma / grid.cell_area() * sym
}

fn transpose(src: &[f64], dst: &mut [f64], n: usize) {
    for i in 0..n {
        for j in 0..n {
            dst[j * n + i] = src[i * n + j];
        }
    }
}

/// Estimates the smallest eigenvalue of `op` by inverse power iteration
/// (repeated application of `solve`) from a seeded random start.
pub fn inverse_power_iteration(op: &EllipticOperator, iterations: usize, seed: u64) -> Result<f64> {
    let grid = *op.grid();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut v = ScalarField::from_fn(grid, |_, _| rng.random_range(0.0..1.0))?;
    let mut estimate = 0.0;
    for _ in 0..iterations {
        let w = op.solve(&v)?;
        let norm = crate::grid::l2_norm(&w);
        if norm == 0.0 {
            return Err(Error::Degenerate("inverse power iteration collapsed".into()));
        }
        let w = w.map(|x| x / norm)?;
        // Rayleigh quotient of A at the normalised iterate
        let aw = op.apply(&w)?;
        estimate = dot(
            w.values().as_slice().unwrap(),
            aw.values().as_slice().unwrap(),
        );
        v = w;
    }
    Ok(estimate)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::{divergence, grad, linf_diff};

    fn random_field(grid: GridSpec, seed: u64) -> ScalarField {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        ScalarField::from_fn(grid, |_, _| rng.random_range(-1.0..1.0)).unwrap()
    }

    /// Dense `N^2 x N^2` assembly of `I - γΔ_h`, one stencil entry at a time.
    fn dense_matrix(grid: GridSpec, gamma: f64) -> Vec<Vec<f64>> {
        let n = grid.n();
        let c = gamma / grid.cell_area();
        let mut a = vec![vec![0.0; n * n]; n * n];
        for i in 0..n {
            for j in 0..n {
                let k = i * n + j;
                a[k][k] += 1.0;
                let neighbours = [
                    (i as isize - 1, j as isize),
                    (i as isize + 1, j as isize),
                    (i as isize, j as isize - 1),
                    (i as isize, j as isize + 1),
                ];
                for (ni, nj) in neighbours {
                    if ni >= 0 && nj >= 0 && (ni as usize) < n && (nj as usize) < n {
                        let m = ni as usize * n + nj as usize;
                        a[k][m] -= c;
                        a[k][k] += c;
                    }
                }
            }
        }
        a
    }

    #[test]
    fn constants_are_preserved() {
        let grid = GridSpec::new(7, 2.0).unwrap();
        let op = EllipticOperator::new(grid, 0.8).unwrap();
        let c = ScalarField::constant(grid, 3.25);
        assert!(linf_diff(&op.apply(&c).unwrap(), &c).unwrap() < 1e-14);
        assert!(linf_diff(&op.solve(&c).unwrap(), &c).unwrap() < 1e-12);
    }

    #[test]
    fn zero_gamma_is_identity() {
        let grid = GridSpec::pixel(6).unwrap();
        let op = EllipticOperator::new(grid, 0.0).unwrap();
        let u = random_field(grid, 1);
        assert_eq!(op.apply(&u).unwrap(), u);
        assert_eq!(op.solve(&u).unwrap(), u);
    }

    #[test]
    fn rejects_negative_gamma() {
        assert!(EllipticOperator::new(GridSpec::pixel(4).unwrap(), -0.1).is_err());
    }

    #[test]
    fn apply_matches_dense_assembly() {
        let grid = GridSpec::new(6, 1.5).unwrap();
        let gamma = 0.37;
        let op = EllipticOperator::new(grid, gamma).unwrap();
        let u = random_field(grid, 2);
        let a = dense_matrix(grid, gamma);
        let x = u.values().as_slice().unwrap();
        let au = op.apply(&u).unwrap();
        for (k, row) in a.iter().enumerate() {
            let expected: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
            assert!((au.values().as_slice().unwrap()[k] - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn laplacian_equals_divergence_of_gradient() {
        let grid = GridSpec::new(9, 3.0).unwrap();
        let gamma = 0.5;
        let op = EllipticOperator::new(grid, gamma).unwrap();
        let u = random_field(grid, 3);
        let lap = divergence(&grad(&u));
        let expected = u.axpby(1.0, &lap, -gamma).unwrap();
        assert!(linf_diff(&op.apply(&u).unwrap(), &expected).unwrap() < 1e-12);
    }

    #[test]
    fn operator_is_symmetric() {
        let grid = GridSpec::pixel(7).unwrap();
        let op = EllipticOperator::new(grid, 1.3).unwrap();
        let v = random_field(grid, 4);
        let w = random_field(grid, 5);
        let a = crate::grid::inner(&op.apply(&v).unwrap(), &w).unwrap();
        let b = crate::grid::inner(&v, &op.apply(&w).unwrap()).unwrap();
        assert!((a - b).abs() < 1e-12 * a.abs().max(1.0));
    }

    #[test]
    fn solve_round_trip_and_residual() {
        for (n, l, gamma) in [(8, 3.5, 0.2), (13, 6.0, 5.0), (31, 15.0, 0.01)] {
            let grid = GridSpec::new(n, l).unwrap();
            let op = EllipticOperator::new(grid, gamma).unwrap();
            let v = random_field(grid, n as u64);
            let rhs = op.apply(&v).unwrap();
            let u = op.solve(&rhs).unwrap();
            assert!(linf_diff(&u, &v).unwrap() < 1e-8);
            assert!(op.relative_residual(&u, &rhs).unwrap() <= 1e-10);
        }
    }

    #[test]
    fn solve_is_deterministic() {
        let grid = GridSpec::pixel(17).unwrap();
        let op = EllipticOperator::new(grid, 0.2).unwrap();
        let rhs = random_field(grid, 9);
        let a = op.solve(&rhs).unwrap();
        let b = op.solve(&rhs).unwrap();
        assert!(a
            .values()
            .iter()
            .zip(b.values().iter())
            .all(|(x, y)| x.to_bits() == y.to_bits()));
    }

    #[test]
    fn solve_rejects_mismatched_grid() {
        let op = EllipticOperator::new(GridSpec::pixel(5).unwrap(), 0.2).unwrap();
        let rhs = ScalarField::zeros(GridSpec::pixel(6).unwrap());
        assert!(matches!(op.solve(&rhs), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn conjugate_gradient_agrees_with_cosine_solve() {
        let grid = GridSpec::new(12, 2.0).unwrap();
        let op = EllipticOperator::new(grid, 0.6).unwrap();
        let rhs = random_field(grid, 12);
        let fast = op.solve(&rhs).unwrap();
        let cg = op.solve_cg(&rhs, 1e-13, 10_000).unwrap();
        assert!(linf_diff(&fast, &cg).unwrap() < 1e-10);
    }

    #[test]
    fn cosine_modes_are_eigenvectors() {
        let grid = GridSpec::new(10, 1.9).unwrap();
        let op = EllipticOperator::new(grid, 0.45).unwrap();
        for (p, q) in [(0, 0), (1, 0), (0, 3), (4, 7), (9, 9)] {
            let v = op.cosine_mode(p, q);
            let av = op.apply(&v).unwrap();
            let lambda = op.mode_eigenvalue(p, q);
            let expected = v.map(|x| x * lambda).unwrap();
            assert!(linf_diff(&av, &expected).unwrap() < 1e-10, "mode ({p}, {q})");
        }
    }

    #[test]
    fn smallest_eigenvalue_is_one() {
        for gamma in [0.0, 0.2, 7.0] {
            let op = EllipticOperator::new(GridSpec::pixel(8).unwrap(), gamma).unwrap();
            assert_eq!(op.smallest_eigenvalue(), 1.0);
        }
    }

    #[test]
    fn inverse_power_iteration_finds_unit_eigenvalue() {
        let op = EllipticOperator::new(GridSpec::pixel(8).unwrap(), 0.2).unwrap();
        let estimate = inverse_power_iteration(&op, 400, 1).unwrap();
        assert!((estimate - 1.0).abs() < 1e-10, "{estimate}");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn solve_obeys_maximum_principle(
                n in 2usize..12,
                gamma in 0.0f64..10.0,
                seed in any::<u64>(),
                a in -5.0f64..0.0,
                width in 0.0f64..5.0,
            ) {
                let grid = GridSpec::pixel(n).unwrap();
                let op = EllipticOperator::new(grid, gamma).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let b = a + width;
                let rhs = ScalarField::from_fn(grid, |_, _| rng.random_range(a..=b)).unwrap();
                let u = op.solve(&rhs).unwrap();
                let slack = 1e-12 * (1.0 + a.abs() + b.abs());
                prop_assert!(u.min() >= a - slack && u.max() <= b + slack);
            }
        }
    }
}
