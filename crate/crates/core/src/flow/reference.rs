//! Independent check for one implicit step: replace `|s|` by
//! `sqrt(s² + ε²)`, minimise the resulting smooth, strongly convex
//! objective by accelerated gradient descent, and extrapolate in `ε`.
//!
//! Only intended for small grids; nothing here shares code with the dual
//! iteration apart from the difference operators.

use ndarray::Array2;

use super::FlowParams;
use crate::grid::{div_kernel, grad_kernel, ScalarField};
use crate::{Error, Result};

#[derive(Debug, Clone)]
pub struct ReferenceOptions {
    /// Smoothing levels, coarse to fine; the last two are used for the
    /// linear extrapolation to `ε = 0`.
    pub epsilons: Vec<f64>,
    /// Stop when `‖∇J‖₂ <= grad_tol · (1 + ‖f‖₂)`.
    pub grad_tol: f64,
    pub max_iter: usize,
}

impl Default for ReferenceOptions {
    fn default() -> Self {
        Self {
            epsilons: vec![1e-3, 1e-4, 1e-5],
            grad_tol: 1e-11,
            max_iter: 2_000_000,
        }
    }
}

pub const MAX_REFERENCE_SAMPLES: usize = 64 * 64;

pub fn solve_tv_step_reference(
    f: &ScalarField,
    params: &FlowParams,
    options: &ReferenceOptions,
) -> Result<ScalarField> {
    let grid = *f.grid();
    if grid.len() > MAX_REFERENCE_SAMPLES {
        return Err(Error::invalid(
            "grid",
            format!("reference solver is limited to 64x64, got {}x{}", grid.n(), grid.n()),
        ));
    }
    if options.epsilons.len() < 2 {
        return Err(Error::invalid("epsilons", "need at least two smoothing levels"));
    }
    let n = grid.n();
    let h = grid.spacing();
    let gamma = params.dt * params.gamma;
    let beta = params.dt * params.beta;
    let f_vals = f.values().as_slice().unwrap();
    let f_norm = f_vals.iter().map(|v| v * v).sum::<f64>().sqrt();

    let mut u = f_vals.to_vec();
    let mut solutions = Vec::with_capacity(options.epsilons.len());
    for &eps in &options.epsilons {
        u = minimise(f_vals, u, n, h, gamma, beta, eps, options.grad_tol * (1.0 + f_norm), options.max_iter)?;
        solutions.push(u.clone());
    }

    let k = options.epsilons.len();
    let (e_coarse, e_fine) = (options.epsilons[k - 2], options.epsilons[k - 1]);
    let (u_coarse, u_fine) = (&solutions[k - 2], &solutions[k - 1]);
    let w = e_fine / (e_coarse - e_fine);
    let extrapolated: Vec<f64> = u_fine
        .iter()
        .zip(u_coarse)
        .map(|(fine, coarse)| fine + w * (fine - coarse))
        .collect();
    ScalarField::new(grid, Array2::from_shape_vec((n, n), extrapolated).unwrap())
}

#[allow(clippy::too_many_arguments)]
fn minimise(
    f: &[f64],
    start: Vec<f64>,
    n: usize,
    h: f64,
    gamma: f64,
    beta: f64,
    eps: f64,
    grad_tol: f64,
    max_iter: usize,
) -> Result<Vec<f64>> {
    let len = f.len();
    // ‖D‖² <= 8 / h², the data term is 1-strongly convex
    let lipschitz = 1.0 + 8.0 / (h * h) * (gamma + beta / eps);
    let step = 1.0 / lipschitz;
    let kappa = lipschitz;
    let momentum = (kappa.sqrt() - 1.0) / (kappa.sqrt() + 1.0);

    let mut x = start;
    let mut y = x.clone();
    let mut x_next = vec![0.0; len];
    let mut grad = vec![0.0; len];
    let mut d1 = vec![0.0; len];
    let mut d2 = vec![0.0; len];
    let mut w1 = vec![0.0; len];
    let mut w2 = vec![0.0; len];
    let mut div = vec![0.0; len];

    let mut gradient = |u: &[f64], out: &mut [f64]| {
        grad_kernel(u, n, h, &mut d1, &mut d2);
        for k in 0..len {
            w1[k] = gamma * d1[k] + beta * d1[k] / (d1[k] * d1[k] + eps * eps).sqrt();
            w2[k] = gamma * d2[k] + beta * d2[k] / (d2[k] * d2[k] + eps * eps).sqrt();
        }
        div_kernel(&w1, &w2, n, h, &mut div);
        let mut norm = 0.0;
        for k in 0..len {
            out[k] = u[k] - f[k] - div[k];
            norm += out[k] * out[k];
        }
        norm.sqrt()
    };

    for _ in 0..max_iter {
        if gradient(&x, &mut grad) <= grad_tol {
            return Ok(x);
        }
        gradient(&y, &mut grad);
        for k in 0..len {
            x_next[k] = y[k] - step * grad[k];
            y[k] = x_next[k] + momentum * (x_next[k] - x[k]);
        }
        std::mem::swap(&mut x, &mut x_next);
    }
    let residual = gradient(&x, &mut grad);
    Err(Error::NonConvergence {
        iterations: max_iter,
        last_change: residual,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::GridSpec;

    #[test]
    fn constant_datum_is_returned() {
        let grid = GridSpec::pixel(6).unwrap();
        let f = ScalarField::constant(grid, 4.0);
        let params = FlowParams::new(0.2, 1.0, 1.0, 0.12, 1e-8, 10, 10).unwrap();
        let u = solve_tv_step_reference(&f, &params, &ReferenceOptions::default()).unwrap();
        assert!(u.values().iter().all(|&v| (v - 4.0).abs() < 1e-12));
    }

    #[test]
    fn refuses_large_grids() {
        let grid = GridSpec::pixel(65).unwrap();
        let f = ScalarField::zeros(grid);
        let params = FlowParams::pure_flow_defaults();
        assert!(solve_tv_step_reference(&f, &params, &ReferenceOptions::default()).is_err());
    }

    #[test]
    fn reports_non_convergence() {
        let grid = GridSpec::pixel(6).unwrap();
        let f = ScalarField::from_fn(grid, |x1, _| if x1 > 0.0 { 1.0 } else { 0.0 }).unwrap();
        let params = FlowParams::new(0.0, 1.0, 1.0, 0.12, 1e-8, 10, 10).unwrap();
        let options = ReferenceOptions {
            max_iter: 5,
            ..ReferenceOptions::default()
        };
        assert!(matches!(
            solve_tv_step_reference(&f, &params, &options),
            Err(Error::NonConvergence { .. })
        ));
    }
}
