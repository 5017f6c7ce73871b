//! Implicit time stepping for the (regularized) anisotropic TV flow.
//!
//! One step from `f` solves
//!
//! ```text
//! min_u  ½‖u - f‖² + δt (γ/2)‖∇u‖² + δt β (‖D1 u‖₁ + ‖D2 u‖₁)
//! ```
//!
//! through its dual: with `A = I - δtγΔ_h`, iterate
//!
//! ```text
//! u^n   = A⁻¹ (f + δtβ div g^{n-1})
//! g_k^n = (g_k^{n-1} + s D_k u^n) / (1 + s |D_k u^n|),   k = 1, 2
//! ```
//!
//! Each component is normalised by its own magnitude, which keeps
//! `|g_k| <= 1` separately (the anisotropic constraint). The dual step is
//! `s = τ h² / (δt β)`: with unit spacing and `δtβ = 1` this is the plain
//! `τ`, and for other scalings it keeps the convergence condition at
//! `τ < 1 / (8 λ₁)` with `λ₁ = 1` the smallest eigenvalue of `A`.

mod reference;

pub use reference::{solve_tv_step_reference, ReferenceOptions};

use ndarray::Array2;

use crate::grid::{self, div_kernel, grad_kernel, DualField, ScalarField};
use crate::linsolve::EllipticOperator;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FlowParams {
    pub gamma: f64,
    pub beta: f64,
    pub dt: f64,
    pub tau: f64,
    pub tol: f64,
    pub max_inner: usize,
    pub max_outer: usize,
}

/// Whether `τ` satisfies the strict convergence bound `τ < 1 / (8 λ₁)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TauStatus {
    WithinBound,
    /// Accepted, but outside the range where convergence is guaranteed.
    AtOrAboveBound,
}

impl FlowParams {
    pub fn new(
        gamma: f64,
        beta: f64,
        dt: f64,
        tau: f64,
        tol: f64,
        max_inner: usize,
        max_outer: usize,
    ) -> Result<Self> {
        let params = Self {
            gamma,
            beta,
            dt,
            tau,
            tol,
            max_inner,
            max_outer,
        };
        params.validate()?;
        Ok(params)
    }

    /// Pure flow (`γ = 0`) with the experiment defaults `β = 10`, `δt = 1`,
    /// `τ = 1/8`, `tol = 1e-5`.
    pub fn pure_flow_defaults() -> Self {
        Self {
            gamma: 0.0,
            beta: 10.0,
            dt: 1.0,
            tau: 0.125,
            tol: 1e-5,
            max_inner: 10_000,
            max_outer: 10_000,
        }
    }

    /// Regularized flow with `γ = 1/5` and otherwise the same defaults.
    pub fn regularized_defaults() -> Self {
        Self {
            gamma: 0.2,
            ..Self::pure_flow_defaults()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = |name: &'static str, v: f64| {
            if v.is_finite() && v > 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be positive, got {v}")))
            }
        };
        let non_negative = |name: &'static str, v: f64| {
            if v.is_finite() && v >= 0.0 {
                Ok(())
            } else {
                Err(Error::invalid(name, format!("must be non-negative, got {v}")))
            }
        };
        non_negative("gamma", self.gamma)?;
        non_negative("beta", self.beta)?;
        positive("dt", self.dt)?;
        positive("tau", self.tau)?;
        positive("tol", self.tol)?;
        if self.beta == 0.0 && self.gamma == 0.0 {
            return Err(Error::invalid("beta", "beta and gamma cannot both vanish"));
        }
        if self.max_inner == 0 {
            return Err(Error::invalid("max_inner", "must be at least 1"));
        }
        if self.max_outer == 0 {
            return Err(Error::invalid("max_outer", "must be at least 1"));
        }
        Ok(())
    }

    /// `1 / (8 λ₁)`; `λ₁ = 1` for the Neumann operator at any `γ`.
    pub fn tau_bound(&self) -> f64 {
        1.0 / 8.0
    }

    pub fn tau_status(&self) -> TauStatus {
        if self.tau < self.tau_bound() {
            TauStatus::WithinBound
        } else {
            TauStatus::AtOrAboveBound
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepDiagnostics {
    pub inner_iterations: usize,
    pub final_relative_change: f64,
    pub converged: bool,
    /// `max(0, max|g| - 1)` for the returned dual field.
    pub dual_feasibility_excess: f64,
    /// `|mean(u) - mean(reference)|`, the reference being the step input
    /// for a single step and the initial datum inside [`FlowStepper`].
    pub mean_drift: f64,
    /// Unweighted `‖u - f‖₂` between the step input and output.
    pub increment_norm: f64,
    /// `Φ₁(u)` with the flow's `γ` and `β`.
    pub energy: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub u: ScalarField,
    pub g: DualField,
    pub diagnostics: StepDiagnostics,
}

/// Reusable solver for implicit steps on one grid.
#[derive(Debug, Clone)]
pub struct ProxSolver {
    params: FlowParams,
    op: EllipticOperator,
    scratch: Scratch,
}

#[derive(Debug, Clone, Default)]
struct Scratch {
    div: Vec<f64>,
    d1: Vec<f64>,
    d2: Vec<f64>,
    solve: Vec<f64>,
}

impl ProxSolver {
    pub fn new(grid: crate::GridSpec, params: FlowParams) -> Result<Self> {
        params.validate()?;
        let op = EllipticOperator::new(grid, params.dt * params.gamma)?;
        let len = grid.len();
        Ok(Self {
            params,
            op,
            scratch: Scratch {
                div: vec![0.0; len],
                d1: vec![0.0; len],
                d2: vec![0.0; len],
                solve: Vec::new(),
            },
        })
    }

    pub fn params(&self) -> &FlowParams {
        &self.params
    }

    pub fn operator(&self) -> &EllipticOperator {
        &self.op
    }

    /// Dual step actually used in the `g` update.
    pub fn dual_step(&self) -> f64 {
        self.params.tau * self.op.grid().cell_area() / (self.params.dt * self.params.beta)
    }

    /// One implicit step from `f`, warm-started at `g_init`.
    pub fn step(&mut self, f: &ScalarField, g_init: &DualField) -> Result<StepResult> {
        let grid = *self.op.grid();
        if f.grid() != &grid || g_init.grid() != &grid {
            return Err(Error::GridMismatch("step input does not live on the solver grid".into()));
        }
        if g_init.feasibility_excess() > 1e-12 {
            return Err(Error::invalid(
                "g_init",
                format!("dual start is infeasible, max|g| = {}", g_init.sup_norm()),
            ));
        }
        let n = grid.n();
        let h = grid.spacing();
        let p = self.params;
        let f_vals = f.values().as_slice().unwrap();

        let (mut g1, mut g2) = g_init.clone().into_components();

        if p.beta == 0.0 {
            // linear diffusion: one solve, dual untouched
            let mut u = f_vals.to_vec();
            self.op.solve_in_place(&mut u, &mut self.scratch.solve);
            let u = field_from_vec(grid, u)?;
            let g = DualField::from_raw(grid, g1, g2);
            let diagnostics = self.diagnostics(f, &u, &g, 1, 0.0, true);
            return Ok(StepResult { u, g, diagnostics });
        }

        let beta_eff = p.dt * p.beta;
        let s = self.dual_step();
        let len = grid.len();
        let mut u = vec![0.0; len];
        let mut u_prev = f_vals.to_vec();
        let mut iterations = 0;
        let mut change = f64::INFINITY;
        let mut converged = false;

        while iterations < p.max_inner {
            iterations += 1;
            {
                let gs1 = g1.as_slice().unwrap();
                let gs2 = g2.as_slice().unwrap();
                div_kernel(gs1, gs2, n, h, &mut self.scratch.div);
            }
            for k in 0..len {
                u[k] = f_vals[k] + beta_eff * self.scratch.div[k];
            }
            self.op.solve_in_place(&mut u, &mut self.scratch.solve);
            grad_kernel(&u, n, h, &mut self.scratch.d1, &mut self.scratch.d2);
            dual_update(g1.as_slice_mut().unwrap(), &self.scratch.d1, s);
            dual_update(g2.as_slice_mut().unwrap(), &self.scratch.d2, s);

            change = relative_change(&u_prev, &u);
            std::mem::swap(&mut u_prev, &mut u);
            // u^0 = f; from a zero dual with γ = 0 the first iterate equals f
            if iterations > 1 && change < p.tol {
                converged = true;
                break;
            }
        }
        // the latest iterate was swapped into u_prev
        let u = field_from_vec(grid, u_prev)?;
        let g = DualField::from_raw(grid, g1, g2);
        let diagnostics = self.diagnostics(f, &u, &g, iterations, change, converged);
        Ok(StepResult { u, g, diagnostics })
    }

    fn diagnostics(
        &self,
        reference: &ScalarField,
        u: &ScalarField,
        g: &DualField,
        inner_iterations: usize,
        final_relative_change: f64,
        converged: bool,
    ) -> StepDiagnostics {
        StepDiagnostics {
            inner_iterations,
            final_relative_change,
            converged,
            dual_feasibility_excess: g.feasibility_excess(),
            mean_drift: (grid::mean(u) - grid::mean(reference)).abs(),
            increment_norm: grid::l2_diff(u, reference).expect("same grid"),
            energy: grid::energy_phi1(u, self.params.gamma, self.params.beta),
        }
    }
}

fn dual_update(g: &mut [f64], d: &[f64], s: f64) {
    for (gk, &dk) in g.iter_mut().zip(d) {
        *gk = ((*gk + s * dk) / (1.0 + s * dk.abs())).clamp(-1.0, 1.0);
    }
}

/// `‖prev - next‖₂ / ‖next‖₂`; an exact repeat counts as zero change even
/// when `next` vanishes.
fn relative_change(prev: &[f64], next: &[f64]) -> f64 {
    let mut diff = 0.0;
    let mut norm = 0.0;
    for (a, b) in prev.iter().zip(next) {
        diff += (a - b) * (a - b);
        norm += b * b;
    }
    if diff == 0.0 {
        0.0
    } else if norm == 0.0 {
        f64::INFINITY
    } else {
        (diff / norm).sqrt()
    }
}

fn field_from_vec(grid: crate::GridSpec, v: Vec<f64>) -> Result<ScalarField> {
    if v.iter().any(|x| !x.is_finite()) {
        return Err(Error::NonFinite("solver iterate"));
    }
    Ok(ScalarField::from_raw(
        grid,
        Array2::from_shape_vec((grid.n(), grid.n()), v).unwrap(),
    ))
}

/// One implicit step; see [`ProxSolver::step`].
pub fn prox_step(f: &ScalarField, params: &FlowParams, g_init: &DualField) -> Result<StepResult> {
    if f.values().iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("step input"));
    }
    ProxSolver::new(*f.grid(), *params)?.step(f, g_init)
}

/// Outer time stepper: `u^m = prox(u^{m-1})`, dual warm-started from the
/// previous step, starting from zero at `m = 1`.
#[derive(Debug, Clone)]
pub struct FlowStepper {
    solver: ProxSolver,
    initial_mean: f64,
    state: ScalarField,
    dual: DualField,
    step: usize,
}

impl FlowStepper {
    pub fn new(f: ScalarField, params: FlowParams) -> Result<Self> {
        let solver = ProxSolver::new(*f.grid(), params)?;
        let dual = DualField::zeros(*f.grid());
        Ok(Self {
            solver,
            initial_mean: grid::mean(&f),
            state: f,
            dual,
            step: 0,
        })
    }

    pub fn params(&self) -> &FlowParams {
        self.solver.params()
    }

    /// Index `m` of the current state.
    pub fn step_index(&self) -> usize {
        self.step
    }

    /// Physical time `m δt` of the current state.
    pub fn time(&self) -> f64 {
        self.step as f64 * self.solver.params().dt
    }

    pub fn state(&self) -> &ScalarField {
        &self.state
    }

    pub fn dual(&self) -> &DualField {
        &self.dual
    }

    pub fn advance(&mut self) -> Result<StepDiagnostics> {
        if self.step >= self.solver.params().max_outer {
            return Err(Error::invalid(
                "max_outer",
                format!("step cap {} reached", self.solver.params().max_outer),
            ));
        }
        let StepResult { u, g, mut diagnostics } = self.solver.step(&self.state, &self.dual)?;
        diagnostics.mean_drift = (grid::mean(&u) - self.initial_mean).abs();
        self.state = u;
        self.dual = g;
        self.step += 1;
        Ok(diagnostics)
    }
}

#[derive(Debug, Clone)]
pub struct Trajectory {
    /// `states[m]` is `u^m`; `states[0]` is the initial datum.
    pub states: Vec<ScalarField>,
    /// `diagnostics[m - 1]` belongs to the step producing `u^m`.
    pub diagnostics: Vec<StepDiagnostics>,
}

/// Runs `m_steps` steps, calling `observer(m, u^m, diagnostics)` after
/// each one. Nothing is retained between steps.
pub fn evolve_with<F>(
    f: &ScalarField,
    params: &FlowParams,
    m_steps: usize,
    mut observer: F,
) -> Result<Vec<StepDiagnostics>>
where
    F: FnMut(usize, &ScalarField, &StepDiagnostics) -> Result<()>,
{
    if m_steps == 0 {
        return Err(Error::invalid("m_steps", "must be at least 1"));
    }
    if m_steps > params.max_outer {
        return Err(Error::invalid(
            "m_steps",
            format!("{m_steps} exceeds max_outer = {}", params.max_outer),
        ));
    }
    let mut stepper = FlowStepper::new(f.clone(), *params)?;
    let mut all = Vec::with_capacity(m_steps);
    for m in 1..=m_steps {
        let diag = stepper.advance()?;
        observer(m, stepper.state(), &diag)?;
        all.push(diag);
    }
    Ok(all)
}

/// Runs `m_steps` steps and keeps every state.
pub fn evolve(f: &ScalarField, params: &FlowParams, m_steps: usize) -> Result<Trajectory> {
    let mut states = vec![f.clone()];
    let diagnostics = evolve_with(f, params, m_steps, |_, u, _| {
        states.push(u.clone());
        Ok(())
    })?;
    Ok(Trajectory { states, diagnostics })
}
