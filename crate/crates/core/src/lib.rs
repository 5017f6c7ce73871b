//! Numerics for the anisotropic total variation flow
//!
//! ```text
//! u_t = β div(sgn u_x1, sgn u_x2)            (pure flow, γ = 0)
//! u_t = γ Δu + β div(sgn u_x1, sgn u_x2)     (regularized flow)
//! ```
//!
//! on a square with homogeneous Neumann boundary conditions. Each implicit
//! time step is a proximal problem solved by a dual fixed-point iteration
//! in the style of Chambolle's projection algorithm; the dual field is
//! constrained componentwise, `max(|g1|, |g2|) <= 1`.
//!
//! The crate is organised bottom-up:
//!
//! - [`grid`]: grids, scalar and dual fields, difference operators, energies
//! - [`linsolve`]: the Neumann elliptic operator `I - γΔ` and its fast solve
//! - [`flow`]: the inner fixed-point iteration and the outer time stepper
//! - [`exact`]: closed-form solutions used as oracles
//! - [`shapes`]: initial data, smoothing, thresholding and synthetic glyphs
//! - [`imageio`]: portable graymap / PNG input and output, raw field files
//! - [`analysis`]: contours, cross sections, facet detection, decay fits

pub mod analysis;
pub mod error;
pub mod exact;
pub mod flow;
pub mod grid;
pub mod imageio;
pub mod linsolve;
pub mod shapes;

pub use error::{Error, Result};
pub use grid::{DualField, GridSpec, ScalarField};
