//! Initial data: scaled indicators `f_S = -M χ_S` of balls and of the
//! composite set, Gaussian smoothing, thresholding, and synthetic glyphs.

pub mod glyphs;

use ndarray::Array2;

use crate::grid::{GridSpec, ScalarField};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum ShapeKind {
    /// `‖x - c‖₁ <= r`
    L1Ball,
    /// `‖x - c‖₂ <= r`
    L2Ball,
    /// `‖x - c‖∞ <= r`
    LinfBall,
    /// The diamond `‖x‖₁ <= r` with a small diamond attached at the upper
    /// right and one removed below the centre. For `r = 150` the attached
    /// diamond is `‖x - (125, 175)‖₁ <= 25` and the removed one
    /// `‖x + (0, 125)‖₁ <= 25`; other radii scale all lengths by `r / 150`.
    CompositeS4,
    /// Explicit membership mask in grid layout.
    CustomMask(Array2<bool>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShapeSpec {
    pub kind: ShapeKind,
    pub radius: f64,
    pub center: (f64, f64),
    /// Depth `M > 0`; the generated field is `-M` on the set.
    pub depth: f64,
}

impl ShapeSpec {
    pub fn centered(kind: ShapeKind, radius: f64, depth: f64) -> Self {
        Self {
            kind,
            radius,
            center: (0.0, 0.0),
            depth,
        }
    }

    /// Closed-set membership test (boundary included).
    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        let (y1, y2) = (x1 - self.center.0, x2 - self.center.1);
        let r = self.radius;
        match &self.kind {
            ShapeKind::L1Ball => y1.abs() + y2.abs() <= r,
            ShapeKind::L2Ball => (y1 * y1 + y2 * y2).sqrt() <= r,
            ShapeKind::LinfBall => y1.abs().max(y2.abs()) <= r,
            ShapeKind::CompositeS4 => {
                let s = r / 150.0;
                let diamond = |c1: f64, c2: f64, rad: f64| (y1 - c1).abs() + (y2 - c2).abs() <= rad;
                let base = y1.abs() + y2.abs() <= r;
                let attached = diamond(125.0 * s, 175.0 * s, 25.0 * s);
                let removed = diamond(0.0, -125.0 * s, 25.0 * s);
                (base || attached) && !removed
            }
            ShapeKind::CustomMask(_) => false,
        }
    }

    /// Largest coordinate reached by the set, relative to its centre.
    fn extent(&self) -> f64 {
        match self.kind {
            ShapeKind::CompositeS4 => self.radius * 200.0 / 150.0,
            _ => self.radius,
        }
    }
}

/// `f(x) = -M` on the closed set, `0` elsewhere.
pub fn make_shape(spec: &ShapeSpec, grid: GridSpec) -> Result<ScalarField> {
    if !(spec.depth.is_finite() && spec.depth > 0.0) {
        return Err(Error::invalid("depth", format!("must be positive, got {}", spec.depth)));
    }
    if let ShapeKind::CustomMask(mask) = &spec.kind {
        if mask.dim() != (grid.n(), grid.n()) {
            return Err(Error::GridMismatch(format!(
                "mask has shape {:?}, grid is {}x{}",
                mask.dim(),
                grid.n(),
                grid.n()
            )));
        }
        let values = mask.mapv(|inside| if inside { -spec.depth } else { 0.0 });
        return ScalarField::new(grid, values);
    }
    let reach = spec.extent() + spec.center.0.abs().max(spec.center.1.abs());
    if !(spec.radius > 0.0) || reach >= grid.half_width() {
        return Err(Error::invalid(
            "radius",
            format!(
                "set must fit strictly inside the domain: reach {reach} vs L = {}",
                grid.half_width()
            ),
        ));
    }
    ScalarField::from_fn(grid, |x1, x2| if spec.contains(x1, x2) { -spec.depth } else { 0.0 })
}

/// Normalised sampled Gaussian, half-width `ceil(4σ)` samples.
pub(crate) fn gaussian_kernel(sigma_samples: f64) -> Vec<f64> {
    let radius = (4.0 * sigma_samples).ceil() as usize;
    let mut w: Vec<f64> = (0..=2 * radius)
        .map(|k| {
            let d = k as f64 - radius as f64;
            (-d * d / (2.0 * sigma_samples * sigma_samples)).exp()
        })
        .collect();
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Half-sample symmetric reflection, period `2n`.
pub(crate) fn reflect(index: isize, n: usize) -> usize {
    let period = 2 * n as isize;
    let m = index.rem_euclid(period) as usize;
    if m < n {
        m
    } else {
        2 * n - 1 - m
    }
}

/// Separable convolution with a truncated Gaussian of standard deviation
/// `sigma` (physical units), reflecting at the boundary.
pub fn gaussian_blur(u: &ScalarField, sigma: f64) -> Result<ScalarField> {
    if !(sigma.is_finite() && sigma >= 0.0) {
        return Err(Error::invalid("sigma", format!("must be >= 0, got {sigma}")));
    }
    if sigma == 0.0 {
        return Ok(u.clone());
    }
    let grid = *u.grid();
    let n = grid.n();
    let kernel = gaussian_kernel(sigma / grid.spacing());
    let radius = (kernel.len() / 2) as isize;
    let src = u.values();

    let mut rows = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let jj = reflect(j as isize + k as isize - radius, n);
                acc += w * src[[i, jj]];
            }
            rows[[i, j]] = acc;
        }
    }
    let mut out = Array2::zeros((n, n));
    for i in 0..n {
        for j in 0..n {
            let mut acc = 0.0;
            for (k, w) in kernel.iter().enumerate() {
                let ii = reflect(i as isize + k as isize - radius, n);
                acc += w * rows[[ii, j]];
            }
            out[[i, j]] = acc;
        }
    }
    ScalarField::new(grid, out)
}

/// Binary field: `-depth` where `u <= level` (dark), `0` elsewhere.
pub fn threshold(u: &ScalarField, level: f64, depth: f64) -> ScalarField {
    let values = u.values().mapv(|v| if v <= level { -depth } else { 0.0 });
    ScalarField::new(*u.grid(), values).expect("binary values are finite")
}

/// Number of samples where the two fields differ.
pub fn symmetric_difference(a: &ScalarField, b: &ScalarField) -> Result<usize> {
    a.check_same_grid(b)?;
    Ok(a.values()
        .iter()
        .zip(b.values().iter())
        .filter(|(x, y)| x != y)
        .count())
}
