//! Closed-form solutions: the sliced paraboloid (whole plane and truncated
//! to a disk), the two-level box facet with its extinction time, and the
//! traveling front of the regularized flow.
//!
//! Every closed form comes with its selection field so that the pointwise
//! residual `u_t - div(...)` can be evaluated region by region.

use crate::grid::{GridSpec, ScalarField};
use crate::{Error, Result};

/// Half-width of the square facet of the paraboloid solution.
pub fn xi(t: f64) -> f64 {
    (1.5 * t).cbrt()
}

/// Facet-height auxiliary `ξ(t)²`.
pub fn h_hat(t: f64) -> f64 {
    let x = xi(t);
    x * x
}

fn check_time(t: f64) -> Result<()> {
    if !(t.is_finite() && t >= 0.0) {
        return Err(Error::invalid("t", format!("must be finite and >= 0, got {t}")));
    }
    Ok(())
}

fn sgn(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Region {
    /// Flat square facet, both partial derivatives vanish.
    Facet,
    /// `|x₁| <= ξ < |x₂|`: `u_x1 = 0`, ruled along `x₁`.
    StripX1,
    /// `|x₂| <= ξ < |x₁|`: `u_x2 = 0`, ruled along `x₂`.
    StripX2,
    /// Untouched initial datum.
    Outer,
    /// Outside the support of a truncated solution.
    Zero,
}

/// Evolution of `x₁² + x₂² - 2R²`, optionally cut off to the disk `B(0, R)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ParaboloidSolution {
    radius: f64,
    truncated: bool,
}

impl ParaboloidSolution {
    pub fn new(radius: f64, truncated: bool) -> Result<Self> {
        if !(radius.is_finite() && radius > 0.0) {
            return Err(Error::invalid("R", format!("must be positive, got {radius}")));
        }
        Ok(Self { radius, truncated })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn truncated(&self) -> bool {
        self.truncated
    }

    /// End of the validity window of the truncated solution, `√2 R³ / 6`.
    pub fn t1(&self) -> f64 {
        std::f64::consts::SQRT_2 * self.radius.powi(3) / 6.0
    }

    /// Half-width `√(R² - ξ²)` of the support box.
    pub fn support_half_width(&self, t: f64) -> f64 {
        (self.radius * self.radius - h_hat(t)).max(0.0).sqrt()
    }

    fn check(&self, t: f64) -> Result<()> {
        check_time(t)?;
        if self.truncated && t >= self.t1() {
            return Err(Error::OutsideValidity { t, limit: self.t1() });
        }
        Ok(())
    }

    fn in_support(&self, x1: f64, x2: f64, t: f64) -> bool {
        let l = self.support_half_width(t);
        x1 * x1 + x2 * x2 < self.radius * self.radius && x1.abs() < l && x2.abs() < l
    }

    pub fn region(&self, x1: f64, x2: f64, t: f64) -> Result<Region> {
        self.check(t)?;
        if self.truncated && !self.in_support(x1, x2, t) {
            return Ok(Region::Zero);
        }
        let s = xi(t);
        let (a1, a2) = (x1.abs(), x2.abs());
        Ok(match (a1 <= s, a2 <= s) {
            (true, true) => Region::Facet,
            (true, false) => Region::StripX1,
            (false, true) => Region::StripX2,
            (false, false) => Region::Outer,
        })
    }

    pub fn eval(&self, x1: f64, x2: f64, t: f64) -> Result<(f64, Region)> {
        let region = self.region(x1, x2, t)?;
        let h = h_hat(t);
        let base = -2.0 * self.radius * self.radius;
        let value = match region {
            Region::Facet => 2.0 * h + base,
            Region::StripX1 => h + x2 * x2 + base,
            Region::StripX2 => h + x1 * x1 + base,
            Region::Outer => x1 * x1 + x2 * x2 + base,
            Region::Zero => 0.0,
        };
        Ok((value, region))
    }

    /// Exact `(u_x1, u_x2)` inside the open region containing `x`.
    pub fn gradient(&self, x1: f64, x2: f64, t: f64) -> Result<(f64, f64)> {
        Ok(match self.region(x1, x2, t)? {
            Region::Facet | Region::Zero => (0.0, 0.0),
            Region::StripX1 => (0.0, 2.0 * x2),
            Region::StripX2 => (2.0 * x1, 0.0),
            Region::Outer => (2.0 * x1, 2.0 * x2),
        })
    }

    /// Selection field of `(sgn u_x1, sgn u_x2)` used in the residual.
    pub fn selection(&self, x1: f64, x2: f64, t: f64) -> Result<(f64, f64)> {
        let region = self.region(x1, x2, t)?;
        let s = xi(t);
        let comp = |x: f64| if x.abs() <= s { x / s } else { sgn(x) };
        if region == Region::Zero {
            let l = self.support_half_width(t);
            let z1 = if x2.abs() > l { 0.0 } else { comp(x1) };
            let z2 = if x1.abs() > l { 0.0 } else { comp(x2) };
            return Ok((z1, z2));
        }
        Ok((comp(x1), comp(x2)))
    }

    /// Distance from `x` to the set where either piece of the closed form
    /// switches.
    pub fn seam_distance(&self, x1: f64, x2: f64, t: f64) -> f64 {
        let s = xi(t);
        let mut d = (x1.abs() - s).abs().min((x2.abs() - s).abs());
        if self.truncated {
            let l = self.support_half_width(t);
            let r = (x1 * x1 + x2 * x2).sqrt();
            d = d
                .min((x1.abs() - l).abs())
                .min((x2.abs() - l).abs())
                .min((r - self.radius).abs());
        }
        d
    }

    /// `|u_t - div L|` from the piecewise derivatives of the closed form.
    pub fn residual(&self, x1: f64, x2: f64, t: f64, delta: f64) -> Result<f64> {
        self.check(t)?;
        if t == 0.0 {
            return Err(Error::invalid("t", "residual needs t > 0"));
        }
        if self.seam_distance(x1, x2, t) < delta {
            return Err(Error::NearSeam { x1, x2, delta });
        }
        let s = xi(t);
        // dĥ/dt = 1/ξ
        let dh = 1.0 / s;
        let (u_t, div) = match self.region(x1, x2, t)? {
            Region::Facet => (2.0 * dh, 2.0 / s),
            Region::StripX1 | Region::StripX2 => (dh, 1.0 / s),
            // both selection components are locally constant
            Region::Outer | Region::Zero => (0.0, 0.0),
        };
        Ok((u_t - div).abs())
    }
}

/// Two-level solution for `-M χ` of the square `[-α, α]²` in the Neumann
/// square `[-L, L]²`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoxFacetSolution {
    alpha: f64,
    half_width: f64,
    depth: f64,
}

impl BoxFacetSolution {
    pub fn new(alpha: f64, half_width: f64, depth: f64) -> Result<Self> {
        if !(half_width.is_finite() && half_width > 0.0) {
            return Err(Error::invalid("L", format!("must be positive, got {half_width}")));
        }
        if !(alpha > 0.0 && alpha < half_width) {
            return Err(Error::invalid("alpha", format!("must lie in (0, L), got {alpha}")));
        }
        if !(depth.is_finite() && depth >= 0.0) {
            return Err(Error::invalid("M", format!("must be >= 0, got {depth}")));
        }
        Ok(Self {
            alpha,
            half_width,
            depth,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn half_width(&self) -> f64 {
        self.half_width
    }

    pub fn depth(&self) -> f64 {
        self.depth
    }

    fn outer_speed(&self) -> f64 {
        let (a, l) = (self.alpha, self.half_width);
        2.0 * a / (l * l - a * a)
    }

    /// `M (2/α + 2α/(L² - α²))⁻¹`, simplified to `M α (L² - α²) / (2L²)`.
    pub fn extinction_time(&self) -> f64 {
        let (a, l) = (self.alpha, self.half_width);
        self.depth * a * (l * l - a * a) / (2.0 * l * l)
    }

    /// `(inside, outside)` levels at time `t <= T_ext`.
    pub fn levels(&self, t: f64) -> Result<(f64, f64)> {
        check_time(t)?;
        let t_ext = self.extinction_time();
        if t > t_ext {
            return Err(Error::OutsideValidity { t, limit: t_ext });
        }
        Ok((2.0 * t / self.alpha - self.depth, -self.outer_speed() * t))
    }

    pub fn contains(&self, x1: f64, x2: f64) -> bool {
        x1.abs() <= self.alpha && x2.abs() <= self.alpha
    }

    pub fn eval(&self, x1: f64, x2: f64, t: f64) -> Result<f64> {
        let (inside, outside) = self.levels(t)?;
        Ok(if self.contains(x1, x2) { inside } else { outside })
    }

    /// Like [`eval`](Self::eval), continued by the stationary constant after
    /// extinction.
    pub fn eval_total(&self, x1: f64, x2: f64, t: f64) -> Result<f64> {
        check_time(t)?;
        let t_ext = self.extinction_time();
        if t >= t_ext {
            return Ok(-self.outer_speed() * t_ext);
        }
        self.eval(x1, x2, t)
    }
}

/// Rigidly translating solution of the regularized flow with `γ = β / 2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TravelingFront {
    alpha: f64,
    beta: f64,
    gamma: f64,
}

/// Region of the front: facet, one arm per axis, corners.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum FrontRegion {
    Facet,
    /// `|x₁| > α >= |x₂|`
    ArmX1,
    /// `|x₂| > α >= |x₁|`
    ArmX2,
    Corner,
}

impl TravelingFront {
    pub fn new(alpha: f64, beta: f64) -> Result<Self> {
        if !(alpha.is_finite() && alpha > 0.0) {
            return Err(Error::invalid("alpha", format!("must be positive, got {alpha}")));
        }
        if !(beta.is_finite() && beta > 0.0) {
            return Err(Error::invalid("beta", format!("must be positive, got {beta}")));
        }
        Ok(Self {
            alpha,
            beta,
            gamma: beta / 2.0,
        })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    pub fn gamma(&self) -> f64 {
        self.gamma
    }

    pub fn speed(&self) -> f64 {
        2.0 * self.beta / self.alpha
    }

    fn ramp(&self, s: f64) -> f64 {
        (s.abs() - self.alpha).max(0.0)
    }

    pub fn region(&self, x1: f64, x2: f64) -> FrontRegion {
        match (x1.abs() > self.alpha, x2.abs() > self.alpha) {
            (false, false) => FrontRegion::Facet,
            (true, false) => FrontRegion::ArmX1,
            (false, true) => FrontRegion::ArmX2,
            (true, true) => FrontRegion::Corner,
        }
    }

    pub fn eval(&self, x1: f64, x2: f64, t: f64) -> Result<f64> {
        check_time(t)?;
        let (r1, r2) = (self.ramp(x1), self.ramp(x2));
        Ok(self.speed() * t + (r1 * r1 + r2 * r2) / self.alpha)
    }

    pub fn gradient(&self, x1: f64, x2: f64) -> (f64, f64) {
        let a = self.alpha;
        (2.0 * self.ramp(x1) * sgn(x1) / a, 2.0 * self.ramp(x2) * sgn(x2) / a)
    }

    pub fn selection(&self, x1: f64, x2: f64) -> (f64, f64) {
        let comp = |x: f64| if x.abs() <= self.alpha { x / self.alpha } else { sgn(x) };
        (comp(x1), comp(x2))
    }

    pub fn seam_distance(&self, x1: f64, x2: f64) -> f64 {
        (x1.abs() - self.alpha).abs().min((x2.abs() - self.alpha).abs())
    }

    /// `|u_t - γ Δu - β div L|` in the open region containing `x`.
    pub fn residual(&self, x1: f64, x2: f64, t: f64, delta: f64) -> Result<f64> {
        check_time(t)?;
        if self.seam_distance(x1, x2) < delta {
            return Err(Error::NearSeam { x1, x2, delta });
        }
        let a = self.alpha;
        let (laplacian, div) = match self.region(x1, x2) {
            FrontRegion::Facet => (0.0, 2.0 / a),
            FrontRegion::ArmX1 | FrontRegion::ArmX2 => (2.0 / a, 1.0 / a),
            FrontRegion::Corner => (4.0 / a, 0.0),
        };
        Ok((self.speed() - self.gamma * laplacian - self.beta * div).abs())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ExactSolution {
    Paraboloid(ParaboloidSolution),
    BoxFacet(BoxFacetSolution),
    Front(TravelingFront),
}

impl ExactSolution {
    /// Pointwise value; the box facet is continued past extinction.
    pub fn eval(&self, x1: f64, x2: f64, t: f64) -> Result<f64> {
        match self {
            ExactSolution::Paraboloid(p) => p.eval(x1, x2, t).map(|(v, _)| v),
            ExactSolution::BoxFacet(b) => b.eval_total(x1, x2, t),
            ExactSolution::Front(f) => f.eval(x1, x2, t),
        }
    }
}

/// Samples the closed form at the grid points.
pub fn rasterize(oracle: &ExactSolution, grid: GridSpec, t: f64) -> Result<ScalarField> {
    ScalarField::try_from_fn(grid, |x1, x2| oracle.eval(x1, x2, t))
}
