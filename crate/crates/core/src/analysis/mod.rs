//! Measurements on computed states: contours, cross-sections, facet and
//! ruled-strip areas, and power-law fits of decay rates.

mod contour;

pub use contour::{extract_contours, ContourSet};

use std::fmt::Write as _;

use crate::flow::StepDiagnostics;
use crate::grid::{grad, ScalarField};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// The line `x₁ = c`, parametrised by `x₂`.
    X1,
    /// The line `x₂ = c`, parametrised by `x₁`.
    X2,
}

/// Samples along the grid line nearest to `axis = coordinate`, ordered by
/// the free coordinate.
pub fn cross_section(u: &ScalarField, axis: Axis, coordinate: f64) -> Result<Vec<(f64, f64)>> {
    let grid = u.grid();
    let l = grid.half_width();
    if !(coordinate.abs() <= l) {
        return Err(Error::invalid(
            "coordinate",
            format!("{coordinate} is outside [-{l}, {l}]"),
        ));
    }
    let n = grid.n();
    let (i0, j0) = match axis {
        Axis::X1 => grid.nearest_index(coordinate, 0.0),
        Axis::X2 => grid.nearest_index(0.0, coordinate),
    }
    .expect("coordinate checked above");
    Ok(match axis {
        // x₂ increases with decreasing row index
        Axis::X1 => (0..n).rev().map(|i| (grid.x2(i), u.get(i, j0))).collect(),
        Axis::X2 => (0..n).map(|j| (grid.x1(j), u.get(i0, j))).collect(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FacetReport {
    /// Area where both forward differences are below `eps_f`. Each sample
    /// owns `h²`, halved on the boundary and quartered at corners.
    pub facet_area: f64,
    /// Area where `|D₁u| < eps_f <= |D₂u|`.
    pub strip_area_x1: f64,
    /// Area where `|D₂u| < eps_f <= |D₁u|`.
    pub strip_area_x2: f64,
    /// Area of `{u <= min u + eps_m}`.
    pub min_level_area: f64,
    pub eps_f: f64,
    pub eps_m: f64,
}

/// `(1e-3 · range / 2L, 1e-3 · range)`, with a tiny positive floor so that
/// constant fields still get valid thresholds.
pub fn default_thresholds(u: &ScalarField) -> (f64, f64) {
    let range = u.max() - u.min();
    let eps_m = (1e-3 * range).max(1e-300);
    let eps_f = (eps_m / (2.0 * u.grid().half_width())).max(1e-300);
    (eps_f, eps_m)
}

pub fn facet_report(u: &ScalarField, eps_f: f64, eps_m: f64) -> Result<FacetReport> {
    if !(eps_f > 0.0 && eps_m > 0.0) {
        return Err(Error::invalid("eps", format!("thresholds must be positive, got ({eps_f}, {eps_m})")));
    }
    let d = grad(u);
    let n = u.grid().n();
    let cell = u.grid().cell_area();
    let floor = u.min() + eps_m;
    // trapezoid weights: the sample areas add up to exactly (2L)²
    let w = |k: usize| if k == 0 || k == n - 1 { 0.5 } else { 1.0 };
    let (mut facet, mut s1, mut s2, mut low) = (0.0, 0.0, 0.0, 0.0);
    for ((((i, j), &a), &b), &v) in d.g1().indexed_iter().zip(d.g2().iter()).zip(u.values().iter()) {
        let weight = w(i) * w(j);
        match (a.abs() < eps_f, b.abs() < eps_f) {
            (true, true) => facet += weight,
            (true, false) => s1 += weight,
            (false, true) => s2 += weight,
            (false, false) => {}
        }
        if v <= floor {
            low += weight;
        }
    }
    Ok(FacetReport {
        facet_area: facet * cell,
        strip_area_x1: s1 * cell,
        strip_area_x2: s2 * cell,
        min_level_area: low * cell,
        eps_f,
        eps_m,
    })
}

/// Least-squares slope of `log y` against `log x`.
pub fn power_law_slope(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Degenerate("sample lists differ in length".into()));
    }
    if x.len() < 5 {
        return Err(Error::Degenerate(format!("need at least 5 samples, got {}", x.len())));
    }
    if x.iter().chain(y).any(|&v| !(v > 0.0 && v.is_finite())) {
        return Err(Error::Degenerate("samples must be positive and finite".into()));
    }
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let k = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / k;
    let my = ly.iter().sum::<f64>() / k;
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all sample times coincide".into()));
    }
    Ok(sxy / sxx)
}

/// Slope of `log r_m` against `log(m δt)` for `m` in `window`, where
/// `r_m = ‖u^m - u^{m-1}‖₂ / δt` and `diagnostics[m - 1]` belongs to step `m`.
pub fn decay_fit(diagnostics: &[StepDiagnostics], dt: f64, window: std::ops::RangeInclusive<usize>) -> Result<f64> {
    if *window.start() == 0 || *window.end() > diagnostics.len() {
        return Err(Error::Degenerate(format!(
            "window {:?} does not fit {} steps",
            window,
            diagnostics.len()
        )));
    }
    let (times, rates): (Vec<f64>, Vec<f64>) = window
        .map(|m| (m as f64 * dt, diagnostics[m - 1].increment_norm / dt))
        .unzip();
    power_law_slope(&times, &rates)
}

/// One row of the per-snapshot report table.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ReportRow {
    pub t: f64,
    pub facets: FacetReport,
    pub energy: f64,
    pub rate: f64,
}

pub fn report_csv(rows: &[ReportRow]) -> String {
    let mut out = String::from("t,facet_area,strip_area_x1,strip_area_x2,min_level_area,energy,rate\n");
    for r in rows {
        writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.t,
            r.facets.facet_area,
            r.facets.strip_area_x1,
            r.facets.strip_area_x2,
            r.facets.min_level_area,
            r.energy,
            r.rate
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exact::{xi, BoxFacetSolution, ExactSolution, ParaboloidSolution, Region};
    use crate::exact::rasterize;
    use crate::grid::GridSpec;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn diag(increment: f64) -> StepDiagnostics {
        StepDiagnostics {
            inner_iterations: 1,
            final_relative_change: 0.0,
            converged: true,
            dual_feasibility_excess: 0.0,
            mean_drift: 0.0,
            increment_norm: increment,
            energy: 0.0,
        }
    }

    #[test]
    fn constant_cross_section() {
        let u = ScalarField::constant(GridSpec::pixel(9).unwrap(), 1.5);
        let s = cross_section(&u, Axis::X1, 0.0).unwrap();
        assert_eq!(s.len(), 9);
        assert!(s.iter().all(|&(_, v)| v == 1.5));
        assert!(s.windows(2).all(|w| w[0].0 < w[1].0));
        assert!(cross_section(&u, Axis::X2, 4.5).is_err());
    }

    #[test]
    fn box_facet_cross_section_is_two_valued() {
        let grid = GridSpec::pixel(501).unwrap();
        let b = ExactSolution::BoxFacet(BoxFacetSolution::new(150.0, 250.0, 50.0).unwrap());
        let u = rasterize(&b, grid, 700.0).unwrap();
        for (x2, v) in cross_section(&u, Axis::X1, 0.0).unwrap() {
            let expected = if x2.abs() <= 150.0 { -40.0 - 2.0 / 3.0 } else { -5.25 };
            assert!((v - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn symmetric_field_sections_coincide() {
        let grid = GridSpec::pixel(21).unwrap();
        let u = ScalarField::from_fn(grid, |x1, x2| (x1 * x2).cos() + x1 * x1 + x2 * x2).unwrap();
        let a = cross_section(&u, Axis::X1, 0.0).unwrap();
        let b = cross_section(&u, Axis::X2, 0.0).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn box_facet_report() {
        let grid = GridSpec::pixel(501).unwrap();
        let b = BoxFacetSolution::new(150.0, 250.0, 50.0).unwrap();
        for t in [10.0, 700.0, 2000.0] {
            let u = rasterize(&ExactSolution::BoxFacet(b), grid, t).unwrap();
            let (ef, em) = default_thresholds(&u);
            let r = facet_report(&u, ef, em).unwrap();
            assert!(r.facet_area >= 300.0 * 300.0);
            assert!(r.min_level_area >= 300.0 * 300.0);
            let total = r.facet_area + r.strip_area_x1 + r.strip_area_x2;
            assert!(total <= grid.domain_area() + 1e-9);
        }
    }

    #[test]
    fn paraboloid_has_ruled_strips() {
        let grid = GridSpec::new(201, 3.0).unwrap();
        let p = ParaboloidSolution::new(2.0, false).unwrap();
        let t = 2.0 / 3.0;
        let u = rasterize(&ExactSolution::Paraboloid(p), grid, t).unwrap();
        let (ef, em) = default_thresholds(&u);
        let r = facet_report(&u, ef, em).unwrap();
        assert!(r.strip_area_x1 > 0.0 && r.strip_area_x2 > 0.0);
        assert_eq!(r.strip_area_x1, r.strip_area_x2);
        // closed-form strip area: |x₁| <= ξ, ξ < |x₂| <= L
        let s = xi(t);
        let exact = 2.0 * s * 2.0 * (3.0 - s);
        assert!((r.strip_area_x1 - exact).abs() < 0.1 * exact, "{} vs {exact}", r.strip_area_x1);
        let mut counted = 0usize;
        for i in 0..grid.n() {
            for j in 0..grid.n() {
                let (x1, x2) = grid.coords(i, j);
                if p.region(x1, x2, t).unwrap() == Region::Facet {
                    counted += 1;
                }
            }
        }
        assert!(r.facet_area >= 0.5 * counted as f64 * grid.cell_area());
    }

    #[test]
    fn noise_has_no_facets() {
        let grid = GridSpec::pixel(30).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let u = ScalarField::from_fn(grid, |_, _| rng.random_range(-1.0..1.0)).unwrap();
        let r = facet_report(&u, 1e-9, 1e-9).unwrap();
        // only the last row and column, where both differences vanish by convention
        assert!(r.facet_area <= 0.25 * grid.cell_area());
        assert!(facet_report(&u, 0.0, 1.0).is_err());
    }

    #[test]
    fn decay_fit_examples() {
        let d: Vec<_> = (1..=100).map(|m| diag((m as f64).powf(-0.5))).collect();
        assert!((decay_fit(&d, 1.0, 10..=100).unwrap() + 0.5).abs() < 1e-6);
        let c: Vec<_> = (1..=20).map(|_| diag(0.3)).collect();
        assert!(decay_fit(&c, 2.0, 1..=20).unwrap().abs() < 1e-12);
        assert!(decay_fit(&c, 1.0, 1..=3).is_err());
        assert!(decay_fit(&c, 1.0, 0..=10).is_err());
        let z: Vec<_> = (1..=20).map(|_| diag(0.0)).collect();
        assert!(decay_fit(&z, 1.0, 1..=20).is_err());
    }

    #[test]
    fn paraboloid_facet_growth_exponent() {
        let grid = GridSpec::new(401, 4.0).unwrap();
        let p = ExactSolution::Paraboloid(ParaboloidSolution::new(2.0, false).unwrap());
        let times: Vec<f64> = (1..=8).map(|k| 0.25 * k as f64).collect();
        let areas: Vec<f64> = times
            .iter()
            .map(|&t| {
                let u = rasterize(&p, grid, t).unwrap();
                let (ef, em) = default_thresholds(&u);
                facet_report(&u, ef, em).unwrap().facet_area
            })
            .collect();
        let slope = power_law_slope(&times, &areas).unwrap();
        assert!((slope - 2.0 / 3.0).abs() < 0.05, "{slope}");
    }

    #[test]
    fn csv_header_and_rows() {
        let f = FacetReport {
            facet_area: 1.0,
            strip_area_x1: 2.0,
            strip_area_x2: 3.0,
            min_level_area: 4.0,
            eps_f: 0.1,
            eps_m: 0.2,
        };
        let csv = report_csv(&[ReportRow { t: 0.5, facets: f, energy: 7.0, rate: 0.25 }]);
        assert_eq!(csv, "t,facet_area,strip_area_x1,strip_area_x2,min_level_area,energy,rate\n0.5,1,2,3,4,7,0.25\n");
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn areas_are_bounded(seed in any::<u64>(), n in 2usize..20, ef in 1e-6f64..2.0, em in 1e-6f64..2.0) {
                let grid = GridSpec::pixel(n).unwrap();
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let u = ScalarField::from_fn(grid, |_, _| rng.random_range(-1.0..1.0)).unwrap();
                let r = facet_report(&u, ef, em).unwrap();
                let cap = grid.domain_area() * (1.0 + 1e-12);
                for a in [r.facet_area, r.strip_area_x1, r.strip_area_x2, r.min_level_area] {
                    prop_assert!(a >= 0.0 && a <= cap);
                }
                prop_assert!(r.facet_area + r.strip_area_x1 + r.strip_area_x2 <= cap);
                prop_assert!(r.min_level_area > 0.0);
            }
        }
    }
}
