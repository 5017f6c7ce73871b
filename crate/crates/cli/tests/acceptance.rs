//! Acceptance battery for the solver and the experiment runner.
//!
//! Every test prints exactly one `criterion N: PASS|FAIL ...` line and then
//! asserts. All tolerances live in the constants below. The bundled full
//! suite is run once and shared by the criteria that inspect its runs.

use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use anitv::analysis::{decay_fit, default_thresholds, facet_report, power_law_slope};
use anitv::exact::{rasterize, xi, BoxFacetSolution, ExactSolution, ParaboloidSolution, Region, TravelingFront};
use anitv::flow::{evolve, prox_step, solve_tv_step_reference, FlowParams, ReferenceOptions};
use anitv::grid::{l2_diff, linf_diff};
use anitv::linsolve::{inverse_power_iteration, EllipticOperator};
use anitv::{DualField, GridSpec, ScalarField};
use anitv_cli::bundled;
use anitv_cli::compare::{compare, level_distance, CompareReport};
use anitv_cli::config::{ConfigSource, ExperimentConfig};
use anitv_cli::run::{run, RunReport, ENERGY_SLACK};
use anitv_cli::suite::{run_suite, SuiteReport, FEASIBILITY_LIMIT, MEAN_DRIFT_LIMIT};
use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

// criterion 1
const C1_LEVEL_TOL: f64 = 0.05;
const C1_TARGETS: [(usize, [f64; 2]); 3] = [(70, [-5.25, -40.67]), (140, [-10.5, -31.33]), (210, [-15.75, -22.0])];
/// 0.05 relative to the depth 50, applied to the depth 12.5 of the 129 variant.
const C1_LEVEL_TOL_129: f64 = 0.0125;
// criterion 2
const C2_FINAL_LEVEL: f64 = -18.0;
const C2_TOL: f64 = 0.1;
const C2_TOL_129: f64 = 0.025;
const C2_EXTINCTION: f64 = 2400.0;
const C2_EXTINCTION_129: f64 = 150.0;
// criterion 3
const C3_RESIDUAL_TOL: f64 = 1e-12;
const C3_CONTINUITY_TOL: f64 = 1e-12;
const C3_SAMPLES_PER_REGION: usize = 100;
const C3_SEGMENTS: usize = 20;
const C3_SEAM_DELTA: f64 = 1e-6;
// criterion 4
const C4_RELATIVE_TOL: f64 = 0.02;
// criterion 5
const C5_ORDER_TOL: f64 = 1e-8;
const C5_CONTRACTION_SLACK: f64 = 1e-9;
const C5_CASES: u32 = 8;
// criterion 6
const C6_TAU: f64 = 0.12;
const C6_TOL: f64 = 1e-5;
const C6_MAX_INNER: i64 = 10_000;
const C6_PROX_TOL: f64 = 5e-3;
const C6_LAMBDA_TOL: f64 = 1e-10;
/// The default 1e-11 is unreachable for some pure-flow instances.
const C6_REFERENCE_GRAD_TOL: f64 = 1e-10;
// criterion 7
const C7_RUNS: [&str; 2] = ["s2_tv_65", "s2_diffusive_65"];
const C7_FIRST_STEP: usize = 5;
const C7_EXPONENT: f64 = 2.0 / 3.0;
const C7_EXPONENT_TOL: f64 = 0.05;
// criterion 8
const C8_MAX_SLOPE: f64 = -0.3;
// criterion 9
const C9_STEP: usize = 15;

fn report(criterion: u32, passed: bool, detail: &str) {
    let verdict = if passed { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {criterion}: {verdict} {detail}").unwrap();
    out.flush().unwrap();
}

fn scratch(name: &str) -> PathBuf {
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join("acceptance").join(name);
    if dir.exists() {
        std::fs::remove_dir_all(&dir).unwrap();
    }
    dir
}

fn bundled_source(name: &str) -> ConfigSource {
    ConfigSource::load(&format!("bundled:{name}")).unwrap()
}

struct FullSuite {
    dir: PathBuf,
    report: SuiteReport,
}

impl FullSuite {
    fn run(&self, name: &str) -> &RunReport {
        self.report
            .runs
            .iter()
            .find(|r| r.name == name)
            .unwrap_or_else(|| panic!("suite has no run {name}"))
    }

    fn compare(&self, config: &str) -> CompareReport {
        let src = bundled_source(config);
        let cfg: anitv_cli::compare::CompareConfig = src.parse().unwrap();
        let run_src = ConfigSource::load(&cfg.compare.run_config).unwrap();
        let run_cfg: ExperimentConfig = run_src.parse().unwrap();
        let run_dir = self.dir.join(&run_cfg.experiment.name);
        let out = self.dir.join(format!("acceptance_{config}"));
        compare(&src, Some(&run_dir), Some(&out), false).unwrap()
    }
}

fn full_suite() -> &'static FullSuite {
    static SUITE: OnceLock<FullSuite> = OnceLock::new();
    SUITE.get_or_init(|| {
        let dir = scratch("suite_full");
        let report = run_suite(&bundled_source("suite_full"), Some(&dir)).unwrap();
        FullSuite { dir, report }
    })
}

fn fmt_levels(levels: &[f64]) -> String {
    levels.iter().map(|l| format!("{l:.3}")).collect::<Vec<_>>().join("/")
}

#[test]
fn criterion_01_square_pit_levels() {
    let suite = full_suite();
    let full = suite.compare("compare_fig4_square");
    let mut passed = true;
    let mut detail = Vec::new();
    for (m, target) in C1_TARGETS {
        let levels = &full.run_levels[&m];
        let d = level_distance(levels, &target);
        passed &= d <= C1_LEVEL_TOL;
        detail.push(format!("m={m} levels {} err {d:.4}", fmt_levels(levels)));
    }
    let scaled = suite.compare("compare_fig4_square_129");
    for row in &scaled.rows {
        passed &= row.error <= C1_LEVEL_TOL_129;
        detail.push(format!("129 m={} err {:.4}", row.step, row.error));
    }
    report(
        1,
        passed,
        &format!("(tol {C1_LEVEL_TOL}, 129 tol {C1_LEVEL_TOL_129}) {}", detail.join("; ")),
    );
    assert!(passed, "square pit levels off: {detail:?}");
}

#[test]
fn criterion_02_extinction() {
    let suite = full_suite();
    let b = BoxFacetSolution::new(150.0, 250.0, 50.0).unwrap();
    let b129 = BoxFacetSolution::new(37.5, 62.5, 12.5).unwrap();
    let formula_ok = b.extinction_time() == C2_EXTINCTION && b129.extinction_time() == C2_EXTINCTION_129;

    let u = suite.run("fig4_square").snapshot(240).unwrap();
    let err = u.values().iter().fold(0.0f64, |m, &v| m.max((v - C2_FINAL_LEVEL).abs()));
    let u129 = suite.run("fig4_square_129").snapshot(240).unwrap();
    let err129 = u129
        .values()
        .iter()
        .fold(0.0f64, |m, &v| m.max((v - C2_FINAL_LEVEL / 4.0).abs()));
    let passed = formula_ok && err <= C2_TOL && err129 <= C2_TOL_129;
    report(
        2,
        passed,
        &format!(
            "T_ext {} / {} exact: {formula_ok}; linf to constant {err:.4} (tol {C2_TOL}), 129: {err129:.4} (tol {C2_TOL_129})",
            b.extinction_time(),
            b129.extinction_time()
        ),
    );
    assert!(passed);
}

/// Points on either side of `x`, one float apart.
fn straddle(x: f64) -> (f64, f64) {
    (x.next_down(), x.next_up())
}

#[test]
fn criterion_03_oracle_residuals_and_continuity() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst_residual = 0.0f64;
    let mut worst_jump = 0.0f64;
    let mut counts = Vec::new();

    for truncated in [false, true] {
        let p = ParaboloidSolution::new(2.0, truncated).unwrap();
        let t_max = if truncated { 0.99 * p.t1() } else { 3.0 };
        let mut per_region = std::collections::HashMap::<Region, usize>::new();
        let expected = if truncated { 5 } else { 4 };
        let mut draws = 0;
        while (per_region.len() < expected || per_region.values().any(|&c| c < C3_SAMPLES_PER_REGION)) && draws < 1_000_000 {
            draws += 1;
            let t = rng.random_range(0.01..t_max);
            let (x1, x2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if p.seam_distance(x1, x2, t) < C3_SEAM_DELTA {
                continue;
            }
            let region = p.region(x1, x2, t).unwrap();
            worst_residual = worst_residual.max(p.residual(x1, x2, t, C3_SEAM_DELTA).unwrap());
            *per_region.entry(region).or_default() += 1;
        }
        let min_count = if per_region.len() == expected { *per_region.values().min().unwrap() } else { 0 };
        counts.push(min_count);

        for k in 0..C3_SEGMENTS {
            let t = t_max * (k as f64 + 1.0) / (C3_SEGMENTS as f64 + 1.0);
            let s = xi(t);
            let along = s * rng.random_range(-0.99..0.99);
            let (a, b) = straddle(s);
            for (p1, p2) in [((a, along), (b, along)), ((along, a), (along, b))] {
                let jump = (p.eval(p1.0, p1.1, t).unwrap().0 - p.eval(p2.0, p2.1, t).unwrap().0).abs();
                worst_jump = worst_jump.max(jump);
            }
        }
    }

    for (alpha, beta) in [(1.0, 1.0), (0.5, 2.0)] {
        let f = TravelingFront::new(alpha, beta).unwrap();
        let mut per_region = std::collections::HashMap::new();
        while per_region.len() < 4 || per_region.values().any(|&c| c < C3_SAMPLES_PER_REGION) {
            let t = rng.random_range(0.0..5.0);
            let (x1, x2) = (rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0));
            if f.seam_distance(x1, x2) < C3_SEAM_DELTA {
                continue;
            }
            worst_residual = worst_residual.max(f.residual(x1, x2, t, C3_SEAM_DELTA).unwrap());
            *per_region.entry(f.region(x1, x2)).or_insert(0usize) += 1;
        }
        counts.push(*per_region.values().min().unwrap());

        for _ in 0..C3_SEGMENTS {
            let t = rng.random_range(0.0..5.0);
            let along = rng.random_range(-3.0..3.0);
            let (a, b) = straddle(alpha);
            for (p1, p2) in [((a, along), (b, along)), ((along, -a), (along, -b))] {
                let jump = (f.eval(p1.0, p1.1, t).unwrap() - f.eval(p2.0, p2.1, t).unwrap()).abs();
                worst_jump = worst_jump.max(jump);
            }
        }
    }

    let enough = counts.iter().all(|&c| c >= C3_SAMPLES_PER_REGION);
    let passed = enough && worst_residual <= C3_RESIDUAL_TOL && worst_jump <= C3_CONTINUITY_TOL;
    report(
        3,
        passed,
        &format!(
            "worst residual {worst_residual:.2e}, worst seam jump {worst_jump:.2e} (tol {C3_RESIDUAL_TOL:e}); min samples per region {counts:?}"
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_04_paraboloid_field_match() {
    let suite = full_suite();
    let cmp = suite.compare("compare_paraboloid_65");
    let grid = *suite.run("paraboloid_65").snapshot(0).unwrap().grid();
    let oracle = ExactSolution::Paraboloid(ParaboloidSolution::new(10.0, true).unwrap());
    let mut passed = !cmp.rows.is_empty();
    let mut detail = Vec::new();
    for row in &cmp.rows {
        let exact = rasterize(&oracle, grid, row.time).unwrap();
        let tol = C4_RELATIVE_TOL * (exact.max() - exact.min());
        passed &= row.error <= tol;
        detail.push(format!("m={} err {:.3} tol {tol:.3}", row.step, row.error));
    }
    report(4, passed, &detail.join("; "));
    assert!(passed);
}

fn run_key(r: &RunReport) -> String {
    let p = &r.params;
    let g = r.initial.field.grid();
    let steps: Vec<usize> = r.snapshots.iter().map(|(m, _)| *m).collect();
    format!("{} {} {:?} {} {} {} {:?}", g.n(), g.half_width(), p.gamma, p.beta, p.dt, p.tau, steps)
}

fn ordered_pairs_stay_ordered() -> Result<(), String> {
    let grid = GridSpec::pixel(16).unwrap();
    let make = move |v: Vec<f64>| ScalarField::new(grid, Array2::from_shape_vec((16, 16), v).unwrap()).unwrap();
    let mut runner = TestRunner::new(ProptestConfig {
        cases: C5_CASES,
        ..ProptestConfig::default()
    });
    let strategy = (
        prop::collection::vec(-10.0..10.0f64, 256),
        prop::collection::vec(0.0..5.0f64, 256),
        any::<bool>(),
    );
    runner
        .run(&strategy, |(base, bump, regularized)| {
            let f = make(base.clone());
            let g = make(base.iter().zip(&bump).map(|(a, b)| a + b).collect());
            let gamma = if regularized { 0.2 } else { 0.0 };
            let params = FlowParams::new(gamma, 1.0, 1.0, 0.12, 1e-12, 200_000, 3).unwrap();
            let a = evolve(&f, &params, 3).unwrap();
            let b = evolve(&g, &params, 3).unwrap();
            for (u, v) in a.states.iter().zip(&b.states) {
                let worst = (u.values() - v.values()).fold(f64::NEG_INFINITY, |m, &x| m.max(x));
                prop_assert!(worst <= C5_ORDER_TOL, "ordering violated by {}", worst);
            }
            Ok(())
        })
        .map_err(|e| e.to_string())
}

#[test]
fn criterion_05_invariants() {
    let suite = full_suite();
    let mut failures = Vec::new();
    let experiments: Vec<String> = bundled::experiment_names()
        .into_iter()
        .map(|n| bundled_source(n).parse::<ExperimentConfig>().unwrap().experiment.name)
        .collect();
    for name in &experiments {
        let Some(r) = suite.report.runs.iter().find(|r| &r.name == name) else {
            failures.push(format!("{name}: missing"));
            continue;
        };
        if r.max_mean_drift() > MEAN_DRIFT_LIMIT {
            failures.push(format!("{name}: mean drift {:.2e}", r.max_mean_drift()));
        }
        if r.max_feasibility_excess() > FEASIBILITY_LIMIT {
            failures.push(format!("{name}: feasibility {:.2e}", r.max_feasibility_excess()));
        }
        if !r.energy_monotone() {
            failures.push(format!("{name}: energy rose (slack {ENERGY_SLACK:e})"));
        }
    }

    let runs = &suite.report.runs;
    let mut pairs = 0;
    for (k, a) in runs.iter().enumerate() {
        for b in &runs[k + 1..] {
            if run_key(a) != run_key(b) {
                continue;
            }
            pairs += 1;
            let mut last = f64::INFINITY;
            for ((m, u), (_, v)) in a.snapshots.iter().zip(&b.snapshots) {
                let d = l2_diff(u, v).unwrap();
                if d > last * (1.0 + C5_CONTRACTION_SLACK) {
                    failures.push(format!("{}/{} m={m}: distance {d} > {last}", a.name, b.name));
                }
                last = d;
            }
        }
    }

    if let Err(e) = ordered_pairs_stay_ordered() {
        failures.push(format!("comparison principle: {e}"));
    }
    let passed = failures.is_empty() && pairs > 0;
    report(
        5,
        passed,
        &format!(
            "{} configs, {pairs} paired runs, {C5_CASES} ordered pairs (drift {MEAN_DRIFT_LIMIT:e}, feasibility {FEASIBILITY_LIMIT:e}); failures {failures:?}",
            experiments.len()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_06_convergence_at_tau_0_12() {
    let mut failures = Vec::new();
    let names = bundled::experiment_names();
    for name in &names {
        let src = bundled_source(name)
            .with_override("params", "tau", C6_TAU)
            .and_then(|s| s.with_override("params", "tol", C6_TOL))
            .and_then(|s| s.with_override("params", "max_inner", C6_MAX_INNER))
            .unwrap();
        let r = run(&src, Some(&scratch(&format!("tau_{name}")))).unwrap();
        let bad = r
            .diagnostics
            .iter()
            .filter(|d| !(d.converged && d.final_relative_change < C6_TOL && d.inner_iterations <= C6_MAX_INNER as usize))
            .count();
        if bad > 0 {
            failures.push(format!("{name}: {bad} steps"));
        }
    }

    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let grid = GridSpec::pixel(8).unwrap();
    let mut worst_gap = 0.0f64;
    let reference_options = ReferenceOptions {
        grad_tol: C6_REFERENCE_GRAD_TOL,
        ..ReferenceOptions::default()
    };
    for gamma in [0.0, 0.2] {
        let params = FlowParams::new(gamma, 1.0, 1.0, C6_TAU, 1e-12, 500_000, 1).unwrap();
        for _ in 0..4 {
            let f = ScalarField::from_fn(grid, |_, _| rng.random_range(-5.0..5.0)).unwrap();
            let prox = prox_step(&f, &params, &DualField::zeros(grid)).unwrap();
            let reference = solve_tv_step_reference(&f, &params, &reference_options).unwrap();
            worst_gap = worst_gap.max(linf_diff(&prox.u, &reference).unwrap());
        }
    }

    let mut worst_lambda = 0.0f64;
    for (n, l, gamma) in [(65, 32.0, 0.2), (65, 31.25, 0.2), (129, 62.5, 0.0), (501, 250.0, 0.2)] {
        let op = EllipticOperator::new(GridSpec::new(n, l).unwrap(), gamma).unwrap();
        worst_lambda = worst_lambda.max((op.smallest_eigenvalue() - 1.0).abs());
    }
    let op = EllipticOperator::new(GridSpec::new(17, 8.0).unwrap(), 0.2).unwrap();
    let estimate = inverse_power_iteration(&op, 2000, 1).unwrap();
    worst_lambda = worst_lambda.max((estimate - 1.0).abs());

    let passed = failures.is_empty() && worst_gap <= C6_PROX_TOL && worst_lambda <= C6_LAMBDA_TOL;
    report(
        6,
        passed,
        &format!(
            "{} configs at tau {C6_TAU}, unconverged {failures:?}; prox gap {worst_gap:.2e} (tol {C6_PROX_TOL:e}); |lambda1 - 1| {worst_lambda:.2e}",
            names.len()
        ),
    );
    assert!(passed);
}

#[test]
fn criterion_07_facet_phenomena() {
    let suite = full_suite();
    let mut failures = Vec::new();
    let mut detail = Vec::new();
    for name in C7_RUNS {
        let r = suite.run(name);
        let mut last = 0.0;
        let mut areas = Vec::new();
        for (m, u) in r.snapshots.iter().filter(|(m, _)| *m >= C7_FIRST_STEP) {
            let (eps_f, eps_m) = default_thresholds(u);
            let f = facet_report(u, eps_f, eps_m).unwrap();
            if !(f.min_level_area > 0.0 && f.min_level_area >= last) {
                failures.push(format!("{name} m={m}: min level area {} after {last}", f.min_level_area));
            }
            if !(f.strip_area_x1 > 0.0 && f.strip_area_x2 > 0.0) {
                failures.push(format!("{name} m={m}: strips {} {}", f.strip_area_x1, f.strip_area_x2));
            }
            last = f.min_level_area;
            areas.push(format!("{:.0}", f.min_level_area));
        }
        detail.push(format!("{name} min areas {}", areas.join(",")));
    }

    let p = ExactSolution::Paraboloid(ParaboloidSolution::new(2.0, false).unwrap());
    let grid = GridSpec::new(401, 4.0).unwrap();
    let times: Vec<f64> = (0..12).map(|k| 0.1 * 1.4f64.powi(k)).collect();
    let areas: Vec<f64> = times
        .iter()
        .map(|&t| {
            let u = rasterize(&p, grid, t).unwrap();
            let (eps_f, eps_m) = default_thresholds(&u);
            facet_report(&u, eps_f, eps_m).unwrap().facet_area
        })
        .collect();
    let exponent = power_law_slope(&times, &areas).unwrap();
    if (exponent - C7_EXPONENT).abs() > C7_EXPONENT_TOL {
        failures.push(format!("facet growth exponent {exponent}"));
    }
    let passed = failures.is_empty();
    report(
        7,
        passed,
        &format!("{}; oracle facet exponent {exponent:.4} (2/3 +- {C7_EXPONENT_TOL}); failures {failures:?}", detail.join("; ")),
    );
    assert!(passed);
}

#[test]
fn criterion_08_decay() {
    let r = full_suite().run("decay");
    let slope = decay_fit(&r.diagnostics, r.params.dt, 10..=100).unwrap();
    let passed = slope <= C8_MAX_SLOPE;
    report(8, passed, &format!("log-log slope {slope:.4} (max {C8_MAX_SLOPE})"));
    assert!(passed);
}

fn symmetric_difference(r: &RunReport, key: &str) -> usize {
    r.manifest
        .get(&format!("restoration.{key}.symmetric_difference"))
        .unwrap_or_else(|| panic!("{}: no restoration.{key}", r.name))
        .parse()
        .unwrap()
}

#[test]
fn criterion_09_text_restoration() {
    let suite = full_suite();
    let tv = suite.run("fig5_restore");
    let linear = suite.run("fig5_linear");
    let step = format!("m{C9_STEP:04}");
    let identity = symmetric_difference(tv, "identity");
    assert_eq!(identity, symmetric_difference(linear, "identity"));
    let d_tv = symmetric_difference(tv, &step);
    let d_linear = symmetric_difference(linear, &step);
    // linear diffusion must remove fewer wrong pixels than the regularized flow
    let passed = d_tv < identity && d_tv < d_linear;
    report(
        9,
        passed,
        &format!("symmetric difference identity {identity}, regularized {d_tv}, linear {d_linear}"),
    );
    assert!(passed);
}

fn manifests(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in std::fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else if path.file_name().is_some_and(|n| n == "manifest.txt") {
                let bytes = std::fs::read(&path).unwrap();
                out.push((path.strip_prefix(dir).unwrap().to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

#[test]
fn criterion_10_determinism() {
    let a = scratch("suite_ci_a");
    let b = scratch("suite_ci_b");
    let src = bundled_source("suite_ci");
    run_suite(&src, Some(&a)).unwrap();
    run_suite(&src, Some(&b)).unwrap();
    let (ma, mb) = (manifests(&a), manifests(&b));
    let differing: Vec<_> = ma
        .iter()
        .zip(&mb)
        .filter(|(x, y)| x != y)
        .map(|(x, _)| x.0.display().to_string())
        .collect();
    let passed = !ma.is_empty() && ma.len() == mb.len() && differing.is_empty();
    report(10, passed, &format!("{} manifests compared, differing {differing:?}", ma.len()));
    assert!(passed);
}
