//! Metrics between a finished run and an exact solution or another run.
//!
//! Oracle times are aligned as `t = t₀ + β δt m` for the paraboloid and box
//! facet (their closed forms have `β = 1`) and `t = t₀ + δt m` for the
//! traveling front, which carries its own `β`.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anitv::exact::{rasterize, ExactSolution};
use anitv::imageio::read_field;
use anitv::ScalarField;
use serde::Deserialize;

use crate::config::{ConfigSource, ExperimentConfig, InitialSpec, OracleSpec};
use crate::error::{CliError, Result};
use crate::manifest::{ArtifactWriter, Manifest};
use crate::run::{default_output_dir, load, snapshot_file};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Linf,
    L2,
    FacetLevels,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    pub compare: CompareSection,
    pub oracle: Option<OracleSpec>,
    pub against: Option<AgainstSection>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareSection {
    pub name: String,
    pub run_config: String,
    pub run_dir: Option<String>,
    pub metric: Metric,
    /// Absolute tolerance.
    pub tolerance: Option<f64>,
    /// Tolerance as a fraction of the reference snapshot's range.
    pub relative_tolerance: Option<f64>,
    /// Width, in grid cells, of the band around region seams that is left
    /// out of `linf` and `l2`.
    #[serde(default)]
    pub seam_band: f64,
    /// Restrict to these snapshot steps; defaults to all snapshots.
    pub steps: Option<Vec<usize>>,
    /// Histogram bin width used by `facet_levels`.
    #[serde(default = "default_bin_width")]
    pub bin_width: f64,
    /// Compare even if the run was produced by a different config.
    #[serde(default)]
    pub force: bool,
    pub output_dir: Option<String>,
}

fn default_bin_width() -> f64 {
    0.01
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgainstSection {
    pub run_dir: String,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CompareRow {
    pub step: usize,
    /// Reference time (oracle time, or the run's own time).
    pub time: f64,
    pub error: f64,
    pub tolerance: f64,
}

impl CompareRow {
    pub fn passed(&self) -> bool {
        self.error <= self.tolerance
    }
}

#[derive(Debug, Clone)]
pub struct CompareReport {
    pub name: String,
    pub metric: Metric,
    pub rows: Vec<CompareRow>,
    pub run_levels: BTreeMap<usize, Vec<f64>>,
    pub reference_levels: BTreeMap<usize, Vec<f64>>,
    pub manifest: Manifest,
    pub output_dir: PathBuf,
}

impl CompareReport {
    pub fn passed(&self) -> bool {
        self.rows.iter().all(CompareRow::passed)
    }

    pub fn worst_error(&self) -> f64 {
        self.rows.iter().map(|r| r.error).fold(0.0, f64::max)
    }

    pub fn check(&self) -> Result<()> {
        match self.rows.iter().find(|r| !r.passed()) {
            Some(r) => Err(CliError::ComparisonFailed(format!(
                "{}: step {} error {} exceeds {}",
                self.name, r.step, r.error, r.tolerance
            ))),
            None => Ok(()),
        }
    }
}

/// Up to two dominant value levels: the means of the most populated
/// histogram bins (with their neighbours), the second at least three
/// bins away from the first and holding at least 1% of the samples.
pub fn dominant_levels(values: &[f64], bin_width: f64) -> Vec<f64> {
    let mut bins: BTreeMap<i64, (usize, f64)> = BTreeMap::new();
    for &v in values {
        let e = bins.entry((v / bin_width).floor() as i64).or_insert((0, 0.0));
        e.0 += 1;
        e.1 += v;
    }
    let level = |centre: i64| {
        let (n, s) = bins
            .range(centre - 1..=centre + 1)
            .fold((0usize, 0.0), |(n, s), (_, (c, t))| (n + c, s + t));
        s / n as f64
    };
    let mode = |exclude: Option<i64>| {
        bins.iter()
            .filter(|(k, _)| exclude.is_none_or(|e| (**k - e).abs() > 2))
            .max_by(|a, b| a.1 .0.cmp(&b.1 .0).then(b.0.cmp(a.0)))
            .map(|(k, (c, _))| (*k, *c))
    };
    let Some((first, _)) = mode(None) else {
        return Vec::new();
    };
    let mut levels = vec![level(first)];
    if let Some((second, count)) = mode(Some(first)) {
        if count * 100 >= values.len() {
            levels.push(level(second));
        }
    }
    levels.sort_by(f64::total_cmp);
    levels
}

/// Hausdorff distance between two finite level sets.
pub fn level_distance(a: &[f64], b: &[f64]) -> f64 {
    let one_way = |x: &[f64], y: &[f64]| {
        x.iter()
            .map(|p| y.iter().map(|q| (p - q).abs()).fold(f64::INFINITY, f64::min))
            .fold(0.0, f64::max)
    };
    if a.is_empty() || b.is_empty() {
        return f64::INFINITY;
    }
    one_way(a, b).max(one_way(b, a))
}

fn seam_distance(exact: &ExactSolution, x1: f64, x2: f64, t: f64) -> f64 {
    match exact {
        ExactSolution::Paraboloid(p) => p.seam_distance(x1, x2, t),
        ExactSolution::Front(f) => f.seam_distance(x1, x2),
        ExactSolution::BoxFacet(b) => (x1.abs().max(x2.abs()) - b.alpha()).abs(),
    }
}

fn masked_errors(u: &ScalarField, reference: &ScalarField, keep: impl Fn(f64, f64) -> bool) -> (f64, f64) {
    let grid = u.grid();
    let (mut linf, mut sq) = (0.0f64, 0.0);
    for ((i, j), &a) in u.values().indexed_iter() {
        let (x1, x2) = grid.coords(i, j);
        if keep(x1, x2) {
            let d = (a - reference.get(i, j)).abs();
            linf = linf.max(d);
            sq += d * d;
        }
    }
    (linf, (sq * grid.cell_area()).sqrt())
}

fn read_run_manifest(dir: &Path) -> Result<Manifest> {
    Manifest::read(&dir.join("manifest.txt"))
}

fn check_hash(manifest: &Manifest, expected: &str, dir: &Path, force: bool) -> Result<()> {
    match manifest.get("config.sha256") {
        Some(h) if h == expected => Ok(()),
        _ if force => Ok(()),
        found => Err(CliError::Refused(format!(
            "{} was produced by config hash {}, expected {expected}; set compare.force = true to override",
            dir.display(),
            found.unwrap_or("<none>")
        ))),
    }
}

/// Time of snapshot `m` on the oracle's clock, refusing misaligned setups.
fn oracle_time(config: &ExperimentConfig, spec: &OracleSpec, m: usize) -> Result<f64> {
    let p = &config.params;
    let t0 = match &config.initial {
        InitialSpec::Oracle { t, .. } => *t,
        _ => 0.0,
    };
    let scale = match *spec {
        OracleSpec::Front { beta, .. } => {
            if beta != p.beta || p.gamma != beta / 2.0 {
                return Err(CliError::Refused(format!(
                    "front oracle needs beta = {beta} and gamma = {}, run has beta = {} and gamma = {}",
                    beta / 2.0,
                    p.beta,
                    p.gamma
                )));
            }
            1.0
        }
        _ => {
            if !(p.beta > 0.0) {
                return Err(CliError::Refused("oracle time alignment t = beta dt m needs beta > 0".into()));
            }
            p.beta
        }
    };
    Ok(t0 + scale * p.dt * m as f64)
}

pub fn compare(
    source: &ConfigSource,
    run_dir_override: Option<&Path>,
    output_dir: Option<&Path>,
    force_override: bool,
) -> Result<CompareReport> {
    let config: CompareConfig = source.parse()?;
    let section = &config.compare;
    let force = section.force || force_override;
    if config.oracle.is_some() == config.against.is_some() {
        return Err(CliError::config("compare", "exactly one of [oracle] or [against] is required"));
    }
    let tol_spec = match (section.tolerance, section.relative_tolerance) {
        (Some(t), None) if t >= 0.0 => (t, false),
        (None, Some(t)) if t >= 0.0 => (t, true),
        _ => {
            return Err(CliError::config(
                "compare.tolerance",
                "exactly one non-negative tolerance or relative_tolerance is required",
            ))
        }
    };
    if !(section.bin_width > 0.0) {
        return Err(CliError::config("compare.bin_width", "must be positive"));
    }
    let run_source = ConfigSource::load(&source.resolve(&section.run_config))?;
    let (run_config, _) = load(&run_source)?;
    let run_dir = run_dir_override
        .map(Path::to_path_buf)
        .or_else(|| section.run_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| default_output_dir(&run_config));
    let expected_hash = run_source.hash()?;
    check_hash(&read_run_manifest(&run_dir)?, &expected_hash, &run_dir, force)?;

    let steps = match &section.steps {
        Some(s) => {
            if let Some(bad) = s.iter().find(|m| run_config.snapshots.steps.binary_search(m).is_err()) {
                return Err(CliError::config("compare.steps", format!("run has no snapshot at step {bad}")));
            }
            s.clone()
        }
        None => run_config.snapshots.steps.clone(),
    };

    let exact = match &config.oracle {
        Some(spec) => Some((spec, spec.build("oracle")?)),
        None => None,
    };
    let against_dir = config.against.as_ref().map(|a| PathBuf::from(&a.run_dir));
    if let Some(dir) = &against_dir {
        check_hash(&read_run_manifest(dir)?, &expected_hash, dir, force)?;
    }

    let mut rows = Vec::new();
    let mut run_levels = BTreeMap::new();
    let mut reference_levels = BTreeMap::new();
    for &m in &steps {
        let path = run_dir.join(snapshot_file(m));
        let u = read_field(&path)?;
        let grid = *u.grid();
        let (reference, time) = match (&exact, &against_dir) {
            (Some((spec, oracle)), _) => {
                if let ExactSolution::BoxFacet(b) = oracle {
                    if b.half_width() != grid.half_width() {
                        return Err(CliError::Refused(format!(
                            "box facet oracle has half width {}, run grid has {}",
                            b.half_width(),
                            grid.half_width()
                        )));
                    }
                }
                let t = oracle_time(&run_config, spec, m)?;
                let r = rasterize(oracle, grid, t).map_err(|e| {
                    CliError::Refused(format!("step {m}: oracle cannot be evaluated at t = {t}: {e}"))
                })?;
                (r, t)
            }
            (None, Some(dir)) => {
                let r = read_field(&dir.join(snapshot_file(m)))?;
                if r.grid() != u.grid() {
                    return Err(CliError::Refused(format!("step {m}: runs use different grids")));
                }
                (r, m as f64 * run_config.params.dt)
            }
            (None, None) => unreachable!("checked above"),
        };
        let band = section.seam_band * grid.spacing();
        let error = match section.metric {
            Metric::Linf | Metric::L2 => {
                let (linf, l2) = match &exact {
                    Some((_, oracle)) if band > 0.0 => {
                        masked_errors(&u, &reference, |x1, x2| seam_distance(oracle, x1, x2, time) >= band)
                    }
                    _ => masked_errors(&u, &reference, |_, _| true),
                };
                if section.metric == Metric::Linf {
                    linf
                } else {
                    l2
                }
            }
            Metric::FacetLevels => {
                let a = dominant_levels(u.values().as_slice().expect("standard layout"), section.bin_width);
                let b = dominant_levels(reference.values().as_slice().expect("standard layout"), section.bin_width);
                let d = level_distance(&a, &b);
                run_levels.insert(m, a);
                reference_levels.insert(m, b);
                d
            }
        };
        let tolerance = if tol_spec.1 {
            tol_spec.0 * (reference.max() - reference.min())
        } else {
            tol_spec.0
        };
        rows.push(CompareRow {
            step: m,
            time,
            error,
            tolerance,
        });
    }

    let metric_name = match section.metric {
        Metric::Linf => "linf",
        Metric::L2 => "l2",
        Metric::FacetLevels => "facet_levels",
    };
    let mut man = Manifest::new("compare");
    man.push("name", &section.name);
    man.push("config.source", &source.origin);
    man.push("config.sha256", source.hash()?);
    man.extend(source.echo()?);
    man.push("run.config_sha256", &expected_hash);
    man.push("metric", metric_name);
    for r in &rows {
        let key = format!("step.{:04}", r.step);
        man.push(format!("{key}.time"), r.time);
        man.push(format!("{key}.error"), r.error);
        man.push(format!("{key}.tolerance"), r.tolerance);
        man.push(format!("{key}.passed"), r.passed());
        let fmt = |v: &Vec<f64>| v.iter().map(f64::to_string).collect::<Vec<_>>().join(" ");
        if let Some(l) = run_levels.get(&r.step) {
            man.push(format!("{key}.run_levels"), fmt(l));
        }
        if let Some(l) = reference_levels.get(&r.step) {
            man.push(format!("{key}.reference_levels"), fmt(l));
        }
    }
    let passed = rows.iter().all(CompareRow::passed);
    man.push("passed", passed);
    let out = output_dir
        .map(Path::to_path_buf)
        .or_else(|| section.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| run_dir.join(format!("compare_{}", section.name)));
    let manifest = ArtifactWriter::new(&out)?.finish(man)?;
    Ok(CompareReport {
        name: section.name.clone(),
        metric: section.metric,
        rows,
        run_levels,
        reference_levels,
        manifest,
        output_dir: out,
    })
}
