use std::path::{Path, PathBuf};

use serde::Deserialize;

use crate::compare::compare;
use crate::config::{sha256_hex, ConfigSource};
use crate::error::{CliError, Result};
use crate::manifest::{ArtifactWriter, Manifest};
use crate::oracle::{run_oracle, OracleConfig};
use crate::run::{load, run, RunReport};

/// Largest accepted `|mean(u^m) - mean(u⁰)|`.
pub const MEAN_DRIFT_LIMIT: f64 = 1e-8;
/// Largest accepted `max(0, max|g| - 1)`.
pub const FEASIBILITY_LIMIT: f64 = 1e-12;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteConfig {
    pub suite: SuiteSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SuiteSection {
    pub name: String,
    #[serde(default)]
    pub runs: Vec<String>,
    #[serde(default)]
    pub oracles: Vec<String>,
    #[serde(default)]
    pub compares: Vec<String>,
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone)]
pub struct SuiteReport {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub runs: Vec<RunReport>,
    /// Worst exit status over all items.
    pub status: i32,
}

/// Whether a run satisfies the invariants checked for every experiment.
pub fn invariants_hold(r: &RunReport) -> bool {
    r.max_mean_drift() <= MEAN_DRIFT_LIMIT && r.max_feasibility_excess() <= FEASIBILITY_LIMIT && r.energy_monotone()
}

fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(sha256_hex(&bytes))
}

/// Runs every listed experiment, oracle and comparison into subdirectories
/// of the suite directory and records one summary manifest. Failures of
/// single items are recorded and the suite continues.
pub fn run_suite(source: &ConfigSource, output_dir: Option<&Path>) -> Result<SuiteReport> {
    let config: SuiteConfig = source.parse()?;
    let section = &config.suite;
    let out = output_dir
        .map(Path::to_path_buf)
        .or_else(|| section.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(format!("suite_{}", section.name)));

    let mut m = Manifest::new("suite");
    m.push("name", &section.name);
    m.push("config.source", &source.origin);
    m.push("config.sha256", source.hash()?);
    m.push("limits.mean_drift", MEAN_DRIFT_LIMIT);
    m.push("limits.feasibility_excess", FEASIBILITY_LIMIT);
    m.push("limits.energy_slack", crate::run::ENERGY_SLACK);
    let mut status = 0;
    let mut runs = Vec::new();
    let note = |m: &mut Manifest, key: String, result: &Result<()>, status: &mut i32| {
        let code = result.as_ref().err().map_or(0, CliError::exit_code);
        if let Err(e) = result {
            eprintln!("{key}: {e}");
        }
        m.push(format!("{key}.status"), code);
        *status = (*status).max(code);
    };

    for spec in &section.runs {
        let src = ConfigSource::load(&source.resolve(spec))?;
        let (cfg, _) = load(&src)?;
        let name = cfg.experiment.name.clone();
        let key = format!("run.{name}");
        let result = run(&src, Some(&out.join(&name)));
        let outcome = match result {
            Ok(r) => {
                m.push(format!("{key}.config_sha256"), src.hash()?);
                m.push(format!("{key}.manifest_sha256"), file_hash(&r.output_dir.join("manifest.txt"))?);
                m.push(format!("{key}.max_mean_drift"), r.max_mean_drift());
                m.push(format!("{key}.max_feasibility_excess"), r.max_feasibility_excess());
                m.push(format!("{key}.energy_monotone"), r.energy_monotone());
                let inv = invariants_hold(&r);
                m.push(format!("{key}.invariants_passed"), inv);
                let outcome = r.check_converged().and_then(|_| {
                    if inv {
                        Ok(())
                    } else {
                        Err(CliError::ComparisonFailed(format!("{name}: invariant check failed")))
                    }
                });
                runs.push(r);
                outcome
            }
            Err(e) => Err(e),
        };
        note(&mut m, key, &outcome, &mut status);
    }

    for spec in &section.oracles {
        let src = ConfigSource::load(&source.resolve(spec))?;
        let cfg: OracleConfig = src.parse()?;
        let key = format!("oracle.{}", cfg.oracle_run.name);
        let outcome = run_oracle(&src, Some(&out.join(format!("oracle_{}", cfg.oracle_run.name)))).and_then(|r| {
            m.push(format!("{key}.manifest_sha256"), file_hash(&r.output_dir.join("manifest.txt"))?);
            Ok(())
        });
        note(&mut m, key, &outcome, &mut status);
    }

    for spec in &section.compares {
        let src = ConfigSource::load(&source.resolve(spec))?;
        let cfg: crate::compare::CompareConfig = src.parse()?;
        let run_src = ConfigSource::load(&src.resolve(&cfg.compare.run_config))?;
        let (run_cfg, _) = load(&run_src)?;
        let key = format!("compare.{}", cfg.compare.name);
        let outcome = compare(
            &src,
            Some(&out.join(&run_cfg.experiment.name)),
            Some(&out.join(format!("compare_{}", cfg.compare.name))),
            false,
        )
        .and_then(|r| {
            m.push(format!("{key}.worst_error"), r.worst_error());
            m.push(format!("{key}.passed"), r.passed());
            r.check()
        });
        note(&mut m, key, &outcome, &mut status);
    }
    m.push("status", status);
    let manifest = ArtifactWriter::new(&out)?.finish(m)?;
    Ok(SuiteReport {
        output_dir: out,
        manifest,
        runs,
        status,
    })
}
