use std::path::{Path, PathBuf};

use anitv::analysis::{self, Axis, ReportRow};
use anitv::flow::{FlowParams, FlowStepper, StepDiagnostics, TauStatus};
use anitv::grid::{energy_phi1, mean};
use anitv::imageio::{encode_field, encode_pgm, sidecar_text, GrayImage, PgmEncoding, ValueMap};
use anitv::shapes::{symmetric_difference, threshold};
use anitv::ScalarField;

use crate::config::{AxisName, ConfigSource, ContourLevel, ExperimentConfig, InitialData};
use crate::error::{CliError, Result};
use crate::manifest::{ArtifactWriter, Manifest};

/// Slack allowed on the per-step energy decrease, relative to `Φ(u⁰)`.
pub const ENERGY_SLACK: f64 = 1e-9;

#[derive(Debug, Clone)]
pub struct RunReport {
    pub name: String,
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub params: FlowParams,
    pub initial: InitialData,
    /// `diagnostics[m - 1]` belongs to step `m`.
    pub diagnostics: Vec<StepDiagnostics>,
    pub snapshots: Vec<(usize, ScalarField)>,
}

impl RunReport {
    pub fn snapshot(&self, m: usize) -> Option<&ScalarField> {
        self.snapshots.iter().find(|(k, _)| *k == m).map(|(_, u)| u)
    }

    pub fn first_unconverged(&self) -> Option<(usize, &StepDiagnostics)> {
        self.diagnostics
            .iter()
            .enumerate()
            .find(|(_, d)| !d.converged)
            .map(|(k, d)| (k + 1, d))
    }

    /// Non-convergence error naming the first offending step.
    pub fn check_converged(&self) -> Result<()> {
        match self.first_unconverged() {
            Some((step, d)) => Err(CliError::NonConvergence {
                step,
                iterations: d.inner_iterations,
                change: d.final_relative_change,
            }),
            None => Ok(()),
        }
    }

    pub fn energy_monotone(&self) -> bool {
        let p = &self.params;
        let e0 = energy_phi1(&self.initial.field, p.gamma, p.beta);
        let mut last = e0;
        self.diagnostics.iter().all(|d| {
            let ok = d.energy <= last + ENERGY_SLACK * e0;
            last = d.energy;
            ok
        })
    }

    pub fn max_mean_drift(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.mean_drift).fold(0.0, f64::max)
    }

    pub fn max_feasibility_excess(&self) -> f64 {
        self.diagnostics.iter().map(|d| d.dual_feasibility_excess).fold(0.0, f64::max)
    }
}

pub fn default_output_dir(config: &ExperimentConfig) -> PathBuf {
    config
        .experiment
        .output_dir
        .as_ref()
        .map(PathBuf::from)
        .unwrap_or_else(|| Path::new("runs").join(&config.experiment.name))
}

pub fn snapshot_file(m: usize) -> String {
    format!("u_m{m:04}.atvf")
}

pub fn load(source: &ConfigSource) -> Result<(ExperimentConfig, FlowParams)> {
    let config: ExperimentConfig = source.parse()?;
    let params = config.validate()?;
    Ok((config, params))
}

/// Runs one experiment and writes its artifacts. Non-convergence of an
/// inner loop is recorded, not raised; see [`RunReport::check_converged`].
pub fn run(source: &ConfigSource, output_dir: Option<&Path>) -> Result<RunReport> {
    let (config, params) = load(source)?;
    let out = output_dir.map(Path::to_path_buf).unwrap_or_else(|| default_output_dir(&config));
    let initial = config.initial_data(&source.base_dir)?;

    let mut snapshots = Vec::new();
    let steps = &config.snapshots.steps;
    if steps.first() == Some(&0) {
        snapshots.push((0, initial.field.clone()));
    }
    let mut stepper = FlowStepper::new(initial.field.clone(), params)?;
    let mut diagnostics = Vec::with_capacity(config.final_step());
    for m in 1..=config.final_step() {
        diagnostics.push(stepper.advance()?);
        if steps.binary_search(&m).is_ok() {
            snapshots.push((m, stepper.state().clone()));
        }
    }

    let mut report = RunReport {
        name: config.experiment.name.clone(),
        output_dir: out.clone(),
        manifest: Manifest::default(),
        params,
        initial,
        diagnostics,
        snapshots,
    };
    report.manifest = write_artifacts(source, &config, &report, &out)?;
    Ok(report)
}

fn write_artifacts(source: &ConfigSource, config: &ExperimentConfig, report: &RunReport, out: &Path) -> Result<Manifest> {
    let params = &report.params;
    let initial = &report.initial;
    let grid = *initial.field.grid();
    let outputs = &config.outputs;
    let map = ValueMap::new(outputs.image_min, outputs.image_max)?;

    let mut m = Manifest::new("run");
    m.push("name", &report.name);
    m.push("equation", config.experiment.equation.name());
    m.push("config.source", &source.origin);
    m.push("config.sha256", source.hash()?);
    m.extend(source.echo()?);
    m.push("grid.n", grid.n());
    m.push("grid.half_width", grid.half_width());
    m.push("grid.spacing", grid.spacing());
    m.push(
        "params.tau_status",
        match params.tau_status() {
            TauStatus::WithinBound => "within_bound",
            TauStatus::AtOrAboveBound => "at_or_above_bound",
        },
    );
    m.push("params.tau_bound", params.tau_bound());
    m.extend(initial.notes.iter().cloned());
    m.push("initial.time", initial.time);
    m.push("initial.mean", mean(&initial.field));
    m.push("initial.min", initial.field.min());
    m.push("initial.max", initial.field.max());
    m.push("initial.energy", energy_phi1(&initial.field, params.gamma, params.beta));

    for (k, d) in report.diagnostics.iter().enumerate() {
        let key = format!("step.{:04}", k + 1);
        m.push(format!("{key}.inner_iterations"), d.inner_iterations);
        m.push(format!("{key}.relative_change"), d.final_relative_change);
        m.push(format!("{key}.converged"), d.converged);
        m.push(format!("{key}.energy"), d.energy);
        m.push(format!("{key}.mean_drift"), d.mean_drift);
        m.push(format!("{key}.feasibility_excess"), d.dual_feasibility_excess);
    }
    m.push("summary.steps", report.diagnostics.len());
    m.push(
        "summary.unconverged_steps",
        report.diagnostics.iter().filter(|d| !d.converged).count(),
    );
    m.push(
        "summary.total_inner_iterations",
        report.diagnostics.iter().map(|d| d.inner_iterations).sum::<usize>(),
    );
    m.push("summary.max_mean_drift", report.max_mean_drift());
    m.push("summary.max_feasibility_excess", report.max_feasibility_excess());
    m.push("summary.energy_monotone", report.energy_monotone());

    let mut w = ArtifactWriter::new(out)?;
    if outputs.field_image {
        w.write("value_map.txt", sidecar_text(&map, initial.depth).as_bytes())?;
    }
    if let Some(clean) = &initial.clean {
        w.write("glyphs_clean.pgm", &encode_pgm(&GrayImage::from_field(clean, &map), PgmEncoding::Binary))?;
        let baseline = symmetric_difference(&threshold(&initial.field, outputs.threshold.unwrap_or(-10.0), initial.depth), clean)?;
        m.push("restoration.identity.symmetric_difference", baseline);
    }

    let initial_mean = mean(&initial.field);
    let (eps_f, eps_m) = analysis::default_thresholds(&initial.field);
    let mut rows = Vec::new();
    for (step, u) in &report.snapshots {
        let tag = format!("m{step:04}");
        let t = initial.time + *step as f64 * params.dt;
        m.push(format!("snapshot.{tag}.time"), t);
        m.push(format!("snapshot.{tag}.min"), u.min());
        m.push(format!("snapshot.{tag}.max"), u.max());
        w.write(&snapshot_file(*step), &encode_field(u))?;
        if outputs.field_image {
            w.write(&format!("u_{tag}.pgm"), &encode_pgm(&GrayImage::from_field(u, &map), PgmEncoding::Binary))?;
        }
        if let Some(level) = outputs.threshold {
            let binary = threshold(u, level, initial.depth);
            w.write(
                &format!("threshold_{tag}.pgm"),
                &encode_pgm(&GrayImage::from_field(&binary, &map), PgmEncoding::Binary),
            )?;
            if let Some(clean) = &initial.clean {
                m.push(format!("restoration.{tag}.symmetric_difference"), symmetric_difference(&binary, clean)?);
            }
        }
        for (k, level) in outputs.contours.iter().enumerate() {
            let level = match level {
                ContourLevel::Value(v) => *v,
                ContourLevel::Keyword(_) => initial_mean,
            };
            let c = analysis::extract_contours(u, level);
            let key = format!("contour.{tag}.{k}");
            m.push(format!("{key}.level"), level);
            m.push(format!("{key}.polylines"), c.polylines.len());
            m.push(format!("{key}.closed"), c.closed_count());
            m.push(format!("{key}.linf_length"), c.linf_length());
            w.write(&format!("contour_{tag}_{k}.txt"), c.to_text().as_bytes())?;
            w.write(&format!("contour_{tag}_{k}.svg"), c.to_svg(&grid).as_bytes())?;
        }
        for (k, cs) in outputs.cross_sections.iter().enumerate() {
            let axis = match cs.axis {
                AxisName::X1 => Axis::X1,
                AxisName::X2 => Axis::X2,
            };
            let samples = analysis::cross_section(u, axis, cs.coordinate)
                .map_err(|e| crate::config::field_error(&format!("outputs.cross_sections[{k}]"), e))?;
            let mut text = String::from("coordinate,value\n");
            for (x, v) in samples {
                text.push_str(&format!("{x},{v}\n"));
            }
            w.write(&format!("section_{tag}_{k}.csv"), text.as_bytes())?;
        }
        if outputs.facet_report {
            let facets = analysis::facet_report(u, eps_f, eps_m)?;
            let (energy, rate) = match step.checked_sub(1).map(|k| &report.diagnostics[k]) {
                Some(d) => (d.energy, d.increment_norm / params.dt),
                None => (energy_phi1(u, params.gamma, params.beta), 0.0),
            };
            let key = format!("facets.{tag}");
            m.push(format!("{key}.facet_area"), facets.facet_area);
            m.push(format!("{key}.strip_area_x1"), facets.strip_area_x1);
            m.push(format!("{key}.strip_area_x2"), facets.strip_area_x2);
            m.push(format!("{key}.min_level_area"), facets.min_level_area);
            rows.push(ReportRow { t, facets, energy, rate });
        }
    }
    if outputs.facet_report {
        m.push("facets.eps_f", eps_f);
        m.push("facets.eps_m", eps_m);
        w.write("facets.csv", analysis::report_csv(&rows).as_bytes())?;
    }
    if outputs.diagnostics_table {
        let mut text = String::from(
            "m,t,inner_iterations,relative_change,converged,feasibility_excess,mean_drift,energy,rate\n",
        );
        for (k, d) in report.diagnostics.iter().enumerate() {
            let step = k + 1;
            text.push_str(&format!(
                "{step},{},{},{},{},{},{},{},{}\n",
                initial.time + step as f64 * params.dt,
                d.inner_iterations,
                d.final_relative_change,
                d.converged,
                d.dual_feasibility_excess,
                d.mean_drift,
                d.energy,
                d.increment_norm / params.dt
            ));
        }
        w.write("diagnostics.csv", text.as_bytes())?;
    }
    w.finish(m)
}
