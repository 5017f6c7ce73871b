use std::path::{Path, PathBuf};

use anitv::exact::{rasterize, ExactSolution};
use anitv::grid::mean;
use anitv::imageio::{encode_field, encode_pgm, sidecar_text, GrayImage, PgmEncoding, ValueMap};
use anitv::ScalarField;
use serde::Deserialize;

use crate::config::{field_error, ConfigSource, GridSection, OracleSpec, OutputSection};
use crate::error::{CliError, Result};
use crate::manifest::{ArtifactWriter, Manifest};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub oracle_run: OracleRunSection,
    pub grid: GridSection,
    pub oracle: OracleSpec,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleRunSection {
    pub name: String,
    pub times: Vec<f64>,
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone)]
pub struct OracleReport {
    pub output_dir: PathBuf,
    pub manifest: Manifest,
    pub states: Vec<(f64, ScalarField)>,
}

pub fn oracle_file(k: usize) -> String {
    format!("oracle_t{k:02}.atvf")
}

/// Oracle-specific characteristic values at time `t`.
fn characteristic_values(exact: &ExactSolution, t: f64) -> Vec<(&'static str, f64)> {
    match exact {
        ExactSolution::BoxFacet(b) => {
            let (inside, outside) = b.levels(t.min(b.extinction_time())).expect("clamped into the window");
            vec![
                ("inside", inside),
                ("outside", outside),
                ("extinction_time", b.extinction_time()),
            ]
        }
        ExactSolution::Paraboloid(p) => {
            let facet = p.eval(0.0, 0.0, t).map(|(v, _)| v).unwrap_or(f64::NAN);
            let mut v = vec![("xi", anitv::exact::xi(t)), ("facet", facet)];
            if p.truncated() {
                v.push(("support_half_width", p.support_half_width(t)));
                v.push(("t1", p.t1()));
            }
            v
        }
        ExactSolution::Front(f) => vec![("facet", f.eval(0.0, 0.0, t).unwrap_or(f64::NAN)), ("speed", f.speed())],
    }
}

pub fn run_oracle(source: &ConfigSource, output_dir: Option<&Path>) -> Result<OracleReport> {
    let config: OracleConfig = source.parse()?;
    let section = &config.oracle_run;
    if section.times.is_empty() {
        return Err(CliError::config("oracle_run.times", "at least one time is required"));
    }
    let grid = config.grid.spec()?;
    let exact = config.oracle.build("oracle")?;
    let map = ValueMap::new(config.outputs.image_min, config.outputs.image_max)
        .map_err(|e| field_error("outputs", e))?;

    let mut states = Vec::new();
    for (k, &t) in section.times.iter().enumerate() {
        if !(t.is_finite() && t >= 0.0) {
            return Err(CliError::config(format!("oracle_run.times[{k}]"), "must be non-negative"));
        }
        let u = rasterize(&exact, grid, t).map_err(|e| match e {
            anitv::Error::OutsideValidity { t, limit } => CliError::config(
                format!("oracle_run.times[{k}]"),
                format!("time {t} is outside the validity window [0, {limit})"),
            ),
            other => field_error("oracle", other),
        })?;
        states.push((t, u));
    }

    let out = output_dir
        .map(Path::to_path_buf)
        .or_else(|| section.output_dir.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| Path::new("runs").join(format!("oracle_{}", section.name)));
    let mut m = Manifest::new("oracle");
    m.push("name", &section.name);
    m.push("oracle", config.oracle.name());
    m.push("config.source", &source.origin);
    m.push("config.sha256", source.hash()?);
    m.extend(source.echo()?);
    m.push("grid.n", grid.n());
    m.push("grid.half_width", grid.half_width());

    let mut w = ArtifactWriter::new(&out)?;
    let names: Vec<&str> = characteristic_values(&exact, 0.0).iter().map(|(n, _)| *n).collect();
    let mut table = format!("t,min,max,mean,{}\n", names.join(","));
    for (k, (t, u)) in states.iter().enumerate() {
        let values = characteristic_values(&exact, *t);
        table.push_str(&format!("{t},{},{},{}", u.min(), u.max(), mean(u)));
        for (name, v) in &values {
            table.push_str(&format!(",{v}"));
            m.push(format!("time.{k:02}.{name}"), v);
        }
        table.push('\n');
        m.push(format!("time.{k:02}.t"), t);
        m.push(format!("time.{k:02}.min"), u.min());
        m.push(format!("time.{k:02}.max"), u.max());
        w.write(&oracle_file(k), &encode_field(u))?;
        if config.outputs.field_image {
            w.write(
                &format!("oracle_t{k:02}.pgm"),
                &encode_pgm(&GrayImage::from_field(u, &map), PgmEncoding::Binary),
            )?;
        }
        for (c, cs) in config.outputs.cross_sections.iter().enumerate() {
            let axis = match cs.axis {
                crate::config::AxisName::X1 => anitv::analysis::Axis::X1,
                crate::config::AxisName::X2 => anitv::analysis::Axis::X2,
            };
            let samples = anitv::analysis::cross_section(u, axis, cs.coordinate)
                .map_err(|e| field_error(&format!("outputs.cross_sections[{c}]"), e))?;
            let text: String = std::iter::once("coordinate,value\n".to_string())
                .chain(samples.iter().map(|(x, v)| format!("{x},{v}\n")))
                .collect();
            w.write(&format!("section_t{k:02}_{c}.csv"), text.as_bytes())?;
        }
    }
    if config.outputs.field_image {
        w.write("value_map.txt", sidecar_text(&map, map.max - map.min).as_bytes())?;
    }
    w.write("values.csv", table.as_bytes())?;
    let manifest = w.finish(m)?;
    Ok(OracleReport {
        output_dir: out,
        manifest,
        states,
    })
}
