//! Experiment descriptions in TOML.
//!
//! Configs are named either by a file path or as `bundled:NAME`. The config
//! hash is the SHA-256 of the canonical re-serialization of the parsed
//! document with `experiment.output_dir` removed, so it does not depend on
//! formatting, comments or where the results are written.

use std::path::{Path, PathBuf};

use anitv::exact::{BoxFacetSolution, ExactSolution, ParaboloidSolution, TravelingFront};
use anitv::flow::FlowParams;
use anitv::shapes::glyphs::{corrupt, render_glyphs, Corruption};
use anitv::shapes::{make_shape, ShapeKind, ShapeSpec};
use anitv::{GridSpec, ScalarField};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::bundled;
use crate::error::{CliError, Result};

/// Raw config text with the information needed to resolve relative paths.
#[derive(Debug, Clone)]
pub struct ConfigSource {
    pub text: String,
    /// `bundled:NAME` or the file name.
    pub origin: String,
    /// Directory that relative paths inside the config refer to.
    pub base_dir: PathBuf,
}

impl ConfigSource {
    pub fn load(spec: &str) -> Result<Self> {
        if let Some(name) = spec.strip_prefix("bundled:") {
            let text = bundled::get(name).ok_or_else(|| {
                CliError::Refused(format!(
                    "no bundled config named `{name}`; available: {}",
                    bundled::names().join(", ")
                ))
            })?;
            return Ok(Self {
                text: text.to_string(),
                origin: spec.to_string(),
                base_dir: PathBuf::from("."),
            });
        }
        let path = Path::new(spec);
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Ok(Self {
            text,
            origin: path
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_else(|| spec.to_string()),
            base_dir: path.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from(".")),
        })
    }

    pub fn parse<T: for<'de> Deserialize<'de>>(&self) -> Result<T> {
        toml::from_str(&self.text).map_err(|e| CliError::Parse {
            path: self.origin.clone(),
            message: e.to_string(),
        })
    }

    /// Resolves another config reference from inside this one.
    pub fn resolve(&self, spec: &str) -> String {
        if spec.starts_with("bundled:") || Path::new(spec).is_absolute() {
            spec.to_string()
        } else {
            self.base_dir.join(spec).to_string_lossy().into_owned()
        }
    }

    /// Copy with `section.key` replaced; the hash changes accordingly.
    pub fn with_override(&self, section: &str, key: &str, value: impl Into<toml::Value>) -> Result<Self> {
        let mut table: toml::Table = self.parse()?;
        let entry = table
            .entry(section)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        let toml::Value::Table(t) = entry else {
            return Err(CliError::config(section, "is not a table"));
        };
        t.insert(key.to_string(), value.into());
        Ok(Self {
            text: toml::to_string(&table).expect("a parsed table re-serializes"),
            origin: format!("{}+{section}.{key}", self.origin),
            base_dir: self.base_dir.clone(),
        })
    }

    fn canonical(&self) -> Result<toml::Table> {
        let mut table: toml::Table = self.parse()?;
        for section in ["experiment", "oracle_run", "compare", "suite"] {
            if let Some(toml::Value::Table(t)) = table.get_mut(section) {
                t.remove("output_dir");
            }
        }
        Ok(table)
    }

    pub fn hash(&self) -> Result<String> {
        let canonical = toml::to_string(&self.canonical()?).expect("a parsed table re-serializes");
        Ok(hex(&Sha256::digest(canonical.as_bytes())))
    }

    /// `section.key = value` lines for every leaf of the canonical document.
    pub fn echo(&self) -> Result<Vec<(String, String)>> {
        let mut out = Vec::new();
        flatten("config", &toml::Value::Table(self.canonical()?), &mut out);
        Ok(out)
    }
}

fn flatten(prefix: &str, value: &toml::Value, out: &mut Vec<(String, String)>) {
    match value {
        toml::Value::Table(t) => {
            for (k, v) in t {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        toml::Value::Array(items) if items.iter().any(|v| v.is_table()) => {
            for (k, v) in items.iter().enumerate() {
                flatten(&format!("{prefix}.{k}"), v, out);
            }
        }
        other => out.push((prefix.to_string(), other.to_string())),
    }
}

pub fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex(&Sha256::digest(bytes))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Equation {
    /// `u_t = β div(sgn u_x1, sgn u_x2)`
    AnisotropicTv,
    /// `u_t = γΔu + β div(sgn u_x1, sgn u_x2)`
    DiffusiveAnisotropicTv,
}

impl Equation {
    pub fn name(self) -> &'static str {
        match self {
            Equation::AnisotropicTv => "anisotropic_tv",
            Equation::DiffusiveAnisotropicTv => "diffusive_anisotropic_tv",
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub grid: Option<GridSection>,
    pub initial: InitialSpec,
    pub blur: Option<BlurSection>,
    pub params: ParamsSection,
    pub snapshots: SnapshotSection,
    #[serde(default)]
    pub outputs: OutputSection,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub equation: Equation,
    pub output_dir: Option<String>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub n: usize,
    /// Defaults to `(n - 1) / 2`, i.e. unit spacing.
    pub half_width: Option<f64>,
}

impl GridSection {
    pub fn spec(&self) -> Result<GridSpec> {
        let l = self.half_width.unwrap_or((self.n as f64 - 1.0) / 2.0);
        GridSpec::new(self.n, l).map_err(|e| field_error("grid", e))
    }
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BlurSection {
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParamsSection {
    #[serde(default)]
    pub gamma: f64,
    pub beta: f64,
    #[serde(default = "one")]
    pub dt: f64,
    #[serde(default = "default_tau")]
    pub tau: f64,
    #[serde(default = "default_tol")]
    pub tol: f64,
    #[serde(default = "default_max_inner")]
    pub max_inner: usize,
    pub max_outer: usize,
}

fn one() -> f64 {
    1.0
}
fn default_tau() -> f64 {
    0.125
}
fn default_tol() -> f64 {
    1e-5
}
fn default_max_inner() -> usize {
    10_000
}
fn default_image_min() -> f64 {
    -50.0
}
fn yes() -> bool {
    true
}

impl ParamsSection {
    pub fn flow_params(&self) -> Result<FlowParams> {
        FlowParams::new(
            self.gamma,
            self.beta,
            self.dt,
            self.tau,
            self.tol,
            self.max_inner,
            self.max_outer,
        )
        .map_err(|e| field_error("params", e))
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SnapshotSection {
    /// Outer step indices `m`; `0` denotes the initial datum.
    pub steps: Vec<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisName {
    X1,
    X2,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CrossSectionSpec {
    /// The coordinate held fixed: `axis = "x1"` samples the line `x1 = coordinate`.
    pub axis: AxisName,
    pub coordinate: f64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum ContourLevel {
    Value(f64),
    /// `"mean"`: the mean of the initial datum.
    Keyword(String),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "yes")]
    pub field_image: bool,
    #[serde(default)]
    pub contours: Vec<ContourLevel>,
    #[serde(default)]
    pub cross_sections: Vec<CrossSectionSpec>,
    #[serde(default = "yes")]
    pub facet_report: bool,
    #[serde(default = "yes")]
    pub diagnostics_table: bool,
    /// Also write snapshots thresholded at this level.
    pub threshold: Option<f64>,
    #[serde(default = "default_image_min")]
    pub image_min: f64,
    #[serde(default)]
    pub image_max: f64,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            field_image: true,
            contours: Vec::new(),
            cross_sections: Vec::new(),
            facet_report: true,
            diagnostics_table: true,
            threshold: None,
            image_min: default_image_min(),
            image_max: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ShapeName {
    L1Ball,
    L2Ball,
    LinfBall,
    CompositeS4,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Shape {
        shape: ShapeName,
        radius: f64,
        #[serde(default)]
        center: [f64; 2],
        depth: f64,
    },
    Image {
        path: String,
        #[serde(default = "default_image_min")]
        value_min: f64,
        #[serde(default)]
        value_max: f64,
    },
    Oracle {
        #[serde(default)]
        t: f64,
        oracle: OracleSpec,
    },
    Glyphs {
        text: String,
        scale: usize,
        #[serde(default)]
        margin: usize,
        depth: f64,
        #[serde(default)]
        dropout: f64,
        #[serde(default)]
        speckle: f64,
        #[serde(default)]
        seed: u64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case", deny_unknown_fields)]
pub enum OracleSpec {
    Paraboloid {
        radius: f64,
        #[serde(default)]
        truncated: bool,
    },
    BoxFacet {
        alpha: f64,
        half_width: f64,
        depth: f64,
    },
    Front {
        alpha: f64,
        beta: f64,
    },
}

impl OracleSpec {
    pub fn build(&self, section: &str) -> Result<ExactSolution> {
        let built = match *self {
            OracleSpec::Paraboloid { radius, truncated } => {
                ParaboloidSolution::new(radius, truncated).map(ExactSolution::Paraboloid)
            }
            OracleSpec::BoxFacet {
                alpha,
                half_width,
                depth,
            } => BoxFacetSolution::new(alpha, half_width, depth).map(ExactSolution::BoxFacet),
            OracleSpec::Front { alpha, beta } => TravelingFront::new(alpha, beta).map(ExactSolution::Front),
        };
        built.map_err(|e| field_error(section, e))
    }

    pub fn name(&self) -> &'static str {
        match self {
            OracleSpec::Paraboloid { .. } => "paraboloid",
            OracleSpec::BoxFacet { .. } => "box_facet",
            OracleSpec::Front { .. } => "front",
        }
    }
}

/// Maps a numerics error to a field-level config error under `section`.
pub(crate) fn field_error(section: &str, e: anitv::Error) -> CliError {
    match e {
        anitv::Error::InvalidParameter { name, reason } => CliError::config(format!("{section}.{name}"), reason),
        anitv::Error::OutsideValidity { t, limit } => {
            CliError::config(format!("{section}.t"), format!("time {t} is outside [0, {limit})"))
        }
        other => CliError::config(section, other.to_string()),
    }
}

/// The initial datum, plus the uncorrupted image when the datum is a
/// corrupted glyph image.
#[derive(Debug, Clone)]
pub struct InitialData {
    pub field: ScalarField,
    pub clean: Option<ScalarField>,
    pub depth: f64,
    pub time: f64,
    /// Extra manifest lines (e.g. the hash of an input image).
    pub notes: Vec<(String, String)>,
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<FlowParams> {
        let name = &self.experiment.name;
        if name.is_empty() || !name.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-') {
            return Err(CliError::config(
                "experiment.name",
                "must be non-empty and use only letters, digits, `_` or `-`",
            ));
        }
        match self.experiment.equation {
            Equation::AnisotropicTv if self.params.gamma != 0.0 => {
                return Err(CliError::config(
                    "params.gamma",
                    format!("must be 0 for equation anisotropic_tv, got {}", self.params.gamma),
                ))
            }
            Equation::DiffusiveAnisotropicTv if !(self.params.gamma > 0.0) => {
                return Err(CliError::config(
                    "params.gamma",
                    "must be positive for equation diffusive_anisotropic_tv",
                ))
            }
            _ => {}
        }
        let params = self.params.flow_params()?;
        let steps = &self.snapshots.steps;
        if steps.is_empty() {
            return Err(CliError::config("snapshots.steps", "at least one step is required"));
        }
        if steps.windows(2).any(|w| w[0] >= w[1]) {
            return Err(CliError::config("snapshots.steps", "must be strictly increasing"));
        }
        if let Some(&last) = steps.last() {
            if last > params.max_outer {
                return Err(CliError::config(
                    "snapshots.steps",
                    format!("step {last} exceeds params.max_outer = {}", params.max_outer),
                ));
            }
        }
        if let Some(b) = self.blur {
            if !(b.sigma.is_finite() && b.sigma >= 0.0) {
                return Err(CliError::config("blur.sigma", "must be non-negative"));
            }
        }
        for (k, level) in self.outputs.contours.iter().enumerate() {
            if let ContourLevel::Keyword(word) = level {
                if word != "mean" {
                    return Err(CliError::config(
                        format!("outputs.contours[{k}]"),
                        format!("expected a number or \"mean\", got {word:?}"),
                    ));
                }
            }
        }
        if !(self.outputs.image_min < self.outputs.image_max) {
            return Err(CliError::config("outputs.image_min", "must be below outputs.image_max"));
        }
        match (&self.initial, self.grid) {
            (InitialSpec::Shape { .. } | InitialSpec::Oracle { .. }, None) => {
                return Err(CliError::config("grid", "required for shape and oracle initial data"))
            }
            (_, Some(g)) => {
                g.spec()?;
            }
            _ => {}
        }
        Ok(params)
    }

    /// Number of outer steps the run performs.
    pub fn final_step(&self) -> usize {
        self.snapshots.steps.last().copied().unwrap_or(0)
    }

    pub fn initial_data(&self, base_dir: &Path) -> Result<InitialData> {
        let mut notes = Vec::new();
        let mut clean = None;
        let mut time = 0.0;
        let (field, depth) = match &self.initial {
            InitialSpec::Shape {
                shape,
                radius,
                center,
                depth,
            } => {
                let kind = match shape {
                    ShapeName::L1Ball => ShapeKind::L1Ball,
                    ShapeName::L2Ball => ShapeKind::L2Ball,
                    ShapeName::LinfBall => ShapeKind::LinfBall,
                    ShapeName::CompositeS4 => ShapeKind::CompositeS4,
                };
                let spec = ShapeSpec {
                    kind,
                    radius: *radius,
                    center: (center[0], center[1]),
                    depth: *depth,
                };
                let grid = self.grid.expect("validated").spec()?;
                (make_shape(&spec, grid).map_err(|e| field_error("initial", e))?, *depth)
            }
            InitialSpec::Image {
                path,
                value_min,
                value_max,
            } => {
                let full = base_dir.join(path);
                let map = anitv::imageio::ValueMap::new(*value_min, *value_max)
                    .map_err(|e| field_error("initial", e))?;
                let bytes = std::fs::read(&full).map_err(|e| CliError::io(&full, e))?;
                notes.push(("initial.image_sha256".to_string(), sha256_hex(&bytes)));
                let field = anitv::imageio::read_image(&full, &map)?;
                (field, value_max - value_min)
            }
            InitialSpec::Oracle { t, oracle } => {
                let exact = oracle.build("initial.oracle")?;
                let grid = self.grid.expect("validated").spec()?;
                time = *t;
                let field = anitv::exact::rasterize(&exact, grid, *t).map_err(|e| field_error("initial", e))?;
                let depth = field.max() - field.min();
                (field, depth)
            }
            InitialSpec::Glyphs {
                text,
                scale,
                margin,
                depth,
                dropout,
                speckle,
                seed,
            } => {
                let clean_field =
                    render_glyphs(text, *scale, *margin, *depth).map_err(|e| field_error("initial", e))?;
                let damage = Corruption {
                    dropout: *dropout,
                    speckle: *speckle,
                    seed: *seed,
                };
                let field = corrupt(&clean_field, &damage, *depth).map_err(|e| field_error("initial", e))?;
                clean = Some(clean_field);
                (field, *depth)
            }
        };
        if let Some(g) = self.grid {
            let expected = g.spec()?;
            if *field.grid() != expected {
                return Err(CliError::config(
                    "grid",
                    format!(
                        "initial datum is {n}x{n} with half width {l}, grid section asks for {}x{} with half width {}",
                        expected.n(),
                        expected.n(),
                        expected.half_width(),
                        n = field.grid().n(),
                        l = field.grid().half_width()
                    ),
                ));
            }
        }
        let field = match self.blur {
            Some(b) if b.sigma > 0.0 => anitv::shapes::gaussian_blur(&field, b.sigma)?,
            _ => field,
        };
        Ok(InitialData {
            field,
            clean,
            depth,
            time,
            notes,
        })
    }
}
