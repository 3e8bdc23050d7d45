//! Run configuration.
//!
//! Configs are TOML documents:
//!
//! ```toml
//! [grid]
//! dims = [128, 128]
//!
//! [model]
//! epsilon = 0.02
//! alpha = 10.0
//!
//! [init.phi]
//! shape = "disk"
//! radius = 0.3
//!
//! [init.u]
//! kind = "const"
//! value = 0.5
//!
//! [stepping]
//! t_end = 0.01
//! ```
//!
//! Unknown keys are rejected. Overrides of the form `section.key=value` are
//! applied to the parsed document before it is validated.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::{Grid, ScalarField};
use crate::init;
use crate::integrator::{StepPolicy, UScheme};
use crate::physics::{ModelParams, SimState, Variant};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("{0}")]
    Schema(String),
    #[error("bad override '{spec}': {message}")]
    Override { spec: String, message: String },
    #[error("invalid {key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
}

fn invalid(key: &'static str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key,
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub dims: Vec<usize>,
    /// Defaults to 1 on every axis.
    #[serde(default)]
    pub lengths: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VariantName {
    Stilde,
    SOld,
    ConstGamma,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    pub epsilon: f64,
    #[serde(default = "one")]
    pub tau: f64,
    #[serde(default = "one")]
    pub sigma: f64,
    #[serde(default)]
    pub alpha: f64,
    #[serde(default = "one")]
    pub k: f64,
    #[serde(default = "default_gamma0")]
    pub gamma0: f64,
    #[serde(default = "one")]
    pub u1: f64,
    #[serde(default = "default_m")]
    pub m: u32,
    #[serde(default = "default_variant")]
    pub variant: VariantName,
    /// The constant of `variant = "const_gamma"`.
    #[serde(default)]
    pub gamma_const: Option<f64>,
}

fn one() -> f64 {
    1.0
}
fn default_gamma0() -> f64 {
    0.1
}
fn default_m() -> u32 {
    2
}
fn default_variant() -> VariantName {
    VariantName::Stilde
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case", deny_unknown_fields)]
pub enum PhiInit {
    /// Disk (ball) with the tanh profile; center defaults to the domain center.
    Disk {
        radius: f64,
        #[serde(default)]
        center: Option<Vec<f64>>,
    },
    /// Periodic slab normal to `axis`.
    Stripe {
        axis: usize,
        position: f64,
        width: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum UInit {
    Const {
        value: f64,
    },
    Sine {
        axis: usize,
        mean: f64,
        amplitude: f64,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitConfig {
    pub phi: PhiInit,
    pub u: UInit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeName {
    Explicit,
    Implicit,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SteppingConfig {
    #[serde(default = "default_cfl")]
    pub cfl_safety: f64,
    #[serde(default = "default_scheme")]
    pub u_scheme: SchemeName,
    #[serde(default)]
    pub dt_override: Option<f64>,
    pub t_end: f64,
    /// Steps between recorded rows.
    #[serde(default = "default_cadence")]
    pub cadence: usize,
}

fn default_cfl() -> f64 {
    0.5
}
fn default_scheme() -> SchemeName {
    SchemeName::Implicit
}
fn default_cadence() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    /// Output directory; the command line `--out` takes precedence.
    #[serde(default)]
    pub directory: Option<String>,
    /// Write a VTK snapshot every this many recorded rows (0 disables).
    #[serde(default)]
    pub snapshot_every: usize,
    /// Fill the interface columns of series.csv (2D only).
    #[serde(default = "yes")]
    pub geometry: bool,
}

fn yes() -> bool {
    true
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self {
            directory: None,
            snapshot_every: 0,
            geometry: true,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleKind {
    Mcf,
    Forced,
    Coupled,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CompareConfig {
    #[serde(default = "default_oracle")]
    pub oracle: OracleKind,
    /// Allowed max deviation of the radius.
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Radial domain of the coupled oracle, as a multiple of R0.
    #[serde(default = "default_rmax_factor")]
    pub r_max_factor: f64,
    /// Radial cells per R0 for the coupled oracle.
    #[serde(default = "default_cells_per_radius")]
    pub cells_per_radius: usize,
    /// Oracle sample step; defaults to the phase-field record spacing.
    #[serde(default)]
    pub oracle_dt: Option<f64>,
}

fn default_oracle() -> OracleKind {
    OracleKind::Mcf
}
fn default_tolerance() -> f64 {
    0.02
}
fn default_rmax_factor() -> f64 {
    4.0
}
fn default_cells_per_radius() -> usize {
    200
}

impl Default for CompareConfig {
    fn default() -> Self {
        Self {
            oracle: default_oracle(),
            tolerance: default_tolerance(),
            r_max_factor: default_rmax_factor(),
            cells_per_radius: default_cells_per_radius(),
            oracle_dt: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub alpha: Vec<f64>,
    /// Minimum `epsilon / h` in epsilon sweeps.
    #[serde(default = "default_cells_per_eps")]
    pub cells_per_epsilon: f64,
    /// Comparison time of epsilon sweeps; defaults to `stepping.t_end`.
    #[serde(default)]
    pub compare_time: Option<f64>,
}

fn default_cells_per_eps() -> f64 {
    4.0
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            epsilon: Vec::new(),
            alpha: Vec::new(),
            cells_per_epsilon: default_cells_per_eps(),
            compare_time: None,
        }
    }
}

/// A complete, validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub grid: GridConfig,
    pub model: ModelConfig,
    pub init: InitConfig,
    pub stepping: SteppingConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default)]
    pub compare: CompareConfig,
    #[serde(default)]
    pub sweep: SweepConfig,
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(text: &str, e: toml::de::Error) -> ConfigError {
    match e.span() {
        Some(span) => ConfigError::Parse {
            line: line_of(text, span.start),
            message: e.message().to_string(),
        },
        None => ConfigError::Schema(e.message().to_string()),
    }
}

/// Parse and validate a config document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    parse_config_with::<&str>(text, &[])
}

/// Parse, apply `section.key=value` overrides, then validate.
pub fn parse_config_with<S: AsRef<str>>(
    text: &str,
    overrides: &[S],
) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = if overrides.is_empty() {
        toml::from_str(text).map_err(|e| parse_error(text, e))?
    } else {
        let mut doc: toml::Table = text.parse().map_err(|e| parse_error(text, e))?;
        for spec in overrides {
            apply_override(&mut doc, spec.as_ref())?;
        }
        RunConfig::deserialize(doc).map_err(|e| ConfigError::Schema(e.message().to_string()))?
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config<S: AsRef<str>>(path: &Path, overrides: &[S]) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config_with(&text, overrides)
}

fn parse_value(raw: &str) -> toml::Value {
    let doc = format!("v = {raw}");
    match doc.parse::<toml::Table>() {
        Ok(mut t) => t
            .remove("v")
            .unwrap_or_else(|| toml::Value::String(raw.to_string())),
        Err(_) => toml::Value::String(raw.to_string()),
    }
}

/// Set `a.b.c = value` in `doc`, creating intermediate tables.
pub fn apply_override(doc: &mut toml::Table, spec: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::Override {
        spec: spec.to_string(),
        message: message.to_string(),
    };
    let (path, raw) = spec
        .split_once('=')
        .ok_or_else(|| err("expected key=value"))?;
    let keys: Vec<&str> = path.trim().split('.').map(str::trim).collect();
    if keys.iter().any(|k| k.is_empty()) {
        return Err(err("empty key segment"));
    }
    let mut table = doc;
    for key in &keys[..keys.len() - 1] {
        let entry = table
            .entry(key.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()));
        table = entry
            .as_table_mut()
            .ok_or_else(|| err(&format!("'{key}' is not a section")))?;
    }
    table.insert(keys[keys.len() - 1].to_string(), parse_value(raw.trim()));
    Ok(())
}

impl RunConfig {
    pub fn ndim(&self) -> usize {
        self.grid.dims.len()
    }

    pub fn lengths(&self) -> Vec<f64> {
        self.grid
            .lengths
            .clone()
            .unwrap_or_else(|| vec![1.0; self.ndim()])
    }

    pub fn grid(&self) -> Result<Grid, ConfigError> {
        Grid::new(&self.grid.dims, &self.lengths()).map_err(|e| invalid("grid", e.to_string()))
    }

    pub fn model_params(&self) -> ModelParams {
        let m = &self.model;
        let variant = match m.variant {
            VariantName::Stilde => Variant::STilde,
            VariantName::SOld => Variant::SOld,
            VariantName::ConstGamma => Variant::ConstGamma(m.gamma_const.unwrap_or(0.0)),
        };
        ModelParams {
            epsilon: m.epsilon,
            tau: m.tau,
            sigma: m.sigma,
            alpha: m.alpha,
            k: m.k,
            gamma0: m.gamma0,
            u1: m.u1,
            m: m.m,
            variant,
        }
    }

    pub fn policy(&self) -> StepPolicy {
        StepPolicy {
            cfl_safety: self.stepping.cfl_safety,
            u_scheme: match self.stepping.u_scheme {
                SchemeName::Explicit => UScheme::Explicit,
                SchemeName::Implicit => UScheme::Implicit,
            },
            dt_override: self.stepping.dt_override,
        }
    }

    /// Disk center (domain center by default), or `None` for stripes.
    pub fn disk(&self) -> Option<(Vec<f64>, f64)> {
        match &self.init.phi {
            PhiInit::Disk { radius, center } => {
                let c = center
                    .clone()
                    .unwrap_or_else(|| self.lengths().iter().map(|l| 0.5 * l).collect());
                Some((c, *radius))
            }
            PhiInit::Stripe { .. } => None,
        }
    }

    pub fn initial_state(&self) -> Result<SimState, ConfigError> {
        let grid = self.grid()?;
        let p = self.model_params();
        let phi = match &self.init.phi {
            PhiInit::Disk { .. } => {
                let (c, r) = self.disk().expect("disk");
                init::disk_profile(&grid, &c, r, p.epsilon)
            }
            PhiInit::Stripe {
                axis,
                position,
                width,
            } => init::stripe_profile(&grid, *axis, *position, *width, p.epsilon),
        };
        let u = match &self.init.u {
            UInit::Const { value } => ScalarField::constant(&grid, *value),
            UInit::Sine {
                axis,
                mean,
                amplitude,
            } => init::sine_field(&grid, *axis, *mean, *amplitude),
        };
        SimState::new(phi, u, &p).map_err(|e| invalid("init", e.to_string()))
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let n = self.ndim();
        if !(n == 2 || n == 3) {
            return Err(invalid("grid.dims", format!("need 2 or 3 axes, got {n}")));
        }
        if let Some(l) = &self.grid.lengths {
            if l.len() != n {
                return Err(invalid("grid.lengths", "must have one entry per axis"));
            }
        }
        self.grid()?;
        let m = &self.model;
        if !(m.epsilon > 0.0) {
            return Err(invalid(
                "model.epsilon",
                format!("must be positive, got {}", m.epsilon),
            ));
        }
        match (m.variant, m.gamma_const) {
            (VariantName::ConstGamma, None) => {
                return Err(invalid(
                    "model.gamma_const",
                    "required by variant const_gamma",
                ))
            }
            (VariantName::ConstGamma, Some(_)) | (_, None) => {}
            (_, Some(_)) => {
                return Err(invalid(
                    "model.gamma_const",
                    "only used by variant const_gamma",
                ))
            }
        }
        self.model_params()
            .validate()
            .map_err(|e| invalid("model", e.to_string()))?;
        let lengths = self.lengths();
        match &self.init.phi {
            PhiInit::Disk { radius, center } => {
                if !(*radius > 0.0) {
                    return Err(invalid("init.phi.radius", "must be positive"));
                }
                if let Some(c) = center {
                    if c.len() != n {
                        return Err(invalid("init.phi.center", "must have one entry per axis"));
                    }
                }
            }
            PhiInit::Stripe { axis, width, .. } => {
                if *axis >= n {
                    return Err(invalid(
                        "init.phi.axis",
                        format!("axis {axis} out of range"),
                    ));
                }
                if !(*width > 0.0 && *width < lengths[*axis]) {
                    return Err(invalid("init.phi.width", "must lie strictly inside (0, L)"));
                }
            }
        }
        match &self.init.u {
            UInit::Const { value } => {
                if !(*value > 0.0) || !value.is_finite() {
                    return Err(invalid(
                        "init.u",
                        "u0 positivity violated: value must be > 0",
                    ));
                }
            }
            UInit::Sine {
                axis,
                mean,
                amplitude,
            } => {
                if *axis >= n {
                    return Err(invalid("init.u.axis", format!("axis {axis} out of range")));
                }
                if !(amplitude.abs() < *mean) {
                    return Err(invalid(
                        "init.u",
                        format!(
                            "u0 positivity violated: |amplitude| = {} must be below mean = {}",
                            amplitude.abs(),
                            mean
                        ),
                    ));
                }
            }
        }
        let s = &self.stepping;
        if !(s.cfl_safety > 0.0 && s.cfl_safety <= 1.0) {
            return Err(invalid("stepping.cfl_safety", "must lie in (0, 1]"));
        }
        if let Some(dt) = s.dt_override {
            if !(dt > 0.0) || !dt.is_finite() {
                return Err(invalid("stepping.dt_override", "must be positive"));
            }
        }
        if !(s.t_end >= 0.0) || !s.t_end.is_finite() {
            return Err(invalid("stepping.t_end", "must be finite and nonnegative"));
        }
        if s.cadence == 0 {
            return Err(invalid("stepping.cadence", "must be at least 1"));
        }
        let c = &self.compare;
        if !(c.tolerance > 0.0) {
            return Err(invalid("compare.tolerance", "must be positive"));
        }
        if !(c.r_max_factor >= 3.0) {
            return Err(invalid("compare.r_max_factor", "must be at least 3"));
        }
        if c.cells_per_radius < 50 {
            return Err(invalid("compare.cells_per_radius", "must be at least 50"));
        }
        if !(self.sweep.cells_per_epsilon >= 1.0) {
            return Err(invalid("sweep.cells_per_epsilon", "must be at least 1"));
        }
        Ok(())
    }

    /// Serialize back to TOML (used to store the resolved config of a run).
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}
