//! Run and sweep configuration documents (TOML, strict: unknown keys are errors).

use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::checkpoint::read_fields;
use crate::diagnostics::{DiagnosticsConfig, DiagnosticsError};
use crate::integrator::{ControlError, StepControl, DEFAULT_BLOWUP_FACTOR};
use crate::model::{FieldIoError, Grid, InitialData, ModelParameters, ScalarField, SignalMode, ValidationError};
use crate::solver::SolverSettings;

/// Environment variable that overrides `output_dir`.
pub const OUTPUT_DIR_ENV: &str = "KSIM_OUTPUT_DIR";

/// Largest Cartesian product a sweep may expand to unless configured otherwise.
pub const DEFAULT_MAX_RUNS: usize = 512;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Diagnostics(#[from] DiagnosticsError),
    #[error("initial data: {0}")]
    Initial(String),
    #[error("sweep: {0}")]
    Sweep(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<FieldIoError> for ConfigError {
    fn from(e: FieldIoError) -> Self {
        ConfigError::Initial(e.to_string())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialSpec {
    Constant {
        u0: f64,
        v0: f64,
    },
    /// `u0 = Σ a_i exp(−|x − c_i|² / w_i²)`, `v0 ≡ v_background`. Centers are
    /// drawn from the seed when not given explicitly; single-element width
    /// and amplitude lists apply to every bump.
    GaussianBumps {
        #[serde(default)]
        centers: Option<Vec<[f64; 2]>>,
        #[serde(default)]
        count: Option<usize>,
        widths: Vec<f64>,
        amplitudes: Vec<f64>,
        v_background: f64,
    },
    /// Directory holding `u` and `v` fields (a checkpoint directory works).
    FromFile {
        path: PathBuf,
    },
}

impl Default for InitialSpec {
    fn default() -> Self {
        InitialSpec::Constant { u0: 1.0, v0: 1.0 }
    }
}

impl InitialSpec {
    /// Three well-separated bumps of height `peak` over a small signal background.
    pub fn three_bumps(peak: f64, width: f64, v_background: f64) -> Self {
        InitialSpec::GaussianBumps {
            centers: Some(vec![[0.3, 0.35], [0.7, 0.3], [0.45, 0.72]]),
            count: None,
            widths: vec![width],
            amplitudes: vec![peak],
            v_background,
        }
    }
}

/// Step control as written in a document; the blow-up threshold defaults to
/// `1e6 · max u0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ControlSpec {
    pub dt_init: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub cfl_safety: f64,
    pub blowup_threshold: Option<f64>,
    pub t_end: f64,
}

impl Default for ControlSpec {
    fn default() -> Self {
        Self {
            dt_init: 1e-4,
            dt_min: 1e-9,
            dt_max: 1e-2,
            cfl_safety: 0.2,
            blowup_threshold: None,
            t_end: 10.0,
        }
    }
}

impl ControlSpec {
    pub fn resolve(&self, initial_max_u: f64) -> Result<StepControl, ControlError> {
        StepControl {
            dt_init: self.dt_init,
            dt_min: self.dt_min,
            dt_max: self.dt_max,
            cfl_safety: self.cfl_safety,
            blowup_threshold: self
                .blowup_threshold
                .unwrap_or(DEFAULT_BLOWUP_FACTOR * initial_max_u),
            t_end: self.t_end,
        }
        .validate()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub params: ModelParameters,
    pub grid: Grid,
    pub initial: InitialSpec,
    pub control: ControlSpec,
    pub diagnostics: DiagnosticsConfig,
    pub solver: SolverSettings,
    pub output_dir: PathBuf,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            params: ModelParameters::default(),
            grid: Grid::default(),
            initial: InitialSpec::default(),
            control: ControlSpec::default(),
            diagnostics: DiagnosticsConfig::default(),
            solver: SolverSettings::default(),
            output_dir: PathBuf::from("ksim-out"),
            seed: 0,
        }
    }
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_toml<T: serde::de::DeserializeOwned>(text: &str) -> Result<T, ConfigError> {
    toml::from_str(text).map_err(|e| ConfigError::Parse {
        line: e.span().map(|s| line_of(text, s.start)).unwrap_or(0),
        message: e.message().to_string(),
    })
}

/// Parses and validates a run document.
pub fn parse_config(text: &str) -> Result<RunConfig, ConfigError> {
    let cfg: RunConfig = parse_toml(text)?;
    cfg.validate()
}

impl RunConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        parse_config(&std::fs::read_to_string(path)?)
    }

    /// Checks everything that does not need the initial data.
    pub fn validate(self) -> Result<Self, ConfigError> {
        self.params.validate()?;
        self.grid.validate()?;
        self.diagnostics.clone().validate()?;
        self.control.resolve(1.0)?;
        if let Some(threshold) = self.control.blowup_threshold {
            if !(threshold > 0.0) {
                return Err(ControlError::Invalid {
                    field: "blowup_threshold",
                    message: format!("must be > 0, got {threshold}"),
                }
                .into());
            }
        }
        if let InitialSpec::GaussianBumps {
            centers,
            count,
            widths,
            amplitudes,
            v_background,
        } = &self.initial
        {
            let n = centers.as_ref().map(Vec::len).or(*count).unwrap_or(0);
            if n == 0 {
                return Err(ConfigError::Initial("gaussian_bumps needs centers or count".into()));
            }
            for (name, list) in [("widths", widths), ("amplitudes", amplitudes)] {
                if list.len() != 1 && list.len() != n {
                    return Err(ConfigError::Initial(format!(
                        "{name} must have 1 or {n} entries, got {}",
                        list.len()
                    )));
                }
            }
            if widths.iter().any(|w| !(*w > 0.0)) || amplitudes.iter().any(|a| !(*a >= 0.0)) {
                return Err(ConfigError::Initial("widths must be > 0 and amplitudes >= 0".into()));
            }
            if !(*v_background > 0.0) {
                return Err(ValidationError::PositivityViolation("v0").into());
            }
        }
        Ok(self)
    }

    /// Replaces `output_dir` from [`OUTPUT_DIR_ENV`] when set.
    pub fn apply_env_override(&mut self) {
        if let Some(dir) = std::env::var_os(OUTPUT_DIR_ENV) {
            if !dir.is_empty() {
                self.output_dir = PathBuf::from(dir);
            }
        }
    }

    /// Builds the validated initial data on the configured grid.
    pub fn initial_data(&self) -> Result<InitialData, ConfigError> {
        let grid = self.grid;
        let data = match &self.initial {
            InitialSpec::Constant { u0, v0 } => InitialData::constant(grid, *u0, *v0),
            InitialSpec::GaussianBumps {
                centers,
                count,
                widths,
                amplitudes,
                v_background,
            } => {
                let centers: Vec<[f64; 2]> = match centers {
                    Some(c) => c.clone(),
                    None => {
                        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
                        (0..count.unwrap_or(0))
                            .map(|_| {
                                [
                                    grid.lx * rng.gen_range(0.2..0.8),
                                    grid.ly * rng.gen_range(0.2..0.8),
                                ]
                            })
                            .collect()
                    }
                };
                let pick = |list: &[f64], i: usize| if list.len() == 1 { list[0] } else { list[i] };
                let u0 = ScalarField::from_fn(grid, |x, y| {
                    centers
                        .iter()
                        .enumerate()
                        .map(|(i, c)| {
                            let w = pick(widths, i);
                            let d2 = (x - c[0]).powi(2) + (y - c[1]).powi(2);
                            pick(amplitudes, i) * (-d2 / (w * w)).exp()
                        })
                        .sum()
                });
                InitialData {
                    u0,
                    v0: ScalarField::constant(grid, *v_background),
                }
            }
            InitialSpec::FromFile { path } => {
                let (u0, v0) = read_fields(path)?;
                if u0.grid() != &grid {
                    return Err(ConfigError::Initial(format!(
                        "field grid {:?} does not match configured grid {:?}",
                        u0.grid(),
                        grid
                    )));
                }
                InitialData { u0, v0 }
            }
        };
        Ok(data.validate(&grid)?)
    }

    /// Sets one sweep axis. Names may be bare (`k`) or qualified (`params.k`).
    pub fn set_axis(&mut self, name: &str, value: f64) -> Result<(), ConfigError> {
        let bare = name.rsplit('.').next().unwrap_or(name);
        let as_count = |v: f64| -> Result<usize, ConfigError> {
            if v >= 0.0 && v.fract() == 0.0 {
                Ok(v as usize)
            } else {
                Err(ConfigError::Sweep(format!("axis `{name}` needs an integer, got {v}")))
            }
        };
        match bare {
            "chi" => self.params.chi = value,
            "r" => self.params.r = value,
            "mu" => self.params.mu = value,
            "k" => self.params.k = value,
            "alpha" => self.params.alpha = value,
            "beta" => self.params.beta = value,
            "kappa" => {
                self.params.kappa = SignalMode::try_from(as_count(value)? as u8).map_err(ConfigError::Sweep)?
            }
            "n" => {
                let n = as_count(value)?;
                self.grid.nx = n;
                self.grid.ny = n;
            }
            "nx" => self.grid.nx = as_count(value)?,
            "ny" => self.grid.ny = as_count(value)?,
            "t_end" => self.control.t_end = value,
            "dt_max" => self.control.dt_max = value,
            "seed" => self.seed = as_count(value)? as u64,
            "p_exponent" => self.diagnostics.p_exponent = value,
            "q_exponent" => self.diagnostics.q_exponent = value,
            "lambda" => self.diagnostics.lambda = value,
            _ => return Err(ConfigError::Sweep(format!("unknown sweep axis `{name}`"))),
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepAxis {
    pub name: String,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    #[serde(default)]
    pub base: RunConfig,
    #[serde(default)]
    pub axes: Vec<SweepAxis>,
    #[serde(default = "default_parallel")]
    pub max_parallel: usize,
    #[serde(default = "default_max_runs")]
    pub max_runs: usize,
}

fn default_parallel() -> usize {
    1
}

fn default_max_runs() -> usize {
    DEFAULT_MAX_RUNS
}

pub fn parse_sweep(text: &str) -> Result<SweepConfig, ConfigError> {
    let cfg: SweepConfig = parse_toml(text)?;
    cfg.validate()
}

impl SweepConfig {
    pub fn from_path(path: &Path) -> Result<Self, ConfigError> {
        parse_sweep(&std::fs::read_to_string(path)?)
    }

    pub fn validate(self) -> Result<Self, ConfigError> {
        if self.max_parallel == 0 {
            return Err(ConfigError::Sweep("max_parallel must be positive".into()));
        }
        let size = self.size();
        if size > self.max_runs {
            return Err(ConfigError::Sweep(format!(
                "{size} combinations exceed the limit of {}",
                self.max_runs
            )));
        }
        if self.axes.iter().any(|a| a.values.is_empty()) {
            return Err(ConfigError::Sweep("every axis needs at least one value".into()));
        }
        for combo in self.combinations() {
            self.expand(&combo)?;
        }
        Ok(self)
    }

    pub fn size(&self) -> usize {
        self.axes.iter().map(|a| a.values.len()).product()
    }

    /// Cartesian product in row-major order (last axis varies fastest).
    pub fn combinations(&self) -> Vec<Vec<(String, f64)>> {
        let mut out: Vec<Vec<(String, f64)>> = vec![Vec::new()];
        for axis in &self.axes {
            out = out
                .into_iter()
                .flat_map(|prefix| {
                    axis.values.iter().map(move |&v| {
                        let mut next = prefix.clone();
                        next.push((axis.name.clone(), v));
                        next
                    })
                })
                .collect();
        }
        out
    }

    /// The run configuration for one combination (validated).
    pub fn expand(&self, combo: &[(String, f64)]) -> Result<RunConfig, ConfigError> {
        let mut cfg = self.base.clone();
        for (name, value) in combo {
            cfg.set_axis(name, *value)?;
        }
        cfg.validate()
    }
}
