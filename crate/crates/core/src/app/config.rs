//! JSON run configuration with named presets.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::Precond;
use crate::mesh::Bounds;
use crate::model::{CurrentField, InitialDataSpec, LlbParams, Preset};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("malformed config at `{path}`: {message}")]
    Parse { path: String, message: String },
    #[error("missing required {0}")]
    Missing(String),
    #[error("unknown preset {0:?} (expected sim1, sim2, sim3 or sim4)")]
    UnknownPreset(String),
    #[error("invalid value at `{path}`: {message}")]
    Invalid { path: String, message: String },
    #[error("cannot read config {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl ConfigError {
    fn invalid(path: &str, message: impl Into<String>) -> Self {
        ConfigError::Invalid {
            path: path.to_string(),
            message: message.into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Linearly implicit scheme; accepts `β₂ ≠ 0`.
    #[default]
    Linear,
    /// Energy-dissipative scheme solved by fixed-point iteration; requires `β₂ = 0`.
    Nonlinear,
}

/// Solver for the per-step nonsymmetric systems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StepSolver {
    Bicgstab,
    /// Banded LU with partial pivoting and iterative refinement.
    Banded,
    /// BiCGStab with a short iteration budget; on failure the run switches to
    /// the banded solver for good.
    #[default]
    Auto,
}

/// Tolerances and limits of the inner solvers. Any subset may be given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSettings {
    /// Relative residual of every mass and stiffness solve.
    pub mass_tol: f64,
    /// Relative residual of the per-step nonsymmetric systems.
    pub step_tol: f64,
    pub step_max_iter: usize,
    pub step_precond: Precond,
    pub step_solver: StepSolver,
    /// Absolute `L²` size of the fixed-point increment at which iteration stops.
    pub fp_tol: f64,
    pub fp_max_iter: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self {
            mass_tol: 1e-12,
            step_tol: 1e-10,
            step_max_iter: 5000,
            step_precond: Precond::Jacobi,
            step_solver: StepSolver::Auto,
            fp_tol: 1e-10,
            fp_max_iter: 100,
        }
    }
}

/// A fully resolved and validated run description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulationConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<String>,
    pub scheme: SchemeKind,
    pub mesh_divisions: usize,
    pub bounds: Bounds,
    pub params: LlbParams,
    pub current: CurrentField,
    pub initial: InitialDataSpec,
    pub time_step: f64,
    pub final_time: f64,
    pub snapshot_times: Vec<f64>,
    pub solver: SolverSettings,
    /// Include `-λe(e·u)` in the lagged field of the fixed-point iterate.
    pub include_anisotropy_in_iterate: bool,
    pub lumped_mass: bool,
    pub validate_current_boundary: bool,
    /// Record the per-step energy balance (costs one extra field evaluation per step).
    pub record_balance: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawParams {
    gamma: Option<f64>,
    alpha: Option<f64>,
    beta1: Option<f64>,
    beta2: Option<f64>,
    sigma: Option<f64>,
    kappa: Option<f64>,
    mu: Option<f64>,
    lambda: Option<f64>,
    e: Option<[f64; 3]>,
}

impl RawParams {
    fn resolve(&self, base: Option<LlbParams>) -> Result<LlbParams, ConfigError> {
        fn pick(v: Option<f64>, base: Option<f64>, name: &str) -> Result<f64, ConfigError> {
            v.or(base).ok_or_else(|| ConfigError::Missing(format!("params.{name}")))
        }
        Ok(LlbParams {
            gamma: pick(self.gamma, base.map(|b| b.gamma), "gamma")?,
            alpha: pick(self.alpha, base.map(|b| b.alpha), "alpha")?,
            beta1: pick(self.beta1, base.map(|b| b.beta1), "beta1")?,
            beta2: pick(self.beta2, base.map(|b| b.beta2), "beta2")?,
            sigma: pick(self.sigma, base.map(|b| b.sigma), "sigma")?,
            kappa: pick(self.kappa, base.map(|b| b.kappa), "kappa")?,
            mu: pick(self.mu, base.map(|b| b.mu), "mu")?,
            lambda: pick(self.lambda, base.map(|b| b.lambda), "lambda")?,
            e: self
                .e
                .or(base.map(|b| b.e))
                .ok_or_else(|| ConfigError::Missing("params.e".into()))?,
        })
    }
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    preset: Option<String>,
    scheme: Option<SchemeKind>,
    mesh_divisions: Option<usize>,
    bounds: Option<Bounds>,
    params: Option<RawParams>,
    current: Option<CurrentField>,
    initial: Option<InitialDataSpec>,
    #[serde(alias = "k")]
    time_step: Option<f64>,
    #[serde(alias = "T")]
    final_time: Option<f64>,
    snapshot_times: Option<Vec<f64>>,
    solver: Option<SolverSettings>,
    include_anisotropy_in_iterate: Option<bool>,
    lumped_mass: Option<bool>,
    validate_current_boundary: Option<bool>,
    record_balance: Option<bool>,
    out_dir: Option<String>,
}

pub const DEFAULT_MESH_DIVISIONS: usize = 16;

/// Parses, fills defaults and validates a JSON configuration.
pub fn parse_config(text: &str) -> Result<SimulationConfig, ConfigError> {
    let de = &mut serde_json::Deserializer::from_str(text);
    let raw: RawConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Parse {
        path: e.path().to_string(),
        message: e.inner().to_string(),
    })?;
    resolve(raw)?.validated()
}

pub fn load_config(path: &std::path::Path) -> Result<SimulationConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.display().to_string(),
        source,
    })?;
    parse_config(&text)
}

fn resolve(raw: RawConfig) -> Result<SimulationConfig, ConfigError> {
    let preset = match &raw.preset {
        Some(name) => Some(Preset::from_name(name).ok_or_else(|| ConfigError::UnknownPreset(name.clone()))?),
        None => None,
    };
    if preset.is_none() && raw.params.is_none() {
        return Err(ConfigError::Missing("\"preset\" or explicit parameter block".into()));
    }
    let params = raw.params.unwrap_or_default().resolve(preset.map(|p| p.params()))?;
    let initial = raw
        .initial
        .or(preset.map(|p| p.initial()))
        .ok_or_else(|| ConfigError::Missing("initial".into()))?;
    let time_step = raw
        .time_step
        .or(preset.map(|p| p.time_step()))
        .ok_or_else(|| ConfigError::Missing("time_step".into()))?;
    let final_time = raw
        .final_time
        .or(preset.map(|p| p.final_time()))
        .ok_or_else(|| ConfigError::Missing("final_time".into()))?;
    Ok(SimulationConfig {
        preset: raw.preset,
        scheme: raw.scheme.unwrap_or_default(),
        mesh_divisions: raw.mesh_divisions.unwrap_or(DEFAULT_MESH_DIVISIONS),
        bounds: raw.bounds.unwrap_or(Bounds::centred_unit_square()),
        params,
        current: raw
            .current
            .or(preset.map(|p| p.current()))
            .unwrap_or(CurrentField::Zero),
        initial,
        time_step,
        final_time,
        snapshot_times: raw.snapshot_times.unwrap_or_default(),
        solver: raw.solver.unwrap_or_default(),
        include_anisotropy_in_iterate: raw.include_anisotropy_in_iterate.unwrap_or(true),
        lumped_mass: raw.lumped_mass.unwrap_or(false),
        validate_current_boundary: raw.validate_current_boundary.unwrap_or(true),
        record_balance: raw.record_balance.unwrap_or(false),
        out_dir: raw.out_dir,
    })
}

impl SimulationConfig {
    /// Expands a preset with every default filled in.
    pub fn from_preset(preset: Preset) -> Self {
        resolve(RawConfig {
            preset: Some(preset.name().to_string()),
            ..Default::default()
        })
        .and_then(SimulationConfig::validated)
        .expect("presets are valid")
    }

    /// Checks every invariant and normalises the anisotropy axis.
    pub fn validated(mut self) -> Result<Self, ConfigError> {
        self.params = self.params.validated().map_err(|m| ConfigError::invalid("params", m))?;
        if self.mesh_divisions == 0 {
            return Err(ConfigError::invalid("mesh_divisions", "must be at least 1"));
        }
        self.bounds
            .validate()
            .map_err(|e| ConfigError::invalid("bounds", e.to_string()))?;
        if !(self.time_step.is_finite() && self.time_step > 0.0) {
            return Err(ConfigError::invalid(
                "time_step",
                format!("must be positive, got {}", self.time_step),
            ));
        }
        if !(self.final_time.is_finite() && self.final_time >= 0.0) {
            return Err(ConfigError::invalid(
                "final_time",
                format!("must be non-negative, got {}", self.final_time),
            ));
        }
        if let Some(t) = self.snapshot_times.iter().find(|t| !(t.is_finite() && **t >= 0.0)) {
            return Err(ConfigError::invalid("snapshot_times", format!("invalid time {t}")));
        }
        if self.scheme == SchemeKind::Nonlinear && self.params.beta2 != 0.0 {
            return Err(ConfigError::invalid(
                "params.beta2",
                format!(
                    "the nonlinear scheme requires beta2 = 0 (got {}); use the linear scheme",
                    self.params.beta2
                ),
            ));
        }
        self.current
            .validate()
            .map_err(|m| ConfigError::invalid("current", m))?;
        self.initial
            .validate()
            .map_err(|m| ConfigError::invalid("initial", m))?;
        let s = &self.solver;
        for (name, v) in [
            ("solver.mass_tol", s.mass_tol),
            ("solver.step_tol", s.step_tol),
            ("solver.fp_tol", s.fp_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(ConfigError::invalid(name, format!("must be positive, got {v}")));
            }
        }
        if s.fp_max_iter == 0 || s.step_max_iter == 0 {
            return Err(ConfigError::invalid("solver", "iteration limits must be at least 1"));
        }
        Ok(self)
    }

    /// Number of steps `N = floor(T / k)`, robust to `T` being a rounded multiple of `k`.
    pub fn num_steps(&self) -> usize {
        steps_for(self.final_time, self.time_step)
    }

    pub fn to_json_pretty(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }
}

pub(crate) fn steps_for(final_time: f64, k: f64) -> usize {
    let s = final_time / k;
    let r = s.round();
    if (s - r).abs() <= 1e-9 * s.max(1.0) {
        r as usize
    } else {
        s.floor() as usize
    }
}
