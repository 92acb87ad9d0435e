//! JSON model configuration.
//!
//! ```json
//! {
//!   "M": 1,
//!   "rates": [{ "type": "AffineClipped", "floor": 0.1, "intercept": 1.0, "slope": 1.0 }],
//!   "kernel": { "c": [0.5], "alpha": [1.0] },
//!   "coefficients": {
//!     "drift": { "type": "Linear", "beta": 1.0, "offset": 0.0 },
//!     "diffusion": { "type": "Constant", "sigma": 1.0 },
//!     "jump": { "type": "LinearDamping", "eta": 0.5 }
//!   },
//!   "initial": { "x": 0.0, "y": [0.0] },
//!   "run": { "grid_dt": 0.01, "burn_in_fraction": 0.1 }
//! }
//! ```
//!
//! Matrices are flat row-major arrays of length `M * M`. Component labels
//! in files are 1-based; the library is 0-based.

use std::path::{Path, PathBuf};

use hjs_core::{
    CoefficientSpec, Diffusion, Drift, IntegratorConfig, JumpMap, KernelMatrix, ModelError, ModelSpec, RateFunction,
    Scheme, SquareMatrix, State,
};
use serde::{Deserialize, Serialize};

pub const DEFAULT_GRID_DT: f64 = 0.01;
pub const DEFAULT_BURN_IN_FRACTION: f64 = 0.1;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid JSON at `{field}`: {message}")]
    Syntax { field: String, message: String },
    #[error("invalid parameter `{field}`: {reason}")]
    Invalid { field: String, reason: String },
    #[error("dimension mismatch for `{field}`: expected {expected}, found {found}")]
    Dimension {
        field: String,
        expected: usize,
        found: usize,
    },
}

impl ConfigError {
    /// Field path the error refers to, when there is one.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Io { .. } => None,
            ConfigError::Syntax { field, .. }
            | ConfigError::Invalid { field, .. }
            | ConfigError::Dimension { field, .. } => Some(field),
        }
    }

    fn invalid(field: impl Into<String>, reason: impl Into<String>) -> Self {
        ConfigError::Invalid {
            field: field.into(),
            reason: reason.into(),
        }
    }
}

impl From<ModelError> for ConfigError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::InvalidParameter { field, reason } => ConfigError::Invalid { field, reason },
            ModelError::DimensionMismatch { field, expected, found } => {
                ConfigError::Dimension { field, expected, found }
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum RateConfig {
    AffineClipped { floor: f64, intercept: f64, slope: f64 },
    Sigmoid { max: f64, steepness: f64, center: f64 },
    Constant { level: f64 },
}

impl From<RateConfig> for RateFunction {
    fn from(r: RateConfig) -> Self {
        match r {
            RateConfig::AffineClipped { floor, intercept, slope } => {
                RateFunction::AffineClipped { floor, intercept, slope }
            }
            RateConfig::Sigmoid { max, steepness, center } => RateFunction::Sigmoid { max, steepness, center },
            RateConfig::Constant { level } => RateFunction::Constant { level },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub c: Vec<f64>,
    pub alpha: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DriftConfig {
    Linear {
        beta: f64,
        #[serde(default)]
        offset: f64,
    },
    Tanh {
        amplitude: f64,
        scale: f64,
        #[serde(default)]
        offset: f64,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum DiffusionConfig {
    Constant { sigma: f64 },
    SmoothBounded { low: f64, high: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum JumpConfig {
    Constant { value: f64 },
    LinearDamping { eta: f64 },
    PowerBounded { coefficient: f64, exponent: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CoefficientsConfig {
    pub drift: DriftConfig,
    pub diffusion: DiffusionConfig,
    pub jump: JumpConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub growth_exponent: Option<f64>,
}

impl From<CoefficientsConfig> for CoefficientSpec {
    fn from(c: CoefficientsConfig) -> Self {
        let drift = match c.drift {
            DriftConfig::Linear { beta, offset } => Drift::Linear { beta, offset },
            DriftConfig::Tanh { amplitude, scale, offset } => Drift::Tanh { amplitude, scale, offset },
        };
        let diffusion = match c.diffusion {
            DiffusionConfig::Constant { sigma } => Diffusion::Constant { sigma },
            DiffusionConfig::SmoothBounded { low, high } => Diffusion::SmoothBounded { low, high },
        };
        let jump = match c.jump {
            JumpConfig::Constant { value } => JumpMap::Constant { value },
            JumpConfig::LinearDamping { eta } => JumpMap::LinearDamping { eta },
            JumpConfig::PowerBounded { coefficient, exponent } => JumpMap::PowerBounded { coefficient, exponent },
        };
        CoefficientSpec {
            drift,
            diffusion,
            jump,
            growth_exponent: c.growth_exponent,
        }
    }
}

/// A starting state `{"x": .., "y": [row-major M*M]}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StateConfig {
    pub x: f64,
    pub y: Vec<f64>,
}

impl StateConfig {
    pub fn to_state(&self, m: usize, field: &str) -> Result<State, ConfigError> {
        let y = matrix(&self.y, m, &format!("{field}.y"))?;
        if !self.x.is_finite() {
            return Err(ConfigError::invalid(format!("{field}.x"), "must be finite"));
        }
        if let Some(k) = self.y.iter().position(|v| !v.is_finite()) {
            return Err(ConfigError::invalid(format!("{field}.y[{}][{}]", k / m, k % m), "must be finite"));
        }
        Ok(State::new(self.x, y))
    }

    pub fn from_state(z: &State) -> Self {
        Self {
            x: z.x,
            y: z.y.as_slice().to_vec(),
        }
    }

    /// Parses an inline JSON state such as `{"x": 1, "y": [0.5]}`.
    pub fn from_json(text: &str, field: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            field: join_path(field, &e.path().to_string()),
            message: e.inner().to_string(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", deny_unknown_fields)]
pub enum IntegratorChoice {
    ExactOu,
    EulerMaruyama { step: f64 },
}

/// Run-shape defaults stored with the model.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSettings {
    #[serde(default = "default_grid_dt")]
    pub grid_dt: f64,
    #[serde(default = "default_burn_in_fraction")]
    pub burn_in_fraction: f64,
    /// Integrator; when absent, exact OU transitions if the coefficients
    /// allow them and Euler-Maruyama with step `grid_dt / 10` otherwise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub integrator: Option<IntegratorChoice>,
    /// Exponent of the polynomial-frame Lyapunov function; defaults to the
    /// midpoint chosen by the frame check.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub poly_m: Option<f64>,
}

fn default_grid_dt() -> f64 {
    DEFAULT_GRID_DT
}

fn default_burn_in_fraction() -> f64 {
    DEFAULT_BURN_IN_FRACTION
}

impl Default for RunSettings {
    fn default() -> Self {
        Self {
            grid_dt: DEFAULT_GRID_DT,
            burn_in_fraction: DEFAULT_BURN_IN_FRACTION,
            integrator: None,
            poly_m: None,
        }
    }
}

/// The model file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelConfig {
    #[serde(rename = "M")]
    pub m: usize,
    pub rates: Vec<RateConfig>,
    pub kernel: KernelConfig,
    pub coefficients: CoefficientsConfig,
    pub initial: StateConfig,
    #[serde(default)]
    pub run: RunSettings,
}

fn matrix(values: &[f64], m: usize, field: &str) -> Result<SquareMatrix, ConfigError> {
    if values.len() != m * m {
        return Err(ConfigError::Dimension {
            field: field.to_string(),
            expected: m * m,
            found: values.len(),
        });
    }
    Ok(SquareMatrix::from_row_major(values.to_vec()).unwrap_or_else(|| SquareMatrix::zeros(0)))
}

fn join_path(prefix: &str, path: &str) -> String {
    match (prefix.is_empty(), path == ".") {
        (true, _) => path.to_string(),
        (false, true) => prefix.to_string(),
        (false, false) => format!("{prefix}.{path}"),
    }
}

impl ModelConfig {
    pub fn from_json(text: &str) -> Result<Self, ConfigError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: ModelConfig = serde_path_to_error::deserialize(de).map_err(|e| ConfigError::Syntax {
            field: e.path().to_string(),
            message: e.inner().to_string(),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("model config serialises")
    }

    /// Checks everything `to_model` and `integrator` check.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.to_model()?;
        self.integrator()?;
        Ok(())
    }

    pub fn to_model(&self) -> Result<ModelSpec, ConfigError> {
        let m = self.m;
        if m == 0 {
            return Err(ConfigError::invalid("M", "must be a positive integer"));
        }
        if self.rates.len() != m {
            return Err(ConfigError::Dimension {
                field: "rates".into(),
                expected: m,
                found: self.rates.len(),
            });
        }
        let c = matrix(&self.kernel.c, m, "kernel.c")?;
        let alpha = matrix(&self.kernel.alpha, m, "kernel.alpha")?;
        let kernel = KernelMatrix::new(c, alpha)?;
        let initial = self.initial.to_state(m, "initial")?;
        Ok(ModelSpec::new(
            self.rates.iter().map(|&r| r.into()).collect(),
            kernel,
            self.coefficients.into(),
            initial,
        )?)
    }

    /// Resolved integrator configuration.
    pub fn integrator(&self) -> Result<IntegratorConfig, ConfigError> {
        let run = &self.run;
        if !(run.grid_dt.is_finite() && run.grid_dt > 0.0) {
            return Err(ConfigError::invalid("run.grid_dt", "must be > 0"));
        }
        if !(0.0..1.0).contains(&run.burn_in_fraction) {
            return Err(ConfigError::invalid("run.burn_in_fraction", "must lie in [0, 1)"));
        }
        let co: CoefficientSpec = self.coefficients.into();
        let scheme = match run.integrator {
            Some(IntegratorChoice::ExactOu) => Scheme::ExactOu,
            Some(IntegratorChoice::EulerMaruyama { step }) => Scheme::EulerMaruyama { step },
            None if IntegratorConfig::exact_ou(run.grid_dt).validate(&co).is_ok() => Scheme::ExactOu,
            None => Scheme::EulerMaruyama { step: run.grid_dt / 10.0 },
        };
        let cfg = IntegratorConfig {
            scheme,
            grid_dt: run.grid_dt,
        };
        cfg.validate(&co)
            .map_err(|e| ConfigError::invalid("run.integrator", e.to_string()))?;
        Ok(cfg)
    }
}

/// A parsed configuration file.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub source: PathBuf,
    pub model: ModelConfig,
}

impl RunConfig {
    pub fn model_spec(&self) -> Result<ModelSpec, ConfigError> {
        self.model.to_model()
    }
}

/// Reads and validates a model file.
pub fn parse_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    Ok(RunConfig {
        source: path.to_path_buf(),
        model: ModelConfig::from_json(&text)?,
    })
}
