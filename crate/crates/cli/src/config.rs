//! Experiment configuration files (JSON, unknown keys rejected).

use std::collections::BTreeSet;
use std::fs;
use std::path::{Path, PathBuf};

use num_complex::Complex64;
use precs_core::dynamics::check_branches;
use precs_core::precs::DEFAULT_EPSILON;
use precs_core::{BranchSpec, ModelSpec, SpinMagnitude};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    QubitBoson { nu: f64, g: f64 },
    QubitSpinJ { h: f64, mu: f64, j: f64 },
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, CliError> {
        let model = match *self {
            ModelConfig::QubitBoson { nu, g } => ModelSpec::qubit_boson(nu, g),
            ModelConfig::QubitSpinJ { h, mu, j } => {
                SpinMagnitude::new(j).and_then(|j| ModelSpec::qubit_spin_j(h, mu, j))
            }
        };
        model.map_err(|e| CliError::config("model", e))
    }

    /// Copy with one named parameter replaced.
    pub fn with_parameter(&self, name: Parameter, value: f64) -> Result<Self, CliError> {
        let mut out = self.clone();
        match (&mut out, name) {
            (ModelConfig::QubitBoson { nu, .. }, Parameter::Nu) => *nu = value,
            (ModelConfig::QubitBoson { g, .. }, Parameter::G) => *g = value,
            (ModelConfig::QubitSpinJ { h, .. }, Parameter::H) => *h = value,
            (ModelConfig::QubitSpinJ { mu, .. }, Parameter::Mu) => *mu = value,
            (ModelConfig::QubitSpinJ { j, .. }, Parameter::J) => *j = value,
            _ => {
                return Err(CliError::Config(format!(
                    "sweep: parameter {name:?} does not belong to the configured model"
                )))
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BranchConfig {
    pub gamma: String,
    pub omega: f64,
    pub c_re: f64,
    #[serde(default)]
    pub c_im: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    pub n1: usize,
    pub n2: usize,
    /// Plane half-width; defaults to the largest excursion plus 4.
    #[serde(default)]
    pub half_width: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimeConfig {
    /// End of the snapshot window; defaults to one model period.
    #[serde(default)]
    pub t_max: Option<f64>,
    /// Number of snapshot intervals (n_steps + 1 snapshots).
    pub n_steps: usize,
    /// Steps of the time grid used for trajectories and decoherence intervals.
    #[serde(default = "default_interval_steps")]
    pub interval_steps: usize,
}

fn default_interval_steps() -> usize {
    256
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Csv,
    Json,
    Ppm,
}

impl std::str::FromStr for Format {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "csv" => Ok(Format::Csv),
            "json" => Ok(Format::Json),
            "ppm" => Ok(Format::Ppm),
            other => Err(format!(
                "unknown format {other:?} (expected csv, json or ppm)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: BTreeSet<Format>,
}

fn default_formats() -> BTreeSet<Format> {
    [Format::Csv, Format::Json].into()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Parameter {
    Nu,
    G,
    H,
    Mu,
    J,
}

impl Parameter {
    pub fn name(self) -> &'static str {
        match self {
            Parameter::Nu => "nu",
            Parameter::G => "g",
            Parameter::H => "h",
            Parameter::Mu => "mu",
            Parameter::J => "j",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub parameter: Parameter,
    pub values: Vec<f64>,
    /// Evaluation time for resolution ratio, masses and heatmaps; defaults to half a period.
    #[serde(default)]
    pub t: Option<f64>,
    /// Support level used for τ_d; defaults to the top-level epsilon.
    #[serde(default)]
    pub tau_epsilon: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SampleConfig {
    pub n_runs: u64,
    /// Measurement time T; defaults to `time.t_max`.
    #[serde(default)]
    pub t: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifyConfig {
    #[serde(default)]
    pub n_max_override: Option<usize>,
    #[serde(default = "default_verify_times")]
    pub n_times: usize,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            n_max_override: None,
            n_times: default_verify_times(),
        }
    }
}

fn default_verify_times() -> usize {
    50
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub branches: Vec<BranchConfig>,
    pub grid: GridConfig,
    pub time: TimeConfig,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default)]
    pub seed: u64,
    pub outputs: OutputConfig,
    #[serde(default)]
    pub sweep: Option<SweepConfig>,
    #[serde(default)]
    pub sample: Option<SampleConfig>,
    #[serde(default)]
    pub verify: Option<VerifyConfig>,
}

fn default_epsilon() -> f64 {
    DEFAULT_EPSILON
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let config: ExperimentConfig = serde_json::from_str(text)
            .map_err(|e| CliError::Config(format!("invalid config: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text).map_err(|e| match e {
            CliError::Config(msg) => CliError::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let model = self.model()?;
        let branches = self.branch_specs()?;
        if branches.is_empty() {
            return Err(CliError::Config(
                "branches: at least one branch is required".into(),
            ));
        }
        let mut labels = BTreeSet::new();
        for b in &self.branches {
            if !labels.insert(&b.gamma) {
                return Err(CliError::Config(format!(
                    "branches: duplicate label {:?}",
                    b.gamma
                )));
            }
        }
        let min_n = 8;
        if self.grid.n1 < min_n || self.grid.n2 < min_n {
            return Err(CliError::Config(format!(
                "grid: n1 and n2 must be at least {min_n}"
            )));
        }
        if matches!(model, ModelSpec::QubitBoson { .. }) && self.grid.n1 != self.grid.n2 {
            return Err(CliError::Config(
                "grid: the plane grid is square, n1 must equal n2".into(),
            ));
        }
        if let Some(r) = self.grid.half_width {
            if !(r > 0.0 && r.is_finite()) {
                return Err(CliError::Config("grid: half_width must be positive".into()));
            }
        }
        if let Some(t) = self.time.t_max {
            if !(t > 0.0 && t.is_finite()) {
                return Err(CliError::Config("time: t_max must be positive".into()));
            }
        }
        if self.time.n_steps == 0 || self.time.interval_steps == 0 {
            return Err(CliError::Config(
                "time: n_steps and interval_steps must be positive".into(),
            ));
        }
        check_epsilon("epsilon", self.epsilon)?;
        if let Some(s) = &self.sweep {
            if s.values.is_empty() {
                return Err(CliError::Config("sweep: values must not be empty".into()));
            }
            let increasing = s.values.windows(2).all(|w| w[1] > w[0]);
            let decreasing = s.values.windows(2).all(|w| w[1] < w[0]);
            if !(increasing || decreasing) {
                return Err(CliError::Config(
                    "sweep: values must be strictly monotone".into(),
                ));
            }
            for &v in &s.values {
                self.model.with_parameter(s.parameter, v)?.build()?;
            }
            if let Some(e) = s.tau_epsilon {
                check_epsilon("sweep.tau_epsilon", e)?;
            }
            check_time("sweep.t", s.t)?;
        }
        if let Some(s) = &self.sample {
            if s.n_runs == 0 {
                return Err(CliError::Config("sample: n_runs must be positive".into()));
            }
            check_time("sample.t", s.t)?;
        }
        if let Some(v) = &self.verify {
            if v.n_times < 2 {
                return Err(CliError::Config(
                    "verify: n_times must be at least 2".into(),
                ));
            }
        }
        Ok(())
    }

    pub fn model(&self) -> Result<ModelSpec, CliError> {
        self.model.build()
    }

    pub fn branch_specs(&self) -> Result<Vec<BranchSpec>, CliError> {
        let branches: Vec<BranchSpec> = self
            .branches
            .iter()
            .map(|b| BranchSpec::new(b.gamma.clone(), b.omega, Complex64::new(b.c_re, b.c_im)))
            .collect();
        check_branches(&branches).map_err(|e| CliError::config("branches", e))?;
        Ok(branches)
    }

    /// End of the snapshot window.
    pub fn t_max(&self, model: &ModelSpec) -> f64 {
        self.time.t_max.unwrap_or_else(|| model.period())
    }

    pub fn wants(&self, format: Format) -> bool {
        self.outputs.formats.contains(&format)
    }
}

fn check_epsilon(field: &str, e: f64) -> Result<(), CliError> {
    if !(e > 0.0 && e < 1.0) {
        return Err(CliError::Config(format!(
            "{field}: epsilon must lie in (0, 1), got {e}"
        )));
    }
    Ok(())
}

fn check_time(field: &str, t: Option<f64>) -> Result<(), CliError> {
    match t {
        Some(t) if !(t >= 0.0 && t.is_finite()) => Err(CliError::Config(format!(
            "{field}: time must be finite and non-negative"
        ))),
        _ => Ok(()),
    }
}
