//! Experiment configuration files (TOML).
//!
//! ```toml
//! [experiment]
//! name = "local_time_delta_ladder"   # one of EXPERIMENTS
//! n_paths = 4000
//! output_dir = "out/local_time"      # optional
//! write_paths = false                # per-path CSVs of the base config
//! workers = 0                        # optional; 0 = JUNCTION_WORKERS or all cores
//!
//! [sim]
//! alpha = [0.2, 0.3, 0.5]
//! x0 = 0.01
//! x0_follows_delta = true            # x0 = delta at every ladder point
//! initial_edge = "draw_from_alpha"   # or an edge number
//! delta = 0.01
//! step = 1.25e-5                     # optional, default delta^2 / 8
//! horizon = 1.0
//! seed = 42
//! vertex_rule = "bridge"             # or "proposal"
//! allow_coarse_step = false
//!
//! [field]                            # optional, default b = 0, sigma = 1
//! ellipticity = 1.0
//! drift_bound = 1.0
//! diffusion_bound = 1.0
//! [[field.edges]]                    # one entry, or one per edge
//! kind = "constant"                  # constant | linear_decay | time_ramp
//! drift = 0.0
//! sigma = 1.0
//!
//! [estimators]                       # ladders must decrease strictly
//! deltas = [0.08, 0.04, 0.02, 0.01]
//! epsilons = [0.2, 0.1, 0.05]
//! delta_over_epsilon = 0.1
//! thetas = [0.1, 0.05, 0.025]
//! subsets = [[1], [1, 2]]
//! checkpoints = [0.25, 0.5, 1.0]
//!
//! [ito]
//! functions = ["linear_symmetric", "quadratic"]
//! ladder = [[0.04, 1e-4], [0.02, 5e-5], [0.01, 2.5e-5]]   # (delta, step)
//! ladder_paths = 200
//!
//! [thresholds]                       # all optional; defaults shown
//! z = 3.0
//! ks_critical = 1.63
//! local_time_rel_gap = 0.05
//! estimator_gap = 0.05
//! occupation_rel = 0.25
//! bound_factor = 1.5
//! halving_low = 0.35
//! halving_high = 0.65
//! allowed_inversions = 1
//! ```
//!
//! Unknown keys are rejected, and parse errors carry the line and key.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::{InitialEdge, SimConfig, VertexRule};
use crate::ito::{TestFunction, CATALOG};
use crate::junction::{CoefficientField, EdgeSpec, FieldBounds, VertexWeights};

pub const EXPERIMENTS: [&str; 8] = [
    "edge_occupation",
    "radial_law",
    "local_time_delta_ladder",
    "estimator_consistency",
    "ito_residual",
    "modulus_scaling",
    "exp_moment",
    "vertex_occupation",
];

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("config parse error: {0}")]
    Parse(String),
    #[error("invalid value for `{key}`: {message}")]
    Invalid { key: String, message: String },
}

fn invalid(key: &str, message: impl Into<String>) -> ConfigError {
    ConfigError::Invalid {
        key: key.to_string(),
        message: message.into(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    pub name: String,
    pub n_paths: usize,
    #[serde(default, skip_serializing)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub write_paths: bool,
    #[serde(default, skip_serializing)]
    pub workers: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum InitialEdgeSetting {
    Edge(usize),
    Named(String),
}

impl Default for InitialEdgeSetting {
    fn default() -> Self {
        InitialEdgeSetting::Named("draw_from_alpha".into())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimSection {
    pub alpha: Vec<f64>,
    pub x0: f64,
    #[serde(default)]
    pub x0_follows_delta: bool,
    #[serde(default)]
    pub initial_edge: InitialEdgeSetting,
    pub delta: f64,
    #[serde(default)]
    pub step: Option<f64>,
    pub horizon: f64,
    pub seed: u64,
    #[serde(default)]
    pub vertex_rule: VertexRule,
    #[serde(default)]
    pub allow_coarse_step: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldSection {
    #[serde(default = "one")]
    pub ellipticity: f64,
    #[serde(default = "one")]
    pub drift_bound: f64,
    #[serde(default = "one")]
    pub diffusion_bound: f64,
    #[serde(default = "brownian_edges")]
    pub edges: Vec<EdgeSpec>,
}

fn one() -> f64 {
    1.0
}

fn brownian_edges() -> Vec<EdgeSpec> {
    vec![EdgeSpec::Constant { drift: 0.0, sigma: 1.0 }]
}

impl Default for FieldSection {
    fn default() -> Self {
        Self {
            ellipticity: 1.0,
            drift_bound: 1.0,
            diffusion_bound: 1.0,
            edges: brownian_edges(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct EstimatorSection {
    #[serde(default)]
    pub deltas: Vec<f64>,
    #[serde(default)]
    pub epsilons: Vec<f64>,
    #[serde(default)]
    pub delta_over_epsilon: Option<f64>,
    #[serde(default)]
    pub thetas: Vec<f64>,
    #[serde(default)]
    pub subsets: Vec<Vec<usize>>,
    #[serde(default)]
    pub checkpoints: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(deny_unknown_fields)]
pub struct ItoSection {
    #[serde(default)]
    pub functions: Vec<String>,
    #[serde(default)]
    pub ladder: Vec<(f64, f64)>,
    #[serde(default)]
    pub ladder_paths: Option<usize>,
}

/// Pass/fail thresholds, echoed in every summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Thresholds {
    pub z: f64,
    pub ks_critical: f64,
    pub local_time_rel_gap: f64,
    pub estimator_gap: f64,
    pub occupation_rel: f64,
    pub bound_factor: f64,
    pub halving_low: f64,
    pub halving_high: f64,
    pub allowed_inversions: usize,
}

impl Default for Thresholds {
    fn default() -> Self {
        Self {
            z: 3.0,
            ks_critical: crate::stats::KS_CRITICAL_1PCT,
            local_time_rel_gap: 0.05,
            estimator_gap: 0.05,
            occupation_rel: 0.25,
            bound_factor: 1.5,
            halving_low: 0.35,
            halving_high: 0.65,
            allowed_inversions: 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub sim: SimSection,
    #[serde(default)]
    pub field: FieldSection,
    #[serde(default)]
    pub estimators: EstimatorSection,
    #[serde(default)]
    pub ito: ItoSection,
    #[serde(default)]
    pub thresholds: Thresholds,
}

fn strictly_decreasing(key: &str, xs: &[f64]) -> Result<(), ConfigError> {
    if xs.iter().any(|x| !(x.is_finite() && *x > 0.0)) {
        return Err(invalid(key, format!("entries must be positive: {xs:?}")));
    }
    if xs.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid(key, format!("ladder must decrease strictly: {xs:?}")));
    }
    Ok(())
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, ConfigError> {
        let cfg: Self = toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml_str(&text).map_err(|e| match e {
            ConfigError::Parse(m) => ConfigError::Parse(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !EXPERIMENTS.contains(&self.experiment.name.as_str()) {
            return Err(invalid(
                "experiment.name",
                format!("unknown experiment `{}`; known: {}", self.experiment.name, EXPERIMENTS.join(", ")),
            ));
        }
        if self.experiment.n_paths == 0 {
            return Err(invalid("experiment.n_paths", "must be at least 1"));
        }
        let est = &self.estimators;
        strictly_decreasing("estimators.deltas", &est.deltas)?;
        strictly_decreasing("estimators.epsilons", &est.epsilons)?;
        strictly_decreasing("estimators.thetas", &est.thetas)?;
        let ladder_deltas: Vec<f64> = self.ito.ladder.iter().map(|p| p.0).collect();
        let ladder_steps: Vec<f64> = self.ito.ladder.iter().map(|p| p.1).collect();
        strictly_decreasing("ito.ladder", &ladder_deltas)?;
        strictly_decreasing("ito.ladder", &ladder_steps)?;
        if let Some(r) = est.delta_over_epsilon {
            if !(r > 0.0 && r.is_finite()) {
                return Err(invalid("estimators.delta_over_epsilon", "must be positive"));
            }
        }
        let edge_count = self.sim.alpha.len();
        for s in &est.subsets {
            if s.is_empty() || s.iter().any(|&e| e == 0 || e > edge_count) {
                return Err(invalid("estimators.subsets", format!("bad subset {s:?} for {edge_count} edges")));
            }
        }
        for name in &self.ito.functions {
            if !CATALOG.contains(&name.as_str()) {
                return Err(invalid(
                    "ito.functions",
                    format!("unknown test function `{name}`; known: {}", CATALOG.join(", ")),
                ));
            }
        }
        let fe = self.field.edges.len();
        if fe != 1 && fe != edge_count {
            return Err(invalid(
                "field.edges",
                format!("give one entry or one per edge ({edge_count}), got {fe}"),
            ));
        }
        self.sim_config().map(|_| ())
    }

    pub fn alpha(&self) -> Result<VertexWeights, ConfigError> {
        VertexWeights::new(self.sim.alpha.clone()).map_err(|e| invalid("sim.alpha", e.to_string()))
    }

    pub fn field(&self) -> Result<CoefficientField, ConfigError> {
        let n = self.sim.alpha.len();
        let specs = if self.field.edges.len() == 1 {
            vec![self.field.edges[0].clone(); n]
        } else {
            self.field.edges.clone()
        };
        let bounds = FieldBounds {
            ellipticity: self.field.ellipticity,
            drift_bound: self.field.drift_bound,
            diffusion_bound: self.field.diffusion_bound,
        };
        CoefficientField::from_specs(specs, bounds, self.sim.horizon).map_err(|e| invalid("field", e.to_string()))
    }

    /// Base simulation config.
    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        let initial_edge = match &self.sim.initial_edge {
            InitialEdgeSetting::Edge(e) => InitialEdge::Fixed(*e),
            InitialEdgeSetting::Named(s) if s == "draw_from_alpha" => InitialEdge::DrawFromAlpha,
            InitialEdgeSetting::Named(s) => {
                return Err(invalid(
                    "sim.initial_edge",
                    format!("expected an edge number or \"draw_from_alpha\", got `{s}`"),
                ))
            }
        };
        let cfg = SimConfig {
            field: self.field()?,
            alpha: self.alpha()?,
            x0: self.sim.x0,
            initial_edge,
            delta: self.sim.delta,
            step: self.sim.step,
            horizon: self.sim.horizon,
            seed: self.sim.seed,
            vertex_rule: self.sim.vertex_rule,
            allow_coarse_step: self.sim.allow_coarse_step,
        };
        let cfg = self.at_delta(&cfg, cfg.delta);
        cfg.validate().map_err(|e| invalid("sim", e.to_string()))?;
        Ok(cfg)
    }

    /// `base` moved to `delta`, carrying `x0` along when configured.
    pub fn at_delta(&self, base: &SimConfig, delta: f64) -> SimConfig {
        let mut cfg = base.with_delta(delta);
        if self.sim.x0_follows_delta {
            cfg.x0 = delta;
        }
        cfg
    }

    pub fn test_functions(&self) -> Result<Vec<TestFunction>, ConfigError> {
        let n = self.sim.alpha.len();
        self.ito
            .functions
            .iter()
            .map(|name| TestFunction::catalog(name, n).map_err(|e| invalid("ito.functions", e.to_string())))
            .collect()
    }
}
