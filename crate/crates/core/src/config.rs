//! TOML-backed application settings. Every field has a default, so a
//! missing file, an empty file, and a partial file are all valid; CLI
//! flags override whatever the file says.

use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dta::DtaParams;
use crate::neural::TrainConfig;
use crate::odgen::{SolveOptions, FEASIBILITY_TOL};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config {path}: {msg}")]
    Parse { path: String, msg: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AppConfig {
    pub solver: SolverSection,
    pub assignment: AssignmentSection,
    pub training: TrainingSection,
    pub profile: ProfileSection,
}

impl Default for AppConfig {
    fn default() -> Self {
        AppConfig {
            solver: SolverSection::default(),
            assignment: AssignmentSection::default(),
            training: TrainingSection::default(),
            profile: ProfileSection::default(),
        }
    }
}

/// Demand-recovery solver settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverSection {
    pub max_iterations: usize,
    pub rel_improvement: f64,
    /// When true, a solution that fails to reproduce the observed totals
    /// within tolerance is an error rather than a silent best effort.
    pub check_feasibility: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let base = SolveOptions::default();
        SolverSection {
            max_iterations: base.max_iterations,
            rel_improvement: base.rel_improvement,
            check_feasibility: true,
        }
    }
}

impl SolverSection {
    pub fn to_options(&self) -> SolveOptions {
        SolveOptions {
            max_iterations: self.max_iterations,
            rel_improvement: self.rel_improvement,
            feasibility_tol: self.check_feasibility.then_some(FEASIBILITY_TOL),
        }
    }
}

/// Traffic-assignment loop settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AssignmentSection {
    pub sensitivity: f64,
    pub max_iterations: u32,
    pub convergence_epsilon: f64,
}

impl Default for AssignmentSection {
    fn default() -> Self {
        let base = DtaParams::default();
        AssignmentSection {
            sensitivity: base.sensitivity,
            max_iterations: base.max_iterations,
            convergence_epsilon: base.convergence_epsilon,
        }
    }
}

impl AssignmentSection {
    pub fn to_params(&self) -> DtaParams {
        DtaParams {
            sensitivity: self.sensitivity,
            max_iterations: self.max_iterations,
            convergence_epsilon: self.convergence_epsilon,
        }
    }
}

/// Neural-network training settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingSection {
    pub hidden_size: usize,
    pub learning_rate: f64,
    pub epochs: u32,
    pub batch_size: usize,
    pub dropout_rate: f64,
    pub l1_lambda: f64,
    pub warm_output_bias: bool,
    pub seed: u64,
}

impl Default for TrainingSection {
    fn default() -> Self {
        let base = TrainConfig::default();
        TrainingSection {
            hidden_size: base.hidden_size,
            learning_rate: base.learning_rate,
            epochs: base.epochs,
            batch_size: base.batch_size,
            dropout_rate: base.dropout_rate,
            l1_lambda: base.l1_lambda,
            warm_output_bias: base.warm_output_bias,
            seed: base.seed,
        }
    }
}

impl TrainingSection {
    pub fn to_config(&self) -> TrainConfig {
        TrainConfig {
            hidden_size: self.hidden_size,
            learning_rate: self.learning_rate,
            epochs: self.epochs,
            batch_size: self.batch_size,
            dropout_rate: self.dropout_rate,
            l1_lambda: self.l1_lambda,
            warm_output_bias: self.warm_output_bias,
            seed: self.seed,
        }
    }
}

/// Synthetic demand generation settings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ProfileSection {
    pub days: u32,
    pub noise_amplitude: f64,
    pub seed: u64,
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection {
            days: 30,
            noise_amplitude: 0.15,
            seed: 7,
        }
    }
}

/// Loads settings from `path`, or the defaults when no path is given.
pub fn load_config(path: Option<&Path>) -> Result<AppConfig, ConfigError> {
    let Some(path) = path else {
        return Ok(AppConfig::default());
    };
    let text = std::fs::read_to_string(path)?;
    toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        msg: e.to_string(),
    })
}
