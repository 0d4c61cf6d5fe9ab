//! Resolved run configuration: a serializable record of what a command is
//! about to execute. Parsing is strict — unknown fields are rejected — and
//! serialization round-trips exactly.

use std::path::PathBuf;

use anyhow::{bail, Result};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub command: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub curve: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub model: Option<String>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub t: Vec<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub samples: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    pub exact: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub assert_converged: Option<f64>,
}

impl RunConfig {
    pub fn new(command: &str) -> Self {
        RunConfig {
            command: command.to_string(),
            curve: None,
            model: None,
            t: Vec::new(),
            samples: None,
            seed: None,
            out: None,
            exact: false,
            assert_converged: None,
        }
    }

    pub fn with_curve(mut self, curve: Option<PathBuf>) -> Self {
        self.curve = curve;
        self
    }

    pub fn with_model(mut self, model: Option<String>) -> Self {
        self.model = model;
        self
    }

    pub fn with_t(mut self, t: Vec<f64>) -> Self {
        self.t = t;
        self
    }

    pub fn with_samples(mut self, samples: Option<u64>) -> Self {
        self.samples = samples;
        self
    }

    pub fn with_seed(mut self, seed: Option<u64>) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_out(mut self, out: Option<PathBuf>) -> Self {
        self.out = out;
        self
    }

    pub fn with_exact(mut self, exact: bool) -> Self {
        self.exact = exact;
        self
    }

    pub fn with_assert_converged(mut self, tol: Option<f64>) -> Self {
        self.assert_converged = tol;
        self
    }

    /// Field-level checks shared by all commands.
    pub fn validate(&self) -> Result<()> {
        if let Some(samples) = self.samples {
            if samples == 0 {
                bail!("samples must be positive");
            }
        }
        if self.t.iter().any(|v| !v.is_finite()) {
            bail!("flow times must be finite");
        }
        if let Some(tol) = self.assert_converged {
            if tol.is_nan() || tol <= 0.0 {
                bail!("convergence tolerance must be positive");
            }
        }
        Ok(())
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs serialize")
    }

    #[cfg_attr(not(test), allow(dead_code))]
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }
}
