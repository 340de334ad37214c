use serde::{Deserialize, Serialize};

use super::FdScheme;
use crate::error::{Error, Result};

/// Where the length-`m` descent window sits when `m < n`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum WindowMode {
    /// The window always ends at the freshest buffer entry and moves `B`
    /// coordinates per step; blocks older than `m/B` steps get no update.
    #[default]
    Sliding,
    /// Offsets never move: buffer slot `s` is applied to flat coordinate `s`.
    /// Only meaningful for `m == n`; kept for comparison.
    Fixed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    /// Coordinate refreshes per step.
    pub budget: usize,
    /// Buffer length; `None` means one slot per parameter.
    pub memory: Option<usize>,
    pub fd_scheme: FdScheme,
    pub weight_decay: f64,
    pub window: WindowMode,
    /// Evaluate the probes of one refresh on private store copies.
    pub parallel_probes: bool,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig {
            alpha: 1e-3,
            gamma: 1.0,
            epsilon: 1e-3,
            budget: 1,
            memory: None,
            fd_scheme: FdScheme::Central,
            weight_decay: 0.0,
            window: WindowMode::Sliding,
            parallel_probes: false,
        }
    }
}

/// Config checked against a problem size, with `B` and `m` made concrete.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedConfig {
    pub alpha: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub budget: usize,
    pub memory: usize,
    pub n: usize,
    pub fd_scheme: FdScheme,
    pub weight_decay: f64,
    pub window: WindowMode,
    pub parallel_probes: bool,
}

impl OptimizerConfig {
    pub fn resolve(&self, n: usize) -> Result<ResolvedConfig> {
        if n == 0 {
            return Err(Error::config("cannot optimize an empty parameter store"));
        }
        if !(self.alpha > 0.0) || !self.alpha.is_finite() {
            return Err(Error::config(format!("alpha must be positive, got {}", self.alpha)));
        }
        if !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::config(format!("gamma must lie in [0,1], got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(Error::config(format!("epsilon must be positive, got {}", self.epsilon)));
        }
        if !(self.weight_decay >= 0.0) || !self.weight_decay.is_finite() {
            return Err(Error::config(format!(
                "weight_decay must be non-negative, got {}",
                self.weight_decay
            )));
        }
        if self.budget == 0 {
            return Err(Error::config("budget B must be at least 1"));
        }
        let memory = self.memory.unwrap_or(n);
        if memory == 0 || memory > n {
            return Err(Error::config(format!("memory m must lie in [1, n={n}], got {memory}")));
        }
        let mut budget = self.budget;
        if budget > n {
            log::warn!("budget B={budget} exceeds n={n}; clamping to one full sweep per step");
            budget = n;
        }
        if budget > memory {
            return Err(Error::config(format!(
                "budget B={budget} exceeds memory m={memory}; a step would overwrite its own fresh entries"
            )));
        }
        Ok(ResolvedConfig {
            alpha: self.alpha,
            gamma: self.gamma,
            epsilon: self.epsilon,
            budget,
            memory,
            n,
            fd_scheme: self.fd_scheme,
            weight_decay: self.weight_decay,
            window: self.window,
            parallel_probes: self.parallel_probes,
        })
    }
}
