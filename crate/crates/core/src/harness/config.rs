use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::analysis::SamplingConfig;
use crate::baselines::{Direction, RandomizedZoConfig, BCCD_DEFAULT_EPSILON};
use crate::error::{Error, Result};
use crate::objectives::{Activation, MlpSpec, SyntheticSpec};
use crate::optimizer::{FdScheme, OptimizerConfig, WindowMode};

/// Eigenvalue `i` of the default quadratic: `0.5 + 0.5·(i mod 8)/7`, so
/// every block of eight coordinates spans `[0.5, 1]`.
pub fn default_quadratic_diag(n: usize) -> Vec<f64> {
    (0..n).map(|i| 0.5 + 0.5 * (i % 8) as f64 / 7.0).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum ObjectiveSpec {
    /// `½ Σ d_i (x_i − b_i)²`. Give `n` or `diag`; `shift` defaults to 0.
    Quadratic {
        #[serde(default)]
        n: Option<usize>,
        #[serde(default)]
        diag: Option<Vec<f64>>,
        #[serde(default)]
        shift: Option<Vec<f64>>,
    },
    Rosenbrock {
        n: usize,
    },
    Oscillatory {
        amp: f64,
        freq: f64,
        n: usize,
    },
    Mlp {
        widths: Vec<usize>,
        #[serde(default)]
        activation: Activation,
        #[serde(default)]
        data: DataSpec,
        /// Tail fraction of the rows held out for validation.
        #[serde(default = "default_validation_fraction")]
        validation_fraction: f64,
    },
}

fn default_validation_fraction() -> f64 {
    0.2
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "lowercase", deny_unknown_fields)]
pub enum DataSpec {
    /// Seeded teacher-network regression; feature and target counts come
    /// from the MLP widths. `seed: null` follows the experiment seed.
    Synthetic {
        #[serde(default = "default_rows")]
        rows: usize,
        #[serde(default = "default_teacher_hidden")]
        teacher_hidden: usize,
        #[serde(default = "default_target_scale")]
        target_scale: f64,
        #[serde(default = "default_noise")]
        noise: f64,
        #[serde(default)]
        seed: Option<u64>,
    },
    Csv {
        path: PathBuf,
        #[serde(default)]
        header: bool,
    },
}

fn default_rows() -> usize {
    SyntheticSpec::default().rows
}
fn default_teacher_hidden() -> usize {
    SyntheticSpec::default().teacher_hidden
}
fn default_target_scale() -> f64 {
    SyntheticSpec::default().target_scale
}
fn default_noise() -> f64 {
    SyntheticSpec::default().noise
}

impl Default for DataSpec {
    fn default() -> Self {
        DataSpec::Synthetic {
            rows: default_rows(),
            teacher_hidden: default_teacher_hidden(),
            target_scale: default_target_scale(),
            noise: default_noise(),
            seed: None,
        }
    }
}

impl ObjectiveSpec {
    /// Number of decision variables.
    pub fn param_count(&self) -> Result<usize> {
        match self {
            ObjectiveSpec::Quadratic { n, diag, .. } => match (n, diag) {
                (_, Some(d)) => Ok(d.len()),
                (Some(n), None) => Ok(*n),
                (None, None) => Err(Error::config("quadratic objective needs `n` or `diag`")),
            },
            ObjectiveSpec::Rosenbrock { n } | ObjectiveSpec::Oscillatory { n, .. } => Ok(*n),
            ObjectiveSpec::Mlp { widths, activation, .. } => {
                let spec = MlpSpec::new(widths.clone(), *activation)?;
                Ok(spec.param_count())
            }
        }
    }

    fn resolve(&mut self) -> Result<()> {
        let count = self.param_count()?;
        if count == 0 {
            return Err(Error::config("objective has no parameters"));
        }
        match self {
            ObjectiveSpec::Quadratic { n, diag, shift } => {
                if let Some(given) = *n {
                    if given != count {
                        return Err(Error::config(format!("quadratic n={given} but diag has {count} entries")));
                    }
                }
                *n = Some(count);
                diag.get_or_insert_with(|| default_quadratic_diag(count));
                let s = shift.get_or_insert_with(|| vec![0.0; count]);
                if s.len() != count {
                    return Err(Error::config(format!("shift has {} entries, expected {count}", s.len())));
                }
            }
            ObjectiveSpec::Mlp {
                validation_fraction, ..
            } if !(0.0..1.0).contains(validation_fraction) => {
                return Err(Error::config(format!(
                    "validation_fraction must lie in [0, 1), got {validation_fraction}"
                )));
            }
            _ => {}
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BccdSpec {
    pub alpha: f64,
    pub epsilon: f64,
    pub budget: usize,
    pub memory: Option<usize>,
    pub fd_scheme: FdScheme,
    pub weight_decay: f64,
    pub window: WindowMode,
    pub parallel_probes: bool,
}

impl Default for BccdSpec {
    fn default() -> Self {
        let base = OptimizerConfig::default();
        BccdSpec {
            alpha: base.alpha,
            epsilon: BCCD_DEFAULT_EPSILON,
            budget: base.budget,
            memory: base.memory,
            fd_scheme: base.fd_scheme,
            weight_decay: base.weight_decay,
            window: base.window,
            parallel_probes: base.parallel_probes,
        }
    }
}

impl BccdSpec {
    pub fn to_optimizer_config(&self) -> OptimizerConfig {
        OptimizerConfig {
            alpha: self.alpha,
            gamma: 0.0,
            epsilon: self.epsilon,
            budget: self.budget,
            memory: self.memory,
            fd_scheme: self.fd_scheme,
            weight_decay: self.weight_decay,
            window: self.window,
            parallel_probes: self.parallel_probes,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RandomSpec {
    pub alpha: f64,
    pub epsilon: f64,
    /// Directions per step, two queries each.
    pub samples: usize,
    pub seed: u64,
    pub weight_decay: f64,
}

impl Default for RandomSpec {
    fn default() -> Self {
        RandomSpec {
            alpha: 1e-3,
            epsilon: 1e-3,
            samples: 1,
            seed: 0,
            weight_decay: 0.0,
        }
    }
}

impl RandomSpec {
    pub fn to_zo_config(&self, direction: Direction) -> RandomizedZoConfig {
        RandomizedZoConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            samples: self.samples,
            seed: self.seed,
            direction,
            weight_decay: self.weight_decay,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FullFdSpec {
    pub alpha: f64,
    pub epsilon: f64,
    pub fd_scheme: FdScheme,
    pub weight_decay: f64,
}

impl Default for FullFdSpec {
    fn default() -> Self {
        let base = OptimizerConfig::default();
        FullFdSpec {
            alpha: base.alpha,
            epsilon: base.epsilon,
            fd_scheme: base.fd_scheme,
            weight_decay: base.weight_decay,
        }
    }
}

impl FullFdSpec {
    pub fn to_optimizer_config(&self, n: usize) -> OptimizerConfig {
        OptimizerConfig {
            alpha: self.alpha,
            epsilon: self.epsilon,
            budget: n,
            fd_scheme: self.fd_scheme,
            weight_decay: self.weight_decay,
            ..OptimizerConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum MethodSpec {
    Cocd(OptimizerConfig),
    Bccd(BccdSpec),
    Spsa(RandomSpec),
    Zosgd(RandomSpec),
    Fullfd(FullFdSpec),
}

impl MethodSpec {
    pub fn name(&self) -> &'static str {
        match self {
            MethodSpec::Cocd(_) => "cocd",
            MethodSpec::Bccd(_) => "bccd",
            MethodSpec::Spsa(_) => "spsa",
            MethodSpec::Zosgd(_) => "zosgd",
            MethodSpec::Fullfd(_) => "fullfd",
        }
    }

    /// The coordinate-buffer config, for the methods that have one.
    pub fn coordinate_config(&self, n: usize) -> Option<OptimizerConfig> {
        match self {
            MethodSpec::Cocd(c) => Some(c.clone()),
            MethodSpec::Bccd(b) => Some(b.to_optimizer_config()),
            MethodSpec::Fullfd(f) => Some(f.to_optimizer_config(n)),
            MethodSpec::Spsa(_) | MethodSpec::Zosgd(_) => None,
        }
    }

    /// Budgeted objective queries per step on an `n`-parameter problem.
    pub fn queries_per_step(&self, n: usize) -> Result<u64> {
        match self {
            MethodSpec::Spsa(r) | MethodSpec::Zosgd(r) => Ok(2 * r.samples as u64),
            MethodSpec::Fullfd(f) => Ok(f.fd_scheme.queries_for(n)),
            MethodSpec::Cocd(_) | MethodSpec::Bccd(_) => {
                let r = self.coordinate_config(n).expect("coordinate method").resolve(n)?;
                Ok(r.fd_scheme.queries_for(r.budget))
            }
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        match self {
            MethodSpec::Spsa(r) => r.to_zo_config(Direction::Rademacher).validate(),
            MethodSpec::Zosgd(r) => r.to_zo_config(Direction::Gaussian).validate(),
            _ => self.coordinate_config(n).expect("coordinate method").resolve(n).map(|_| ()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "lowercase", deny_unknown_fields)]
pub enum InitSpec {
    /// Ones for the landscapes, fan-in uniform for MLPs.
    #[default]
    Default,
    Constant { value: f64 },
    /// `U(−scale, scale)` from the experiment seed.
    Uniform { scale: f64 },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub objective: ObjectiveSpec,
    pub optimizer: MethodSpec,
    /// Exactly one of `steps` and `epochs`.
    #[serde(default)]
    pub steps: Option<u64>,
    /// Passes over the training rows; needs `batch_size`.
    #[serde(default)]
    pub epochs: Option<u64>,
    /// Rows per step for dataset objectives; `null` means the full set.
    #[serde(default)]
    pub batch_size: Option<usize>,
    #[serde(default)]
    pub shuffle: bool,
    /// Verification cadence in steps; 0 turns it off.
    #[serde(default)]
    pub verify_every: u64,
    /// Data generation and initialization seed.
    #[serde(default)]
    pub seed: u64,
    #[serde(default)]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub init: InitSpec,
    /// Pair sampling for the `L_ε` estimate behind the bound column.
    #[serde(default)]
    pub sampling: SamplingConfig,
}

/// Accepts `"cocd"` for `{"kind": "cocd"}` in the objective and optimizer slots.
fn expand_shorthand(value: &mut Value) {
    if let Value::Object(map) = value {
        for key in ["objective", "optimizer", "init"] {
            if let Some(slot) = map.get_mut(key) {
                if let Value::String(kind) = slot {
                    let mut obj = serde_json::Map::new();
                    obj.insert("kind".into(), Value::String(kind.clone()));
                    *slot = Value::Object(obj);
                }
            }
        }
    }
}

/// Parses a JSON experiment document, applies defaults and validates it.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut value: Value = serde_json::from_str(text).map_err(|e| {
        Error::config(format!("syntax error at line {}, column {}: {e}", e.line(), e.column()))
    })?;
    expand_shorthand(&mut value);
    let config: ExperimentConfig = serde_json::from_value(value).map_err(|e| Error::config(e.to_string()))?;
    config.resolve()
}

pub fn load_config(path: &std::path::Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text)
}

impl ExperimentConfig {
    /// Fills derived defaults and checks every constraint that does not
    /// need the data.
    pub fn resolve(mut self) -> Result<Self> {
        self.objective.resolve()?;
        let n = self.objective.param_count()?;
        self.optimizer.validate(n)?;
        match (self.steps, self.epochs) {
            (Some(_), Some(_)) => return Err(Error::config("give either `steps` or `epochs`, not both")),
            (None, None) => return Err(Error::config("one of `steps` or `epochs` is required")),
            (None, Some(_)) if self.batch_size.is_none() => {
                return Err(Error::config("`epochs` needs a `batch_size`"))
            }
            _ => {}
        }
        if self.batch_size == Some(0) {
            return Err(Error::config("batch_size must be at least 1"));
        }
        if self.sampling.pairs == 0 || !(self.sampling.radius > 0.0) || !(self.sampling.safety_factor >= 1.0) {
            return Err(Error::config(
                "sampling needs pairs >= 1, radius > 0 and safety_factor >= 1",
            ));
        }
        if let InitSpec::Uniform { scale } = self.init {
            if !(scale > 0.0) {
                return Err(Error::config(format!("uniform init scale must be positive, got {scale}")));
            }
        }
        Ok(self)
    }

    pub fn param_count(&self) -> usize {
        self.objective.param_count().expect("resolved config")
    }

    /// Number of optimizer steps given the training-set size.
    pub fn total_steps(&self, train_rows: usize) -> u64 {
        match (self.steps, self.epochs, self.batch_size) {
            (Some(s), _, _) => s,
            (None, Some(e), Some(b)) => e * train_rows.div_ceil(b.max(1)).max(1) as u64,
            _ => 0,
        }
    }

    /// Human-readable summary: the resolved document plus derived numbers.
    pub fn echo(&self) -> String {
        let n = self.param_count();
        let mut out = serde_json::to_string_pretty(self).expect("config serializes");
        out.push('\n');
        out.push_str(&format!("# parameters n = {n}\n"));
        if let Some(c) = self.optimizer.coordinate_config(n) {
            if let Ok(r) = c.resolve(n) {
                let pct = 100.0 * r.budget as f64 / n as f64;
                out.push_str(&format!(
                    "# budget B = {} (budget \u{2248} {pct:.1}% of parameters), memory m = {}\n",
                    r.budget, r.memory
                ));
            }
        }
        if let Ok(q) = self.optimizer.queries_per_step(n) {
            out.push_str(&format!("# queries per step = {q}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimal_config_gets_defaults() {
        let c = parse_config(r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": "cocd", "steps": 10}"#)
            .unwrap();
        let MethodSpec::Cocd(o) = &c.optimizer else { panic!() };
        assert_eq!(o.gamma, 1.0);
        assert_eq!(o.fd_scheme, FdScheme::Central);
        assert_eq!(c.verify_every, 0);
        let ObjectiveSpec::Quadratic { diag, shift, .. } = &c.objective else { panic!() };
        assert_eq!(diag.as_ref().unwrap().len(), 8);
        assert_eq!(shift.as_ref().unwrap(), &vec![0.0; 8]);
        let again = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(again, c);
    }

    #[test]
    fn rejects_bad_gamma() {
        let err = parse_config(
            r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "cocd", "gamma": 1.5}, "steps": 1}"#,
        )
        .unwrap_err();
        assert!(err.to_string().contains("gamma must lie in [0,1]"), "{err}");
    }

    #[test]
    fn rejects_unknown_keys() {
        for text in [
            r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": "cocd", "steps": 1, "stpes": 2}"#,
            r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "cocd", "alhpa": 1}, "steps": 1}"#,
            r#"{"objective": {"kind": "quadratic", "n": 8, "m": 1}, "optimizer": "cocd", "steps": 1}"#,
            r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "bccd", "gamma": 1}, "steps": 1}"#,
        ] {
            let err = parse_config(text).unwrap_err().to_string();
            assert!(err.contains("unknown field"), "{err}");
        }
    }

    #[test]
    fn syntax_errors_carry_position() {
        let err = parse_config("{\n  \"steps\": 1,\n  oops\n}").unwrap_err().to_string();
        assert!(err.contains("line 3"), "{err}");
    }

    #[test]
    fn budget_above_memory_is_named() {
        let err = parse_config(
            r#"{"objective": {"kind": "quadratic", "n": 8}, "optimizer": {"kind": "cocd", "budget": 4, "memory": 2}, "steps": 1}"#,
        )
        .unwrap_err()
        .to_string();
        assert!(err.contains("exceeds memory"), "{err}");
    }

    #[test]
    fn echo_reports_budget_share() {
        let c = parse_config(
            r#"{"objective": {"kind": "mlp", "widths": [21, 58, 58, 58, 58, 7]},
                "optimizer": {"kind": "cocd", "budget": 64}, "steps": 1}"#,
        )
        .unwrap();
        assert_eq!(c.param_count(), 11955);
        let echo = c.echo();
        assert!(echo.contains("budget \u{2248} 0.5% of parameters"), "{echo}");
    }

    #[test]
    fn bccd_defaults_to_tiny_epsilon() {
        let c = parse_config(r#"{"objective": {"kind": "rosenbrock", "n": 4}, "optimizer": "bccd", "steps": 1}"#)
            .unwrap();
        let MethodSpec::Bccd(b) = &c.optimizer else { panic!() };
        assert_eq!(b.epsilon, BCCD_DEFAULT_EPSILON);
        assert_eq!(b.to_optimizer_config().gamma, 0.0);
    }

    #[test]
    fn steps_or_epochs() {
        let base = r#"{"objective": {"kind": "quadratic", "n": 2}, "optimizer": "cocd""#;
        assert!(parse_config(&format!("{base}}}")).is_err());
        assert!(parse_config(&format!("{base}, \"steps\": 1, \"epochs\": 1}}")).is_err());
        assert!(parse_config(&format!("{base}, \"epochs\": 1}}")).is_err());
        let c = parse_config(&format!("{base}, \"epochs\": 2, \"batch_size\": 3}}")).unwrap();
        assert_eq!(c.total_steps(10), 8);
    }

    #[test]
    fn queries_per_step_by_method() {
        let n = 100;
        let cocd = MethodSpec::Cocd(OptimizerConfig {
            budget: 32,
            ..OptimizerConfig::default()
        });
        assert_eq!(cocd.queries_per_step(n).unwrap(), 64);
        let zo = MethodSpec::Zosgd(RandomSpec {
            samples: 33,
            ..RandomSpec::default()
        });
        assert_eq!(zo.queries_per_step(n).unwrap(), 66);
        assert_eq!(MethodSpec::Fullfd(FullFdSpec::default()).queries_per_step(n).unwrap(), 200);
    }
}
