use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Serialize;

use super::config::{ExperimentConfig, MethodSpec};
use super::metrics::{fmt_f64, write_loss_table, RunRecord};
use super::run::run_experiment;
use crate::analysis::linear_fit;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepAxis {
    Epsilon,
    Gamma,
    Budget,
    /// Values `<= 1` are fractions of `n`, larger values absolute lengths.
    Memory,
}

impl FromStr for SweepAxis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "epsilon" => Ok(SweepAxis::Epsilon),
            "gamma" => Ok(SweepAxis::Gamma),
            "budget" => Ok(SweepAxis::Budget),
            "memory" => Ok(SweepAxis::Memory),
            other => Err(Error::config(format!(
                "unknown sweep axis `{other}`; expected epsilon, gamma, budget or memory"
            ))),
        }
    }
}

impl SweepAxis {
    pub fn name(self) -> &'static str {
        match self {
            SweepAxis::Epsilon => "epsilon",
            SweepAxis::Gamma => "gamma",
            SweepAxis::Budget => "budget",
            SweepAxis::Memory => "memory",
        }
    }
}

fn as_count(axis: SweepAxis, value: f64) -> Result<usize> {
    if value >= 1.0 && value.fract() == 0.0 {
        Ok(value as usize)
    } else {
        Err(Error::config(format!("{} needs a positive integer, got {value}", axis.name())))
    }
}

/// The base config with one knob set.
pub fn apply_axis(base: &ExperimentConfig, axis: SweepAxis, value: f64) -> Result<ExperimentConfig> {
    let mut c = base.clone();
    let n = base.param_count();
    let unsupported = || {
        Error::config(format!(
            "axis {} does not apply to method {}",
            axis.name(),
            base.optimizer.name()
        ))
    };
    match (&mut c.optimizer, axis) {
        (MethodSpec::Cocd(o), SweepAxis::Epsilon) => o.epsilon = value,
        (MethodSpec::Cocd(o), SweepAxis::Gamma) => o.gamma = value,
        (MethodSpec::Cocd(o), SweepAxis::Budget) => o.budget = as_count(axis, value)?,
        (MethodSpec::Cocd(o), SweepAxis::Memory) => {
            o.memory = Some(if value <= 1.0 {
                if !(value > 0.0) {
                    return Err(Error::config(format!("memory fraction must be positive, got {value}")));
                }
                ((value * n as f64).round() as usize).max(1)
            } else {
                as_count(axis, value)?
            })
        }
        (MethodSpec::Bccd(b), SweepAxis::Epsilon) => b.epsilon = value,
        (MethodSpec::Bccd(b), SweepAxis::Budget) => b.budget = as_count(axis, value)?,
        (MethodSpec::Spsa(r) | MethodSpec::Zosgd(r), SweepAxis::Epsilon) => r.epsilon = value,
        (MethodSpec::Fullfd(f), SweepAxis::Epsilon) => f.epsilon = value,
        _ => return Err(unsupported()),
    }
    c.resolve()
}

#[derive(Debug, Clone)]
pub struct SweepRecord {
    pub axis: SweepAxis,
    pub values: Vec<f64>,
    pub records: Vec<RunRecord>,
}

impl SweepRecord {
    pub fn labels(&self) -> Vec<String> {
        self.values.iter().map(|v| format!("{}={}", self.axis.name(), fmt_f64(*v))).collect()
    }

    /// One loss column per run.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_loss_table(path, "step", &self.labels(), &self.records)
    }
}

/// `dir/stem.csv` → `dir/stem_<label>.csv`.
fn suffixed(path: &Path, label: &str) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("run");
    let label = label.replace('=', "_");
    path.with_file_name(format!("{stem}_{label}.csv"))
}

/// One run per value, all from the same seed. Every value is validated
/// before the first run starts.
pub fn sweep(base: &ExperimentConfig, axis: SweepAxis, values: &[f64]) -> Result<SweepRecord> {
    if values.is_empty() {
        return Err(Error::config("a sweep needs at least one value"));
    }
    let configs: Vec<ExperimentConfig> = values
        .iter()
        .map(|&v| apply_axis(base, axis, v))
        .collect::<Result<_>>()?;
    let mut records = Vec::with_capacity(configs.len());
    for (mut c, v) in configs.into_iter().zip(values) {
        if let Some(out) = &base.output {
            c.output = Some(suffixed(out, &format!("{}={}", axis.name(), fmt_f64(*v))));
        }
        records.push(run_experiment(&c)?);
    }
    Ok(SweepRecord {
        axis,
        values: values.to_vec(),
        records,
    })
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub labels: Vec<String>,
    pub queries_per_step: u64,
    pub records: Vec<RunRecord>,
}

impl Comparison {
    /// Loss against cumulative queries, one column per method.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        write_loss_table(path, "queries", &self.labels, &self.records)
    }
}

/// Runs every config on the same objective and seed after checking that all
/// of them spend the same number of queries per step.
pub fn compare_budget_matched(configs: &[ExperimentConfig]) -> Result<Comparison> {
    let first = configs.first().ok_or_else(|| Error::config("nothing to compare"))?;
    let n = first.param_count();
    let reference = first.optimizer.queries_per_step(n)?;
    for c in &configs[1..] {
        if c.objective != first.objective || c.seed != first.seed {
            return Err(Error::config(format!(
                "{} runs on a different objective or seed than {}",
                c.optimizer.name(),
                first.optimizer.name()
            )));
        }
        let q = c.optimizer.queries_per_step(n)?;
        if q != reference {
            return Err(Error::config(format!(
                "budget mismatch: {} spends {q} queries per step but {} spends {reference} ({reference} vs {q})",
                c.optimizer.name(),
                first.optimizer.name()
            )));
        }
    }
    let mut labels: Vec<String> = Vec::with_capacity(configs.len());
    for c in configs {
        let name = c.optimizer.name();
        let dup = labels.iter().filter(|l| l.split('#').next() == Some(name)).count();
        labels.push(if dup == 0 { name.to_string() } else { format!("{name}#{dup}") });
    }
    let records = configs.iter().map(run_experiment).collect::<Result<Vec<_>>>()?;
    Ok(Comparison {
        labels,
        queries_per_step: reference,
        records,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetPoint {
    pub budget: usize,
    pub log2_budget: f64,
    pub mean_error: f64,
    /// `false` for `B = n`, whose error is zero by construction.
    pub fitted: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BudgetStudy {
    pub points: Vec<BudgetPoint>,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

impl BudgetStudy {
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut text = String::from("budget,log2_budget,mean_error,fitted\n");
        for p in &self.points {
            text.push_str(&format!(
                "{},{},{},{}\n",
                p.budget,
                fmt_f64(p.log2_budget),
                fmt_f64(p.mean_error),
                p.fitted
            ));
        }
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }
}

/// Mean staleness error per budget and the least-squares line through
/// `(log2 B, error)`. `B = n` is recorded but left out of the fit.
pub fn budget_error_study(config: &ExperimentConfig, budgets: &[usize]) -> Result<BudgetStudy> {
    let n = config.param_count();
    if !matches!(config.optimizer, MethodSpec::Cocd(_)) {
        return Err(Error::config("the budget study runs CoCD"));
    }
    if budgets.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::config(format!("budgets must be strictly ascending, got {budgets:?}")));
    }
    if let Some(&b) = budgets.iter().find(|&&b| b == 0 || b > n) {
        return Err(Error::config(format!("budget {b} outside [1, n={n}]")));
    }
    let mut base = config.clone();
    if base.verify_every == 0 {
        base.verify_every = 10;
    }
    let configs: Vec<ExperimentConfig> = budgets
        .iter()
        .map(|&b| apply_axis(&base, SweepAxis::Budget, b as f64))
        .collect::<Result<_>>()?;
    let mut points = Vec::with_capacity(budgets.len());
    for (mut c, &b) in configs.into_iter().zip(budgets) {
        if let Some(out) = &base.output {
            c.output = Some(suffixed(out, &format!("budget={b}")));
        }
        let record = run_experiment(&c)?;
        let mean_error = record
            .mean_staleness_error()
            .ok_or_else(|| Error::config("run too short for a verification checkpoint"))?;
        points.push(BudgetPoint {
            budget: b,
            log2_budget: (b as f64).log2(),
            mean_error,
            fitted: b < n,
        });
    }
    let (xs, ys): (Vec<f64>, Vec<f64>) = points
        .iter()
        .filter(|p| p.fitted)
        .map(|p| (p.log2_budget, p.mean_error))
        .unzip();
    let (slope, intercept, r_squared) = linear_fit(&xs, &ys)?;
    Ok(BudgetStudy {
        points,
        slope,
        intercept,
        r_squared,
    })
}
