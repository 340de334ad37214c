use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::config::{DataSpec, ExperimentConfig, InitSpec, MethodSpec, ObjectiveSpec};
use super::metrics::{MetricRow, MetricsWriter, RunRecord};
use crate::analysis::{error_bound, estimate_l_eps, track_delta};
use crate::baselines::{Bccd, BudgetLedger, Direction, FullFdGd, Optimizer, RandomizedZo};
use crate::error::{Error, Result};
use crate::objectives::{
    load_csv_dataset, mlp_regression_objective, oscillatory_quadratic, quadratic_objective, rosenbrock,
    synthetic_regression, BatchOrder, Dataset, MinibatchSampler, MlpRegression, MlpSpec, Objective, Oscillatory,
    Quadratic, Rosenbrock, SyntheticSpec,
};
use crate::optimizer::Cocd;
use crate::param_store::ParameterStore;

/// An objective built from its spec, with the held-out split for MLPs.
pub enum BuiltObjective {
    Quadratic(Quadratic),
    Rosenbrock(Rosenbrock),
    Oscillatory(Oscillatory),
    Mlp {
        train: MlpRegression,
        validation: Dataset,
    },
}

impl BuiltObjective {
    pub fn objective(&self) -> &dyn Objective {
        match self {
            BuiltObjective::Quadratic(q) => q,
            BuiltObjective::Rosenbrock(r) => r,
            BuiltObjective::Oscillatory(o) => o,
            BuiltObjective::Mlp { train, .. } => train,
        }
    }

    pub fn train_rows(&self) -> usize {
        match self {
            BuiltObjective::Mlp { train, .. } => train.dataset().rows(),
            _ => 0,
        }
    }

    /// Held-out MSE for MLPs, the objective itself otherwise.
    pub fn validation_loss(&self, store: &ParameterStore) -> f64 {
        match self {
            BuiltObjective::Mlp { train, validation } if validation.rows() > 0 => {
                train.mse_on(store, validation, None)
            }
            other => other.objective().loss(store, None),
        }
    }
}

pub fn build_objective(config: &ExperimentConfig) -> Result<BuiltObjective> {
    Ok(match &config.objective {
        ObjectiveSpec::Quadratic { diag, shift, .. } => {
            let diag = diag.clone().ok_or_else(|| Error::config("unresolved quadratic"))?;
            let shift = shift.clone().unwrap_or_else(|| vec![0.0; diag.len()]);
            BuiltObjective::Quadratic(quadratic_objective(diag, shift)?)
        }
        ObjectiveSpec::Rosenbrock { n } => BuiltObjective::Rosenbrock(rosenbrock(*n)?),
        ObjectiveSpec::Oscillatory { amp, freq, n } => {
            BuiltObjective::Oscillatory(oscillatory_quadratic(*amp, *freq, *n)?)
        }
        ObjectiveSpec::Mlp {
            widths,
            activation,
            data,
            validation_fraction,
        } => {
            let spec = MlpSpec::new(widths.clone(), *activation)?;
            let (nf, nt) = (widths[0], *widths.last().expect("validated widths"));
            let dataset = match data {
                DataSpec::Synthetic {
                    rows,
                    teacher_hidden,
                    target_scale,
                    noise,
                    seed,
                } => synthetic_regression(&SyntheticSpec {
                    rows: *rows,
                    n_features: nf,
                    n_targets: nt,
                    teacher_hidden: *teacher_hidden,
                    target_scale: *target_scale,
                    noise: *noise,
                    seed: seed.unwrap_or(config.seed),
                })?,
                DataSpec::Csv { path, header } => load_csv_dataset(path, nf, nt, *header)?,
            };
            let (train, validation) = dataset.split_tail(*validation_fraction);
            if train.rows() == 0 {
                return Err(Error::config("no training rows left after the validation split"));
            }
            BuiltObjective::Mlp {
                train: mlp_regression_objective(spec, train)?,
                validation,
            }
        }
    })
}

pub fn initial_store(config: &ExperimentConfig, built: &BuiltObjective) -> Result<ParameterStore> {
    let shapes = built.objective().shapes();
    let mut store = match (&config.init, built) {
        (InitSpec::Default, BuiltObjective::Mlp { train, .. }) => return Ok(train.spec().init_store(config.seed)),
        _ => ParameterStore::zeros(&shapes)?,
    };
    let n = store.total_params();
    let values: Vec<f64> = match config.init {
        InitSpec::Default => vec![1.0; n],
        InitSpec::Constant { value } => vec![value; n],
        InitSpec::Uniform { scale } => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
            (0..n).map(|_| rng.random_range(-scale..=scale)).collect()
        }
    };
    store.assign_flat(&values)?;
    Ok(store)
}

/// Optimizer for a method spec on a given store.
pub fn build_optimizer(method: &MethodSpec, store: &ParameterStore) -> Result<Box<dyn Optimizer>> {
    let n = store.total_params();
    Ok(match method {
        MethodSpec::Cocd(c) => Box::new(Cocd::new(c, store)?),
        MethodSpec::Bccd(b) => {
            let cfg = b.to_optimizer_config();
            Box::new(Bccd::new(&cfg, Some(cfg.epsilon), store)?)
        }
        MethodSpec::Spsa(r) => Box::new(RandomizedZo::new(r.to_zo_config(Direction::Rademacher), store)?),
        MethodSpec::Zosgd(r) => Box::new(RandomizedZo::new(r.to_zo_config(Direction::Gaussian), store)?),
        MethodSpec::Fullfd(f) => Box::new(FullFdGd::new(&f.to_optimizer_config(n), store)?),
    })
}

/// Budget and (inflated) `L_ε` needed for the bound column; only coordinate
/// methods with a full-length buffer have one.
fn bound_inputs(config: &ExperimentConfig, built: &BuiltObjective, store: &ParameterStore) -> Result<Option<(usize, f64)>> {
    if config.verify_every == 0 {
        return Ok(None);
    }
    let n = store.total_params();
    let Some(c) = config.optimizer.coordinate_config(n) else {
        return Ok(None);
    };
    let r = c.resolve(n)?;
    if r.memory != n {
        return Ok(None);
    }
    if r.budget == n {
        return Ok(Some((n, 0.0)));
    }
    let est = estimate_l_eps(built.objective(), store, r.epsilon, &config.sampling, None)?;
    log::info!("sampled L_eps = {} over {} pairs", est.l_eps, est.samples);
    Ok(Some((r.budget, config.sampling.safety_factor * est.l_eps)))
}

/// Runs one experiment. Rows are written to `config.output` as they are
/// produced, so a failed run leaves everything up to the failing step on
/// disk.
pub fn run_experiment(config: &ExperimentConfig) -> Result<RunRecord> {
    let started = Instant::now();
    let built = build_objective(config)?;
    let objective = built.objective();
    let mut store = initial_store(config, &built)?;
    let n = store.total_params();
    let mut optimizer = build_optimizer(&config.optimizer, &store)?;
    let queries_per_step = optimizer.queries_per_step();
    let bound = bound_inputs(config, &built, &store)?;

    let mut record = RunRecord::new(config.clone(), n, queries_per_step);
    record.l_eps_hat = bound.map(|(_, l)| l);
    let mut writer = match &config.output {
        Some(path) => Some(MetricsWriter::create(path, &record)?),
        None => None,
    };
    let initial = MetricRow::initial(objective.loss(&store, None));
    if let Some(w) = writer.as_mut() {
        w.write_row(&initial)?;
    }
    record.rows.push(initial);

    let total = config.total_steps(built.train_rows());
    let mut sampler = match config.batch_size {
        Some(size) if built.train_rows() > 0 => {
            let order = if config.shuffle {
                BatchOrder::Shuffled { seed: config.seed }
            } else {
                BatchOrder::Sequential
            };
            Some(MinibatchSampler::new(built.train_rows(), size, order)?)
        }
        _ => None,
    };
    let mut ledger = BudgetLedger::new(queries_per_step);
    let mut norms: Vec<f64> = Vec::with_capacity(total as usize);
    for t in 1..=total {
        let batch = sampler.as_mut().map(MinibatchSampler::next_batch);
        let verify = config.verify_every > 0 && t % config.verify_every == 0;
        let trace = match optimizer.step_with(&mut store, objective, batch.as_ref(), verify) {
            Ok(trace) => trace,
            Err(e) => {
                if let Some(w) = writer.as_mut() {
                    w.flush()?;
                }
                log::error!("step {t} failed: {e}");
                return Err(e);
            }
        };
        let bound_value = match (bound, trace.staleness_error) {
            (Some((budget, l_eps)), Some(_)) => {
                let delta = if norms.is_empty() {
                    0.0
                } else {
                    track_delta(&norms, n.div_ceil(budget))?.delta
                };
                Some(error_bound(n, budget, l_eps, delta)?)
            }
            _ => None,
        };
        norms.push(trace.step_norm);
        ledger.record(&trace);
        let row = MetricRow {
            step: t,
            loss: objective.loss(&store, None),
            step_norm: trace.step_norm,
            queries_cum: ledger.queries,
            oracle_queries_cum: ledger.oracle_queries,
            staleness_error: trace.staleness_error,
            bound: bound_value,
            grad_diff: trace.grad_diff,
        };
        if let Some(w) = writer.as_mut() {
            w.write_row(&row)?;
        }
        record.rows.push(row);
    }

    record.final_train_loss = record.rows.last().map(|r| r.loss);
    record.final_validation_loss = Some(built.validation_loss(&store));
    record.ledger = ledger;
    record.wall_time_secs = started.elapsed().as_secs_f64();
    if let Some(w) = writer {
        w.finish(&record)?;
    }
    Ok(record)
}
