//! Comparison optimizers run at matched query budgets: block cyclic
//! coordinate descent (CoCD with γ = 0), SPSA, Gaussian-smoothing ZO-SGD,
//! and full finite-difference gradient descent.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{BatchSpec, Objective};
use crate::optimizer::{full_fd_gradient, Cocd, FdScheme, OptimizerConfig, StepTrace};
use crate::param_store::ParameterStore;

/// Common driver interface for the harness.
pub trait Optimizer {
    fn step_with(
        &mut self,
        store: &mut ParameterStore,
        objective: &dyn Objective,
        batch: Option<&BatchSpec>,
        verify: bool,
    ) -> Result<StepTrace>;

    fn queries_per_step(&self) -> u64;
}

impl Optimizer for Cocd {
    fn step_with(
        &mut self,
        store: &mut ParameterStore,
        objective: &dyn Objective,
        batch: Option<&BatchSpec>,
        verify: bool,
    ) -> Result<StepTrace> {
        Cocd::step_with(self, store, objective, batch, verify)
    }

    fn queries_per_step(&self) -> u64 {
        Cocd::queries_per_step(self)
    }
}

/// Finite-difference interval BCCD uses unless told otherwise.
pub const BCCD_DEFAULT_EPSILON: f64 = 1e-6;

/// Block cyclic coordinate descent: CoCD with the buffer cleared every step.
#[derive(Debug, Clone)]
pub struct Bccd(Cocd);

impl Bccd {
    /// Forces γ = 0; `epsilon: None` selects [`BCCD_DEFAULT_EPSILON`].
    pub fn new(base: &OptimizerConfig, epsilon: Option<f64>, store: &ParameterStore) -> Result<Self> {
        let config = OptimizerConfig {
            gamma: 0.0,
            epsilon: epsilon.unwrap_or(BCCD_DEFAULT_EPSILON),
            ..base.clone()
        };
        Ok(Bccd(Cocd::new(&config, store)?))
    }

    pub fn inner(&self) -> &Cocd {
        &self.0
    }

    pub fn step<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<StepTrace> {
        self.0.step(store, objective, batch)
    }
}

impl Optimizer for Bccd {
    fn step_with(
        &mut self,
        store: &mut ParameterStore,
        objective: &dyn Objective,
        batch: Option<&BatchSpec>,
        verify: bool,
    ) -> Result<StepTrace> {
        self.0.step_with(store, objective, batch, verify)
    }

    fn queries_per_step(&self) -> u64 {
        self.0.queries_per_step()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// ±1 entries (SPSA).
    Rademacher,
    /// Standard normal entries, unnormalized (ZO-SGD).
    Gaussian,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RandomizedZoConfig {
    pub alpha: f64,
    pub epsilon: f64,
    /// Random directions per step; each costs two queries.
    pub samples: usize,
    pub seed: u64,
    pub direction: Direction,
    pub weight_decay: f64,
}

impl RandomizedZoConfig {
    pub fn queries_per_step(&self) -> u64 {
        2 * self.samples as u64
    }

    pub(crate) fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0) || !(self.epsilon > 0.0) {
            return Err(Error::config("alpha and epsilon must be positive"));
        }
        if self.samples == 0 {
            return Err(Error::config("samples must be at least 1"));
        }
        if !(self.weight_decay >= 0.0) {
            return Err(Error::config("weight_decay must be non-negative"));
        }
        Ok(())
    }
}

/// SPSA / ZO-SGD with two-sided probes along random directions.
#[derive(Debug, Clone)]
pub struct RandomizedZo {
    config: RandomizedZoConfig,
    steps: u64,
    origin: Vec<f64>,
    direction: Vec<f64>,
    estimate: Vec<f64>,
}

/// Two-sided directional estimate averaged over `directions`, at the
/// current point. The store is left bit-identical.
pub fn directional_estimate<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParameterStore,
    epsilon: f64,
    kind: Direction,
    directions: &[Vec<f64>],
    batch: Option<&BatchSpec>,
) -> Result<Vec<f64>> {
    let origin = store.to_flat();
    let mut estimate = vec![0.0; origin.len()];
    for dir in directions {
        accumulate_sample(objective, store, &origin, dir, epsilon, kind, batch, &mut estimate)?;
    }
    let q = directions.len() as f64;
    for g in &mut estimate {
        *g /= q;
    }
    Ok(estimate)
}

#[allow(clippy::too_many_arguments)]
fn accumulate_sample<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParameterStore,
    origin: &[f64],
    dir: &[f64],
    epsilon: f64,
    kind: Direction,
    batch: Option<&BatchSpec>,
    estimate: &mut [f64],
) -> Result<()> {
    if dir.len() != origin.len() {
        return Err(Error::LengthMismatch {
            left: dir.len(),
            right: origin.len(),
        });
    }
    let probe = |store: &mut ParameterStore, sign: f64| -> Result<f64> {
        let shifted: Vec<f64> = origin.iter().zip(dir).map(|(x, d)| x + sign * epsilon * d).collect();
        store.assign_flat(&shifted)?;
        let f = objective.evaluate(store, batch);
        if f.is_finite() {
            Ok(f)
        } else {
            store.assign_flat(origin)?;
            Err(Error::Evaluation {
                coordinate: 0,
                probe: sign * epsilon,
                value: f,
            })
        }
    };
    let f_plus = probe(store, 1.0)?;
    let f_minus = probe(store, -1.0)?;
    store.assign_flat(origin)?;
    let slope = (f_plus - f_minus) / (2.0 * epsilon);
    for (g, d) in estimate.iter_mut().zip(dir) {
        *g += match kind {
            Direction::Rademacher => slope / d,
            Direction::Gaussian => slope * d,
        };
    }
    Ok(())
}

impl RandomizedZo {
    pub fn new(config: RandomizedZoConfig, store: &ParameterStore) -> Result<Self> {
        config.validate()?;
        let n = store.total_params();
        Ok(RandomizedZo {
            config,
            steps: 0,
            origin: vec![0.0; n],
            direction: vec![0.0; n],
            estimate: vec![0.0; n],
        })
    }

    pub fn config(&self) -> &RandomizedZoConfig {
        &self.config
    }

    /// Counter-based: the direction for sample `k` of step `t` is keyed by
    /// `(seed, t, k)` alone.
    fn draw_direction(&mut self, step: u64, sample: usize) {
        let mut key = [0u8; 32];
        key[..8].copy_from_slice(&self.config.seed.to_le_bytes());
        key[8..16].copy_from_slice(&step.to_le_bytes());
        key[16..24].copy_from_slice(&(sample as u64).to_le_bytes());
        let mut rng = ChaCha8Rng::from_seed(key);
        match self.config.direction {
            Direction::Rademacher => {
                for d in &mut self.direction {
                    *d = if rng.random::<bool>() { 1.0 } else { -1.0 };
                }
            }
            Direction::Gaussian => {
                for d in &mut self.direction {
                    *d = rng.sample(StandardNormal);
                }
            }
        }
    }

    pub fn step<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<StepTrace> {
        let loss = objective.loss(store, batch);
        self.origin.iter_mut().zip(store.iter_flat()).for_each(|(o, x)| *o = x);
        self.estimate.iter_mut().for_each(|g| *g = 0.0);
        for k in 0..self.config.samples {
            self.draw_direction(self.steps, k);
            accumulate_sample(
                objective,
                store,
                &self.origin,
                &self.direction,
                self.config.epsilon,
                self.config.direction,
                batch,
                &mut self.estimate,
            )?;
        }
        let q = self.config.samples as f64;
        self.estimate.iter_mut().for_each(|g| *g /= q);
        let moved = store.descend_chunk(0, &self.estimate, self.config.alpha, self.config.weight_decay)?;
        if !moved.is_finite() {
            return Err(Error::NonFinite {
                coordinate: 0,
                detail: "randomized update diverged".into(),
            });
        }
        self.steps += 1;
        Ok(StepTrace {
            step: self.steps,
            loss,
            step_norm: moved.sqrt(),
            queries: self.config.queries_per_step(),
            oracle_queries: 0,
            staleness_error: None,
            grad_diff: None,
        })
    }
}

impl Optimizer for RandomizedZo {
    fn step_with(
        &mut self,
        store: &mut ParameterStore,
        objective: &dyn Objective,
        batch: Option<&BatchSpec>,
        _verify: bool,
    ) -> Result<StepTrace> {
        self.step(store, objective, batch)
    }

    fn queries_per_step(&self) -> u64 {
        self.config.queries_per_step()
    }
}

/// Gradient descent on the full finite-difference gradient (2n queries per
/// step). Identical, bit for bit, to CoCD with `B = m = n`.
#[derive(Debug, Clone)]
pub struct FullFdGd {
    alpha: f64,
    epsilon: f64,
    scheme: FdScheme,
    weight_decay: f64,
    previous: Vec<f64>,
    steps: u64,
}

impl FullFdGd {
    pub fn new(config: &OptimizerConfig, store: &ParameterStore) -> Result<Self> {
        let r = config.resolve(store.total_params())?;
        Ok(FullFdGd {
            alpha: r.alpha,
            epsilon: r.epsilon,
            scheme: r.fd_scheme,
            weight_decay: r.weight_decay,
            previous: vec![0.0; r.n],
            steps: 0,
        })
    }

    pub fn step<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<StepTrace> {
        let n = store.total_params();
        let grad = full_fd_gradient(objective, store, self.epsilon, batch, self.scheme, false)?;
        let loss = objective.loss(store, batch);
        let diff_sq: f64 = grad
            .iter()
            .zip(&self.previous)
            .map(|(g, p)| (g - p) * (g - p))
            .sum();
        let moved = store.descend_chunk(0, &grad, self.alpha, self.weight_decay)?;
        self.previous = grad;
        self.steps += 1;
        Ok(StepTrace {
            step: self.steps,
            loss,
            step_norm: moved.sqrt(),
            queries: self.scheme.queries_for(n),
            oracle_queries: 0,
            staleness_error: None,
            grad_diff: Some(diff_sq.sqrt()),
        })
    }
}

impl Optimizer for FullFdGd {
    fn step_with(
        &mut self,
        store: &mut ParameterStore,
        objective: &dyn Objective,
        batch: Option<&BatchSpec>,
        verify: bool,
    ) -> Result<StepTrace> {
        let mut t = self.step(store, objective, batch)?;
        if verify {
            // the descent direction is the fresh gradient by construction
            t.staleness_error = Some(0.0);
        }
        Ok(t)
    }

    fn queries_per_step(&self) -> u64 {
        self.scheme.queries_for(self.previous.len())
    }
}

/// Budget bookkeeping for a run; oracle queries are tallied separately.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct BudgetLedger {
    pub queries_per_step: u64,
    pub steps: u64,
    pub queries: u64,
    pub oracle_queries: u64,
}

impl BudgetLedger {
    pub fn new(queries_per_step: u64) -> Self {
        BudgetLedger {
            queries_per_step,
            ..Default::default()
        }
    }

    pub fn record(&mut self, trace: &StepTrace) {
        self.steps += 1;
        self.queries += trace.queries;
        self.oracle_queries += trace.oracle_queries;
    }

    /// `queries == steps · queries_per_step`.
    pub fn balanced(&self) -> bool {
        self.queries == self.steps * self.queries_per_step
    }
}
