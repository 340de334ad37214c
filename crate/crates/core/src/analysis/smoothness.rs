use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{BatchSpec, Objective};
use crate::optimizer::{full_fd_gradient, FdScheme};
use crate::param_store::ParameterStore;

/// Interval used as a stand-in for the true gradient when the objective has
/// no analytic one.
const REFERENCE_EPSILON: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SamplingConfig {
    pub pairs: usize,
    /// Half-width of the box around the centre point.
    pub radius: f64,
    pub seed: u64,
    /// Multiplier applied to the sampled supremum before it enters a bound.
    pub safety_factor: f64,
}

impl Default for SamplingConfig {
    fn default() -> Self {
        SamplingConfig {
            pairs: 256,
            radius: 0.1,
            seed: 0,
            safety_factor: 2.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SmoothnessEstimate {
    /// Gradient-Lipschitz estimate; `None` when only `L_ε` was sampled.
    pub l: Option<f64>,
    pub l_eps: f64,
    pub samples: usize,
    pub epsilon: f64,
}

struct PairSampler {
    rng: ChaCha8Rng,
    radius: f64,
    index: usize,
}

impl PairSampler {
    fn new(config: &SamplingConfig) -> Result<Self> {
        if config.pairs == 0 {
            return Err(Error::Precondition("at least one sample pair is required".into()));
        }
        if !(config.radius > 0.0) || !config.radius.is_finite() {
            return Err(Error::Precondition(format!(
                "sampling radius must be positive and finite, got {}",
                config.radius
            )));
        }
        Ok(PairSampler {
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            radius: config.radius,
            index: 0,
        })
    }

    /// Even pairs differ along one axis, odd pairs along a random direction.
    fn next(&mut self, center: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let r = self.radius;
        let axis = self.index.is_multiple_of(2);
        self.index += 1;
        loop {
            let x: Vec<f64> = center.iter().map(|c| c + self.rng.random_range(-r..=r)).collect();
            let h = r * (1.0 - self.rng.random::<f64>());
            let mut y = x.clone();
            if axis {
                let j = self.rng.random_range(0..x.len());
                let sign = if self.rng.random::<bool>() { 1.0 } else { -1.0 };
                y[j] += sign * h;
            } else {
                let u: Vec<f64> = (0..x.len()).map(|_| self.rng.sample(StandardNormal)).collect();
                let norm = u.iter().map(|v| v * v).sum::<f64>().sqrt();
                if norm == 0.0 {
                    continue;
                }
                for (yi, ui) in y.iter_mut().zip(&u) {
                    *yi += h * ui / norm;
                }
            }
            if x != y {
                return (x, y);
            }
        }
    }
}

fn distance(x: &[f64], y: &[f64]) -> f64 {
    x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt()
}

fn fd_at_point<O: Objective + ?Sized>(
    objective: &O,
    scratch: &mut ParameterStore,
    point: &[f64],
    epsilon: f64,
    batch: Option<&BatchSpec>,
) -> Result<Vec<f64>> {
    scratch.assign_flat(point)?;
    full_fd_gradient(objective, scratch, epsilon, batch, FdScheme::Central, true)
}

fn true_gradient_at<O: Objective + ?Sized>(
    objective: &O,
    scratch: &mut ParameterStore,
    point: &[f64],
    batch: Option<&BatchSpec>,
) -> Result<Vec<f64>> {
    scratch.assign_flat(point)?;
    match objective.gradient(scratch) {
        Some(g) => Ok(g),
        None => full_fd_gradient(objective, scratch, REFERENCE_EPSILON, batch, FdScheme::Central, true),
    }
}

fn sample<O: Objective + ?Sized>(
    objective: &O,
    center: &ParameterStore,
    epsilon: f64,
    config: &SamplingConfig,
    batch: Option<&BatchSpec>,
    with_l: bool,
) -> Result<SmoothnessEstimate> {
    if !(epsilon > 0.0) {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let mut sampler = PairSampler::new(config)?;
    let origin = center.to_flat();
    let mut scratch = center.clone();
    let mut l_eps: f64 = 0.0;
    let mut l: f64 = 0.0;
    for _ in 0..config.pairs {
        let (x, y) = sampler.next(&origin);
        let dist = distance(&x, &y);
        let gx = fd_at_point(objective, &mut scratch, &x, epsilon, batch)?;
        let gy = fd_at_point(objective, &mut scratch, &y, epsilon, batch)?;
        let worst = gx.iter().zip(&gy).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        l_eps = l_eps.max(worst / dist);
        if with_l {
            let tx = true_gradient_at(objective, &mut scratch, &x, batch)?;
            let ty = true_gradient_at(objective, &mut scratch, &y, batch)?;
            l = l.max(distance(&tx, &ty) / dist);
        }
    }
    Ok(SmoothnessEstimate {
        l: with_l.then_some(l),
        l_eps,
        samples: config.pairs,
        epsilon,
    })
}

/// Sampled `L_ε`: the largest coordinate-FD secant quotient
/// `|g_i(x) − g_i(y)| / ‖x − y‖` over seeded pairs in a box around `center`.
/// A lower bound on the true constant; costs `4n` queries per pair.
pub fn estimate_l_eps<O: Objective + ?Sized>(
    objective: &O,
    center: &ParameterStore,
    epsilon: f64,
    config: &SamplingConfig,
    batch: Option<&BatchSpec>,
) -> Result<SmoothnessEstimate> {
    sample(objective, center, epsilon, config, batch, false)
}

/// `L_ε` and `L` on the same pairs. `L` uses the analytic gradient when the
/// objective has one, otherwise central differences at a tiny interval.
pub fn estimate_smoothness<O: Objective + ?Sized>(
    objective: &O,
    center: &ParameterStore,
    epsilon: f64,
    config: &SamplingConfig,
    batch: Option<&BatchSpec>,
) -> Result<SmoothnessEstimate> {
    sample(objective, center, epsilon, config, batch, true)
}
