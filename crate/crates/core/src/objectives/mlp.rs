use std::cell::RefCell;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{BatchSpec, Dataset, Objective, QueryCounter};
use crate::error::{Error, Result};
use crate::param_store::{ParameterStore, ShapedParam};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    /// Smooth; the default for regression.
    #[default]
    Tanh,
    /// Not differentiable at zero, so the network loss is not L-smooth.
    Relu,
}

impl Activation {
    #[inline]
    fn apply(self, z: f64) -> f64 {
        match self {
            Activation::Tanh => z.tanh(),
            Activation::Relu => z.max(0.0),
        }
    }
}

/// Fully connected network, hidden layers activated, output layer linear.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub widths: Vec<usize>,
    #[serde(default)]
    pub activation: Activation,
}

impl MlpSpec {
    pub fn new(widths: Vec<usize>, activation: Activation) -> Result<Self> {
        let spec = MlpSpec { widths, activation };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.widths.len() < 2 {
            return Err(Error::config("an MLP needs at least input and output widths"));
        }
        if self.widths.contains(&0) {
            return Err(Error::config(format!("layer widths must be >= 1, got {:?}", self.widths)));
        }
        Ok(())
    }

    pub fn layers(&self) -> usize {
        self.widths.len() - 1
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// Weight `[out, in]` then bias `[out]`, layer by layer.
    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.widths
            .windows(2)
            .flat_map(|w| [vec![w[1], w[0]], vec![w[1]]])
            .collect()
    }

    /// Seeded uniform initialization in `[-s, s]`, `s = 1/sqrt(fan_in)`, for
    /// weights and biases alike.
    pub fn init_store(&self, seed: u64) -> ParameterStore {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = Vec::with_capacity(2 * self.layers());
        for w in self.widths.windows(2) {
            let s = 1.0 / (w[0] as f64).sqrt();
            for dims in [vec![w[1], w[0]], vec![w[1]]] {
                let numel = dims.iter().product();
                let values = (0..numel).map(|_| rng.random_range(-s..=s)).collect();
                params.push(ShapedParam::new(dims, values).expect("finite init"));
            }
        }
        ParameterStore::new(params)
    }
}

/// Mean squared error of an MLP over a dataset (or one of its mini-batches).
#[derive(Debug)]
pub struct MlpRegression {
    spec: MlpSpec,
    data: Dataset,
    counter: QueryCounter,
}

pub fn mlp_regression_objective(spec: MlpSpec, dataset: Dataset) -> Result<MlpRegression> {
    spec.validate()?;
    let (input, output) = (spec.widths[0], *spec.widths.last().unwrap());
    if input != dataset.n_features() || output != dataset.n_targets() {
        return Err(Error::config(format!(
            "network maps {input} -> {output} but the dataset has {} features and {} targets",
            dataset.n_features(),
            dataset.n_targets()
        )));
    }
    Ok(MlpRegression {
        spec,
        data: dataset,
        counter: QueryCounter::default(),
    })
}

/// Four independent partial sums, so the loop is not one long add chain.
fn dot(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = [0.0; 4];
    let (ca, cb) = (a.chunks_exact(4), b.chunks_exact(4));
    let (ra, rb) = (ca.remainder(), cb.remainder());
    for (x, y) in ca.zip(cb) {
        acc[0] += x[0] * y[0];
        acc[1] += x[1] * y[1];
        acc[2] += x[2] * y[2];
        acc[3] += x[3] * y[3];
    }
    let mut tail = 0.0;
    for (x, y) in ra.iter().zip(rb) {
        tail += x * y;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

thread_local! {
    static SCRATCH: RefCell<(Vec<f64>, Vec<f64>)> = const { RefCell::new((Vec::new(), Vec::new())) };
}

impl MlpRegression {
    pub fn spec(&self) -> &MlpSpec {
        &self.spec
    }

    pub fn dataset(&self) -> &Dataset {
        &self.data
    }

    /// MSE of the network on `data`, over `rows` or every row.
    pub fn mse_on(&self, store: &ParameterStore, data: &Dataset, rows: Option<&[usize]>) -> f64 {
        let count = rows.map_or(data.rows(), <[usize]>::len);
        if count == 0 {
            return 0.0;
        }
        SCRATCH.with(|cell| {
            let (a, b) = &mut *cell.borrow_mut();
            let widest = *self.spec.widths.iter().max().unwrap();
            if a.len() < widest {
                a.resize(widest, 0.0);
                b.resize(widest, 0.0);
            }
            let mut total = 0.0;
            let mut one_row = |r: usize| {
                let out = self.forward_into(store, data.feature_row(r), a, b);
                let t = data.target_row(r);
                let se: f64 = out.iter().zip(t).map(|(y, t)| (y - t) * (y - t)).sum();
                total += se / t.len() as f64;
            };
            match rows {
                Some(rows) => rows.iter().for_each(|&r| one_row(r)),
                None => (0..data.rows()).for_each(&mut one_row),
            }
            total / count as f64
        })
    }

    fn forward_into<'a>(
        &self,
        store: &ParameterStore,
        input: &[f64],
        a: &'a mut Vec<f64>,
        b: &'a mut Vec<f64>,
    ) -> &'a [f64] {
        let layers = self.spec.layers();
        a[..input.len()].copy_from_slice(input);
        let (mut cur, mut next) = (a, b);
        for l in 0..layers {
            let (fan_in, fan_out) = (self.spec.widths[l], self.spec.widths[l + 1]);
            let w = store.param(2 * l).values();
            let bias = store.param(2 * l + 1).values();
            let x = &cur[..fan_in];
            for j in 0..fan_out {
                let z = bias[j] + dot(&w[j * fan_in..(j + 1) * fan_in], x);
                next[j] = if l + 1 < layers { self.spec.activation.apply(z) } else { z };
            }
            std::mem::swap(&mut cur, &mut next);
        }
        &cur[..self.spec.widths[layers]]
    }

    /// Network output for one input row.
    pub fn predict(&self, store: &ParameterStore, input: &[f64]) -> Vec<f64> {
        let widest = *self.spec.widths.iter().max().unwrap();
        let (mut a, mut b) = (vec![0.0; widest], vec![0.0; widest]);
        self.forward_into(store, input, &mut a, &mut b).to_vec()
    }
}

impl Objective for MlpRegression {
    fn loss(&self, store: &ParameterStore, batch: Option<&BatchSpec>) -> f64 {
        self.mse_on(store, &self.data, batch.map(|b| b.rows.as_slice()))
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        self.spec.shapes()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_data() -> Dataset {
        Dataset::new(
            vec![0.5, -1.0, 1.5, 0.25, -0.75, 2.0],
            vec![1.0, -2.0, 0.5],
            2,
            1,
        )
        .unwrap()
    }

    #[test]
    fn param_count_and_layout() {
        let spec = MlpSpec::new(vec![21, 50, 50, 7], Activation::Tanh).unwrap();
        assert_eq!(spec.param_count(), 21 * 50 + 50 + 50 * 50 + 50 + 50 * 7 + 7);
        assert_eq!(spec.shapes()[0], vec![50, 21]);
        assert_eq!(spec.shapes()[1], vec![50]);
        assert_eq!(spec.init_store(1).total_params(), spec.param_count());
        assert!(MlpSpec::new(vec![3], Activation::Tanh).is_err());
        assert!(MlpSpec::new(vec![3, 0, 1], Activation::Tanh).is_err());
    }

    #[test]
    fn zero_network_predicts_zero() {
        let spec = MlpSpec::new(vec![2, 3, 1], Activation::Tanh).unwrap();
        let f = mlp_regression_objective(spec.clone(), tiny_data()).unwrap();
        let store = ParameterStore::zeros(&spec.shapes()).unwrap();
        let expected = (1.0 + 4.0 + 0.25) / 3.0;
        assert!((f.loss(&store, None) - expected).abs() < 1e-15);
    }

    #[test]
    fn linear_layer_perfect_fit() {
        // targets = x0 - 2 x1 + 0.5
        let feats = vec![1.0, 0.0, 0.0, 1.0, 2.0, 3.0];
        let targets: Vec<f64> = feats.chunks(2).map(|x| x[0] - 2.0 * x[1] + 0.5).collect();
        let data = Dataset::new(feats, targets, 2, 1).unwrap();
        let spec = MlpSpec::new(vec![2, 1], Activation::Tanh).unwrap();
        let f = mlp_regression_objective(spec.clone(), data).unwrap();
        let mut store = ParameterStore::zeros(&spec.shapes()).unwrap();
        store.assign_flat(&[1.0, -2.0, 0.5]).unwrap();
        assert_eq!(f.loss(&store, None), 0.0);
    }

    #[test]
    fn matches_hand_rolled_forward() {
        let spec = MlpSpec::new(vec![2, 2, 1], Activation::Tanh).unwrap();
        let data = tiny_data();
        let f = mlp_regression_objective(spec.clone(), data.clone()).unwrap();
        let store = spec.init_store(42);
        let p = store.to_flat();
        // layout: W1 (2x2) row-major, b1 (2), W2 (1x2), b2 (1)
        let mut expected = 0.0;
        for r in 0..3 {
            let x = data.feature_row(r);
            let h0 = (p[0] * x[0] + p[1] * x[1] + p[4]).tanh();
            let h1 = (p[2] * x[0] + p[3] * x[1] + p[5]).tanh();
            let y = p[6] * h0 + p[7] * h1 + p[8];
            expected += (y - data.target_row(r)[0]).powi(2);
        }
        expected /= 3.0;
        assert!((f.loss(&store, None) - expected).abs() < 1e-14);
        let batch = BatchSpec { rows: vec![2, 0] };
        let sub = f.loss(&store, Some(&batch));
        assert_eq!(sub, f.loss(&store, Some(&batch)));
    }

    #[test]
    fn width_mismatch_rejected() {
        let spec = MlpSpec::new(vec![3, 2, 1], Activation::Tanh).unwrap();
        assert!(matches!(mlp_regression_objective(spec, tiny_data()), Err(Error::Config(_))));
    }

    #[test]
    fn relu_clips() {
        assert_eq!(Activation::Relu.apply(-2.0), 0.0);
        assert_eq!(Activation::Relu.apply(2.0), 2.0);
    }
}
