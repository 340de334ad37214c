use super::{BatchSpec, Objective, QueryCounter};
use crate::error::{Error, Result};
use crate::param_store::ParameterStore;

/// `f(x) = ½ Σ d_i (x_i − b_i)²` with every `d_i > 0`.
#[derive(Debug)]
pub struct Quadratic {
    diag: Vec<f64>,
    shift: Vec<f64>,
    counter: QueryCounter,
}

pub fn quadratic_objective(diag: Vec<f64>, shift: Vec<f64>) -> Result<Quadratic> {
    if diag.len() != shift.len() {
        return Err(Error::config(format!(
            "diag has {} entries but shift has {}",
            diag.len(),
            shift.len()
        )));
    }
    if let Some((i, d)) = diag.iter().enumerate().find(|(_, d)| !(**d > 0.0)) {
        return Err(Error::config(format!("diag[{i}] = {d} must be positive")));
    }
    Ok(Quadratic {
        diag,
        shift,
        counter: QueryCounter::default(),
    })
}

impl Quadratic {
    pub fn diag(&self) -> &[f64] {
        &self.diag
    }

    pub fn shift(&self) -> &[f64] {
        &self.shift
    }

    /// PL / strong-convexity constant, the smallest eigenvalue.
    pub fn mu(&self) -> f64 {
        self.diag.iter().copied().fold(f64::INFINITY, f64::min)
    }
}

impl Objective for Quadratic {
    fn loss(&self, store: &ParameterStore, _batch: Option<&BatchSpec>) -> f64 {
        let mut acc = 0.0;
        for ((x, d), b) in store.iter_flat().zip(&self.diag).zip(&self.shift) {
            let r = x - b;
            acc += d * r * r;
        }
        0.5 * acc
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.diag.len()]]
    }

    fn gradient(&self, store: &ParameterStore) -> Option<Vec<f64>> {
        Some(
            store
                .iter_flat()
                .zip(&self.diag)
                .zip(&self.shift)
                .map(|((x, d), b)| d * (x - b))
                .collect(),
        )
    }

    fn smoothness(&self) -> Option<f64> {
        Some(self.diag.iter().copied().fold(0.0, f64::max))
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// Chained Rosenbrock, `Σ 100(x_{i+1} − x_i²)² + (1 − x_i)²`.
#[derive(Debug)]
pub struct Rosenbrock {
    n: usize,
    counter: QueryCounter,
}

pub fn rosenbrock(n: usize) -> Result<Rosenbrock> {
    if n < 2 {
        return Err(Error::config(format!("rosenbrock needs n >= 2, got {n}")));
    }
    Ok(Rosenbrock {
        n,
        counter: QueryCounter::default(),
    })
}

impl Objective for Rosenbrock {
    fn loss(&self, store: &ParameterStore, _batch: Option<&BatchSpec>) -> f64 {
        let mut it = store.iter_flat();
        let Some(mut prev) = it.next() else {
            return 0.0;
        };
        let mut acc = 0.0;
        for x in it {
            let a = x - prev * prev;
            let b = 1.0 - prev;
            acc += 100.0 * a * a + b * b;
            prev = x;
        }
        acc
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.n]]
    }

    fn minimum(&self) -> Option<f64> {
        Some(0.0)
    }
}

/// `f(x) = ½‖x‖² + a Σ sin(ω x_i)`: a smooth bowl with small-scale ripples.
#[derive(Debug)]
pub struct Oscillatory {
    amp: f64,
    freq: f64,
    n: usize,
    counter: QueryCounter,
}

pub fn oscillatory_quadratic(amp: f64, freq: f64, n: usize) -> Result<Oscillatory> {
    if !(amp >= 0.0) || !(freq > 0.0) {
        return Err(Error::config(format!(
            "oscillatory_quadratic needs amp >= 0 and freq > 0, got a={amp}, w={freq}"
        )));
    }
    Ok(Oscillatory {
        amp,
        freq,
        n,
        counter: QueryCounter::default(),
    })
}

impl Oscillatory {
    pub fn amp(&self) -> f64 {
        self.amp
    }

    pub fn freq(&self) -> f64 {
        self.freq
    }

    /// Exact central difference of coordinate `i`'s term at interval `eps`:
    /// `x + a·cos(ωx)·sin(ωε)/ε`.
    pub fn central_difference_closed_form(&self, x: f64, eps: f64) -> f64 {
        x + self.amp * (self.freq * x).cos() * (self.freq * eps).sin() / eps
    }
}

impl Objective for Oscillatory {
    fn loss(&self, store: &ParameterStore, _batch: Option<&BatchSpec>) -> f64 {
        let mut acc = 0.0;
        for x in store.iter_flat() {
            acc += 0.5 * x * x + self.amp * (self.freq * x).sin();
        }
        acc
    }

    fn counter(&self) -> &QueryCounter {
        &self.counter
    }

    fn shapes(&self) -> Vec<Vec<usize>> {
        vec![vec![self.n]]
    }

    fn gradient(&self, store: &ParameterStore) -> Option<Vec<f64>> {
        Some(
            store
                .iter_flat()
                .map(|x| x + self.amp * self.freq * (self.freq * x).cos())
                .collect(),
        )
    }

    fn smoothness(&self) -> Option<f64> {
        Some(1.0 + self.amp * self.freq * self.freq)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(v: &[f64]) -> ParameterStore {
        ParameterStore::from_flat(v.to_vec()).unwrap()
    }

    #[test]
    fn quadratic_values() {
        let q = quadratic_objective(vec![1.0, 2.0], vec![0.0, 0.0]).unwrap();
        assert_eq!(q.evaluate(&at(&[1.0, 1.0]), None), 1.5);
        assert_eq!(q.evaluate(&at(&[0.0, 0.0]), None), 0.0);
        let q = quadratic_objective(vec![1.0; 3], vec![0.0; 3]).unwrap();
        assert_eq!(q.evaluate(&at(&[1.0, 0.0, 0.0]), None), 0.5);
        assert_eq!(q.query_count(), 1);
        let q = quadratic_objective(vec![1.0, 3.0], vec![0.5, -2.0]).unwrap();
        assert_eq!(q.evaluate(&at(&[0.5, -2.0]), None), 0.0);
        assert_eq!(q.smoothness(), Some(3.0));
        assert_eq!(q.mu(), 1.0);
    }

    #[test]
    fn quadratic_rejects_non_positive_diag() {
        assert!(quadratic_objective(vec![1.0, 0.0], vec![0.0, 0.0]).is_err());
        assert!(quadratic_objective(vec![1.0, -1.0], vec![0.0, 0.0]).is_err());
        assert!(quadratic_objective(vec![1.0], vec![0.0, 0.0]).is_err());
    }

    #[test]
    fn rosenbrock_values() {
        let r = rosenbrock(2).unwrap();
        assert_eq!(r.loss(&at(&[1.0, 1.0]), None), 0.0);
        assert_eq!(r.loss(&at(&[0.0, 0.0]), None), 1.0);
        assert_eq!(r.loss(&at(&[-1.0, 1.0]), None), 4.0);
        assert!(rosenbrock(1).is_err());
    }

    #[test]
    fn oscillatory_values() {
        let o = oscillatory_quadratic(0.0, 3.0, 2).unwrap();
        assert_eq!(o.loss(&at(&[1.0, 2.0]), None), 2.5);
        let o = oscillatory_quadratic(0.7, 13.0, 3).unwrap();
        assert_eq!(o.loss(&at(&[0.0, 0.0, 0.0]), None), 0.0);
        assert_eq!(o.smoothness(), Some(1.0 + 0.7 * 169.0));
        assert!(oscillatory_quadratic(-1.0, 1.0, 2).is_err());
        assert!(oscillatory_quadratic(1.0, 0.0, 2).is_err());
    }

    #[test]
    fn query_count_is_exact() {
        let q = quadratic_objective(vec![1.0; 4], vec![0.0; 4]).unwrap();
        let x = at(&[1.0, 2.0, 3.0, 4.0]);
        for _ in 0..17 {
            q.evaluate(&x, None);
        }
        q.loss(&x, None);
        assert_eq!(q.query_count(), 17);
    }
}
