//! Coordinate-wise finite differences.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objectives::{BatchSpec, Objective};
use crate::param_store::{Cursor, ParameterStore};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum FdScheme {
    /// `(f(x+εe_i) − f(x−εe_i)) / 2ε`
    #[default]
    Central,
    /// `(f(x+εe_i) − f(x)) / ε`, with `f(x)` evaluated once per step.
    Forward,
}

impl FdScheme {
    /// Objective queries for `coords` coordinate refreshes at one point.
    pub fn queries_for(self, coords: usize) -> u64 {
        match self {
            FdScheme::Central => 2 * coords as u64,
            FdScheme::Forward => coords as u64 + u64::from(coords > 0),
        }
    }
}

fn checked(value: f64, coordinate: usize, probe: f64) -> Result<f64> {
    if value.is_finite() {
        Ok(value)
    } else {
        Err(Error::Evaluation {
            coordinate,
            probe,
            value,
        })
    }
}

/// Finite difference at the coordinate under `at`. The coordinate is
/// written back to its original bits before returning, on success or error.
/// `base` is `f(x)` and is only read by the forward scheme.
#[inline]
pub(crate) fn fd_at<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParameterStore,
    at: Cursor,
    epsilon: f64,
    batch: Option<&BatchSpec>,
    scheme: FdScheme,
    base: f64,
) -> Result<f64> {
    let flat = at.flat(store);
    let old = store.get(at);
    let plus = old + epsilon;
    store.set(at, plus);
    let f_plus = objective.evaluate(store, batch);
    let quotient = match scheme {
        FdScheme::Central => {
            if let Err(e) = checked(f_plus, flat, plus) {
                store.set(at, old);
                return Err(e);
            }
            let minus = old - epsilon;
            store.set(at, minus);
            let f_minus = objective.evaluate(store, batch);
            store.set(at, old);
            checked(f_minus, flat, minus)?;
            (f_plus - f_minus) / (2.0 * epsilon)
        }
        FdScheme::Forward => {
            store.set(at, old);
            checked(f_plus, flat, plus)?;
            (f_plus - base) / epsilon
        }
    };
    if quotient.is_finite() {
        Ok(quotient)
    } else {
        Err(Error::NonFinite {
            coordinate: flat,
            detail: format!("finite-difference quotient {quotient}"),
        })
    }
}

/// One coordinate's finite difference. The forward scheme spends one extra
/// query on `f(x)` here; inside an optimizer step that value is shared.
pub fn coordinate_fd<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParameterStore,
    flat_index: usize,
    epsilon: f64,
    batch: Option<&BatchSpec>,
    scheme: FdScheme,
) -> Result<f64> {
    if !(epsilon > 0.0) || !epsilon.is_finite() {
        return Err(Error::Precondition(format!("epsilon must be positive, got {epsilon}")));
    }
    let at = store.cursor_at(flat_index)?;
    let base = match scheme {
        FdScheme::Central => f64::NAN,
        FdScheme::Forward => checked(objective.evaluate(store, batch), flat_index, store.get(at))?,
    };
    fd_at(objective, store, at, epsilon, batch, scheme, base)
}

/// Finite differences for `count` coordinates starting at `start`, in cyclic
/// order. Each worker probes its own copy of the store, so results are the
/// same bits as sequential in-place probing.
pub(crate) fn probe_parallel<O: Objective + ?Sized>(
    objective: &O,
    store: &ParameterStore,
    start: Cursor,
    count: usize,
    epsilon: f64,
    batch: Option<&BatchSpec>,
    scheme: FdScheme,
    base: f64,
) -> Result<Vec<f64>> {
    let n = store.total_params();
    let first = start.flat(store);
    let workers = rayon::current_num_threads().max(1);
    let per = count.div_ceil(workers).max(1);
    let chunks: Vec<Result<Vec<f64>>> = (0..count)
        .step_by(per)
        .collect::<Vec<_>>()
        .into_par_iter()
        .map(|lo| {
            let hi = (lo + per).min(count);
            let mut local = store.clone();
            let mut at = local.cursor_at((first + lo) % n)?;
            let mut out = Vec::with_capacity(hi - lo);
            for _ in lo..hi {
                out.push(fd_at(objective, &mut local, at, epsilon, batch, scheme, base)?);
                at.advance(&local);
            }
            Ok(out)
        })
        .collect();
    let mut values = Vec::with_capacity(count);
    for chunk in chunks {
        values.extend(chunk?);
    }
    Ok(values)
}

/// Full finite-difference gradient at the current point (`n` coordinate
/// refreshes). With `parallel`, probes run on private copies of the store.
pub fn full_fd_gradient<O: Objective + ?Sized>(
    objective: &O,
    store: &mut ParameterStore,
    epsilon: f64,
    batch: Option<&BatchSpec>,
    scheme: FdScheme,
    parallel: bool,
) -> Result<Vec<f64>> {
    let n = store.total_params();
    if n == 0 {
        return Ok(Vec::new());
    }
    let base = match scheme {
        FdScheme::Central => f64::NAN,
        FdScheme::Forward => objective.evaluate(store, batch),
    };
    if parallel {
        return probe_parallel(objective, store, Cursor::default(), n, epsilon, batch, scheme, base);
    }
    let mut at = Cursor::default();
    let mut grad = Vec::with_capacity(n);
    for _ in 0..n {
        grad.push(fd_at(objective, store, at, epsilon, batch, scheme, base)?);
        at.advance(store);
    }
    Ok(grad)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objectives::{quadratic_objective, QueryCounter};

    /// f(x) = Σ c_i x_i^p for a fixed power.
    struct Power {
        p: i32,
        counter: QueryCounter,
    }

    impl Objective for Power {
        fn loss(&self, store: &ParameterStore, _: Option<&BatchSpec>) -> f64 {
            store.iter_flat().map(|x| x.powi(self.p)).sum()
        }
        fn counter(&self) -> &QueryCounter {
            &self.counter
        }
        fn shapes(&self) -> Vec<Vec<usize>> {
            vec![]
        }
    }

    fn power(p: i32) -> Power {
        Power {
            p,
            counter: QueryCounter::default(),
        }
    }

    #[test]
    fn central_exact_on_square() {
        let f = power(2);
        let mut x = ParameterStore::from_flat(vec![3.0]).unwrap();
        let g = coordinate_fd(&f, &mut x, 0, 0.1, None, FdScheme::Central).unwrap();
        assert!((g - 6.0).abs() < 1e-12, "{g}");
        assert_eq!(f.query_count(), 2);
        assert_eq!(x.read_flat(0).unwrap(), 3.0);
    }

    #[test]
    fn central_on_cube_has_eps_squared_bias() {
        let f = power(3);
        let mut x = ParameterStore::from_flat(vec![1.0]).unwrap();
        let g = coordinate_fd(&f, &mut x, 0, 0.1, None, FdScheme::Central).unwrap();
        assert!((g - 3.01).abs() < 1e-12, "{g}");
    }

    #[test]
    fn forward_on_square() {
        let f = power(2);
        let mut x = ParameterStore::from_flat(vec![3.0]).unwrap();
        let g = coordinate_fd(&f, &mut x, 0, 0.1, None, FdScheme::Forward).unwrap();
        assert!((g - 6.1).abs() < 1e-12, "{g}");
        assert_eq!(f.query_count(), 2);
    }

    #[test]
    fn non_finite_value_restores_store() {
        struct Blowup(QueryCounter);
        impl Objective for Blowup {
            fn loss(&self, store: &ParameterStore, _: Option<&BatchSpec>) -> f64 {
                if store.read_flat(0).unwrap() > 1.0 {
                    f64::INFINITY
                } else {
                    0.0
                }
            }
            fn counter(&self) -> &QueryCounter {
                &self.0
            }
            fn shapes(&self) -> Vec<Vec<usize>> {
                vec![]
            }
        }
        let f = Blowup(QueryCounter::default());
        let mut x = ParameterStore::from_flat(vec![1.0, 2.0]).unwrap();
        let err = coordinate_fd(&f, &mut x, 0, 0.5, None, FdScheme::Central).unwrap_err();
        assert!(matches!(err, Error::Evaluation { coordinate: 0, probe, .. } if probe == 1.5));
        assert_eq!(x.to_flat(), vec![1.0, 2.0]);
        assert!(coordinate_fd(&f, &mut x, 0, 0.0, None, FdScheme::Central).is_err());
        assert!(coordinate_fd(&f, &mut x, 5, 0.1, None, FdScheme::Central).is_err());
    }

    #[test]
    fn parallel_matches_sequential_bits() {
        let q = quadratic_objective(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.1; 5]).unwrap();
        let mut x = ParameterStore::from_flat(vec![0.3, -1.2, 2.2, 0.7, -0.4]).unwrap();
        let seq = full_fd_gradient(&q, &mut x, 1e-3, None, FdScheme::Central, false).unwrap();
        let par = full_fd_gradient(&q, &mut x, 1e-3, None, FdScheme::Central, true).unwrap();
        assert_eq!(seq, par);
        let analytic = q.gradient(&x).unwrap();
        for (a, b) in seq.iter().zip(&analytic) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn forward_query_accounting() {
        assert_eq!(FdScheme::Central.queries_for(5), 10);
        assert_eq!(FdScheme::Forward.queries_for(5), 6);
        assert_eq!(FdScheme::Forward.queries_for(0), 0);
    }
}
