//! Closed-form staleness, stability and convergence quantities, plus the
//! empirical estimators used to audit them on real runs.

mod smoothness;

pub use smoothness::{estimate_l_eps, estimate_smoothness, SamplingConfig, SmoothnessEstimate};

use crate::error::{Error, Result};
use crate::objectives::{BatchSpec, Objective};
use crate::optimizer::{full_fd_gradient, Cocd};
use crate::param_store::ParameterStore;

/// Worst-case staleness error of a CoCD buffer with `m = n`:
/// `(L_ε δ / 2)(B·K(K−1) + 2rK)` with `K = ⌊n/B⌋`, `r = n mod B`.
pub fn error_bound(n: usize, budget: usize, l_eps: f64, delta: f64) -> Result<f64> {
    if budget == 0 || budget > n {
        return Err(Error::config(format!("budget must lie in [1, n={n}], got {budget}")));
    }
    if !(l_eps >= 0.0) || !(delta >= 0.0) {
        return Err(Error::Precondition("L_eps and delta must be non-negative".into()));
    }
    let k = (n / budget) as f64;
    let r = (n % budget) as f64;
    let b = budget as f64;
    Ok(0.5 * l_eps * delta * (b * k * (k - 1.0) + 2.0 * r * k))
}

/// `τ = n/B − 1`. When `B` does not divide `n` the ceiling `⌈n/B⌉ − 1` is
/// returned instead, with a warning.
pub fn staleness_factor(n: usize, budget: usize) -> f64 {
    assert!(budget >= 1, "budget must be positive");
    if !n.is_multiple_of(budget) {
        log::warn!("B={budget} does not divide n={n}; using ceil(n/B) - 1 as the staleness factor");
    }
    (n.div_ceil(budget) - 1) as f64
}

/// `C1 = 1/α − (L/2)(1 + nτ)`, `C2 = 1/α² + Lnτ/α + L²n²τ²/4`.
pub fn stability_constants(alpha: f64, l: f64, n: usize, tau: f64) -> (f64, f64) {
    let ntau = n as f64 * tau;
    let c1 = 1.0 / alpha - 0.5 * l * (1.0 + ntau);
    let c2 = 1.0 / (alpha * alpha) + l * ntau / alpha + l * l * ntau * ntau / 4.0;
    (c1, c2)
}

/// Per-step contraction `1 − 2μC1/C2` of the optimality gap. `C1 = 0`
/// yields 1 (no guaranteed progress) with a warning.
pub fn convergence_rate(mu: f64, c1: f64, c2: f64) -> Result<f64> {
    if c1 < 0.0 || c2 <= 0.0 {
        return Err(Error::Unstable(format!(
            "C1={c1}, C2={c2}: the step size is beyond the stability limit"
        )));
    }
    if !(mu > 0.0) {
        return Err(Error::Precondition(format!("mu must be positive, got {mu}")));
    }
    if c1 == 0.0 {
        log::warn!("C1 = 0: at the stability boundary, no guaranteed decrease");
        return Ok(1.0);
    }
    let rate = 1.0 - 2.0 * mu * c1 / c2;
    if rate <= 0.0 {
        return Err(Error::Unstable(format!(
            "rate factor {rate} <= 0; mu={mu} is inconsistent with the smoothness constant"
        )));
    }
    Ok(rate)
}

/// Largest learning rate with `C1 > 0`: `2 / (L(1 + nτ))`. The constants are
/// worst-case, so larger rates often still converge in practice.
pub fn max_stable_lr(l: f64, n: usize, tau: f64) -> f64 {
    2.0 / (l * (1.0 + n as f64 * tau))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StabilityReport {
    pub tau: f64,
    pub c1: f64,
    pub c2: f64,
    pub mu: f64,
    /// `None` when the configuration is unstable.
    pub rate: Option<f64>,
    pub max_stable_alpha: f64,
    pub stable: bool,
}

pub fn stability_report(alpha: f64, l: f64, mu: f64, n: usize, budget: usize) -> StabilityReport {
    let tau = staleness_factor(n, budget);
    let (c1, c2) = stability_constants(alpha, l, n, tau);
    let rate = convergence_rate(mu, c1, c2).ok();
    StabilityReport {
        tau,
        c1,
        c2,
        mu,
        rate,
        max_stable_alpha: max_stable_lr(l, n, tau),
        stable: c1 > 0.0 && c2 > 0.0,
    }
}

/// `‖ĝ − ∇̃^ε f(x)‖` for the optimizer's current buffer at the current point.
/// Spends one full finite-difference sweep (counted by the objective).
pub fn measure_staleness_error<O: Objective + ?Sized>(
    optimizer: &Cocd,
    objective: &O,
    store: &mut ParameterStore,
    epsilon: f64,
    batch: Option<&BatchSpec>,
) -> Result<f64> {
    let reference = full_fd_gradient(objective, store, epsilon, batch, optimizer.config().fd_scheme, true)?;
    Ok(optimizer.staleness_against(store, &reference))
}

/// `‖a − b‖`.
pub fn grad_diff(current: &[f64], previous: &[f64]) -> Result<f64> {
    if current.len() != previous.len() {
        return Err(Error::LengthMismatch {
            left: current.len(),
            right: previous.len(),
        });
    }
    Ok(current
        .iter()
        .zip(previous)
        .map(|(a, b)| (a - b) * (a - b))
        .sum::<f64>()
        .sqrt())
}

/// Step bound over a window of recent iterates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CoherenceWindow {
    pub len: usize,
    pub delta: f64,
}

/// `δ` = the largest of the last `window` step norms (all of them when the
/// history is shorter).
pub fn track_delta(step_norms: &[f64], window: usize) -> Result<CoherenceWindow> {
    if step_norms.is_empty() {
        return Err(Error::Precondition("no steps recorded yet".into()));
    }
    let len = window.clamp(1, step_norms.len());
    let delta = step_norms[step_norms.len() - len..]
        .iter()
        .copied()
        .fold(0.0, f64::max);
    Ok(CoherenceWindow { len, delta })
}

/// Ordinary least squares `y ≈ a·x + b`; returns `(a, b, R²)`.
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Result<(f64, f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch {
            left: xs.len(),
            right: ys.len(),
        });
    }
    if xs.len() < 2 {
        return Err(Error::Precondition("a line needs at least two points".into()));
    }
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let syy: f64 = ys.iter().map(|y| (y - my) * (y - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Precondition("all x values coincide".into()));
    }
    let a = sxy / sxx;
    let b = my - a * mx;
    let r2 = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok((a, b, r2))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn error_bound_substitutions() {
        assert!((error_bound(4, 2, 1.0, 0.1).unwrap() - 0.2).abs() < 1e-15);
        assert_eq!(error_bound(5, 2, 1.0, 1.0).unwrap(), 4.0);
        assert_eq!(error_bound(9, 9, 3.0, 2.0).unwrap(), 0.0);
        assert!(error_bound(4, 5, 1.0, 1.0).is_err());
        assert!(error_bound(4, 0, 1.0, 1.0).is_err());
    }

    #[test]
    fn staleness_factor_values() {
        assert_eq!(staleness_factor(10, 5), 1.0);
        assert_eq!(staleness_factor(10, 10), 0.0);
        assert_eq!(staleness_factor(10, 1), 9.0);
        assert_eq!(staleness_factor(10, 3), 3.0);
    }

    #[test]
    fn stability_constant_values() {
        let (c1, c2) = stability_constants(0.1, 1.0, 10, 1.0);
        assert!((c1 - 4.5).abs() < 1e-12 && (c2 - 225.0).abs() < 1e-9);
        let (c1, c2) = stability_constants(0.25, 2.0, 10, 0.0);
        assert_eq!((c1, c2), (4.0 - 1.0, 16.0));
        let (l, n, tau) = (1.5, 12, 3.0);
        let alpha = 2.0 / (l * (1.0 + n as f64 * tau));
        let (c1, _) = stability_constants(alpha, l, n, tau);
        assert!(c1.abs() < 1e-12);
    }

    #[test]
    fn rate_values() {
        assert!((convergence_rate(1.0, 4.5, 225.0).unwrap() - 0.96).abs() < 1e-15);
        assert_eq!(convergence_rate(1.0, 0.0, 10.0).unwrap(), 1.0);
        assert!(matches!(convergence_rate(1.0, -1.0, 10.0), Err(Error::Unstable(_))));
        assert!(matches!(convergence_rate(1.0, 1.0, 0.0), Err(Error::Unstable(_))));
        // τ = 0 reduces to the gradient-descent rate 1 − 2μα(1 − Lα/2)
        let (alpha, l, mu) = (0.3, 2.0, 0.5);
        let (c1, c2) = stability_constants(alpha, l, 8, 0.0);
        let expected = 1.0 - 2.0 * mu * alpha * (1.0 - l * alpha / 2.0);
        assert!((convergence_rate(mu, c1, c2).unwrap() - expected).abs() < 1e-14);
    }

    #[test]
    fn max_lr_values() {
        assert!((max_stable_lr(1.0, 64, 7.0) - 2.0 / 449.0).abs() < 1e-18);
        assert_eq!(max_stable_lr(1.0, 64, 0.0), 2.0);
        let n = 64;
        let mut last = 0.0;
        for b in 1..=n {
            let lr = max_stable_lr(1.0, n, staleness_factor(n, b));
            assert!(lr >= last);
            last = lr;
        }
    }

    #[test]
    fn grad_diff_values() {
        assert_eq!(grad_diff(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        assert_eq!(grad_diff(&[1.0, 2.0], &[1.0, -1.0]).unwrap(), 3.0);
        assert!(grad_diff(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn delta_windows() {
        let norms = [0.1, 0.3, 0.2];
        assert_eq!(track_delta(&norms, 3).unwrap().delta, 0.3);
        assert_eq!(track_delta(&norms, 1).unwrap().delta, 0.2);
        assert_eq!(track_delta(&[0.0, 0.0], 5).unwrap().delta, 0.0);
        assert_eq!(track_delta(&norms, 10).unwrap().len, 3);
        assert!(track_delta(&[], 3).is_err());
    }

    #[test]
    fn report_flags_instability() {
        let ok = stability_report(1e-3, 1.0, 0.5, 64, 8);
        assert!(ok.stable && ok.rate.is_some());
        let bad = stability_report(1.0, 1.0, 0.5, 64, 8);
        assert!(!bad.stable && bad.rate.is_none());
    }

    #[test]
    fn fit_recovers_line() {
        let xs = [1.0, 2.0, 3.0, 4.0];
        let ys: Vec<f64> = xs.iter().map(|x| -2.0 * x + 1.0).collect();
        let (a, b, r2) = linear_fit(&xs, &ys).unwrap();
        assert!((a + 2.0).abs() < 1e-12 && (b - 1.0).abs() < 1e-12 && (r2 - 1.0).abs() < 1e-12);
        let (a, _, _) = linear_fit(&[4.0, 6.0], &[1.0, 0.0]).unwrap();
        assert_eq!(a, -0.5);
    }
}
