//! Quick self-checks behind the `verify` subcommand.

use crate::analysis::{convergence_rate, error_bound, max_stable_lr, stability_constants, staleness_factor};
use crate::baselines::Bccd;
use crate::error::Result;
use crate::objectives::{quadratic_objective, Objective};
use crate::optimizer::{full_fd_gradient, Cocd, FdScheme, OptimizerConfig};
use crate::param_store::ParameterStore;

use super::{parse_config, run_experiment};

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn check(name: &'static str, outcome: Result<(bool, String)>) -> Check {
    match outcome {
        Ok((passed, detail)) => Check { name, passed, detail },
        Err(e) => Check {
            name,
            passed: false,
            detail: format!("error: {e}"),
        },
    }
}

fn full_budget_exact() -> Result<(bool, String)> {
    let q = quadratic_objective(vec![1.0, 2.0, 3.0, 4.0, 5.0], vec![0.5; 5])?;
    let mut store = ParameterStore::from_flat(vec![1.0, -2.0, 0.25, 3.0, -1.0])?;
    let cfg = OptimizerConfig {
        budget: 5,
        alpha: 0.01,
        ..OptimizerConfig::default()
    };
    let mut opt = Cocd::new(&cfg, &store)?;
    let before = store.clone();
    opt.refresh(&mut store, &q, None)?;
    let mut probe = before.clone();
    let oracle = full_fd_gradient(&q, &mut probe, cfg.epsilon, None, FdScheme::Central, false)?;
    let err = opt.staleness_against(&store, &oracle);
    Ok((err <= 1e-12, format!("|g - fd| = {err:e}")))
}

fn bccd_matches_gamma_zero() -> Result<(bool, String)> {
    let q = quadratic_objective(vec![1.0, 1.5, 2.0, 2.5, 3.0, 3.5], vec![0.0; 6])?;
    let cfg = OptimizerConfig {
        budget: 2,
        gamma: 0.0,
        alpha: 0.1,
        ..OptimizerConfig::default()
    };
    let mut a = ParameterStore::from_flat(vec![1.0; 6])?;
    let mut b = a.clone();
    let mut cocd = Cocd::new(&cfg, &a)?;
    let mut bccd = Bccd::new(&cfg, Some(cfg.epsilon), &b)?;
    for _ in 0..50 {
        let ta = cocd.step(&mut a, &q, None)?;
        let tb = bccd.step(&mut b, &q, None)?;
        if ta != tb {
            return Ok((false, format!("traces diverge at step {}", ta.step)));
        }
    }
    let same = a.to_flat().iter().zip(b.to_flat()).all(|(x, y)| x.to_bits() == y.to_bits());
    Ok((same, "50 steps".into()))
}

fn run_is_reproducible() -> Result<(bool, String)> {
    let c = parse_config(
        r#"{"objective": {"kind": "rosenbrock", "n": 6}, "optimizer": {"kind": "cocd", "budget": 2, "alpha": 1e-3},
            "steps": 40, "verify_every": 5}"#,
    )?;
    let a = run_experiment(&c)?;
    let b = run_experiment(&c)?;
    let last = a.rows.last().expect("rows");
    let conserved = last.queries_cum == 40 * a.queries_per_step && a.ledger.balanced();
    Ok((
        a.rows == b.rows && conserved,
        format!("queries_cum = {}, oracle = {}", last.queries_cum, last.oracle_queries_cum),
    ))
}

fn formulas() -> Result<(bool, String)> {
    let mut ok = (error_bound(4, 2, 1.0, 0.1)? - 0.2).abs() < 1e-15;
    ok &= error_bound(5, 2, 1.0, 1.0)? == 4.0;
    ok &= error_bound(9, 9, 1.0, 1.0)? == 0.0;
    ok &= staleness_factor(10, 5) == 1.0 && staleness_factor(10, 1) == 9.0;
    let (c1, c2) = stability_constants(0.1, 1.0, 10, 1.0);
    ok &= (c1 - 4.5).abs() < 1e-12 && (c2 - 225.0).abs() < 1e-9;
    ok &= (convergence_rate(1.0, 4.5, 225.0)? - 0.96).abs() < 1e-15;
    ok &= (max_stable_lr(1.0, 64, 7.0) - 2.0 / 449.0).abs() < 1e-18;
    for n in 1..=64 {
        for b in 1..n {
            ok &= error_bound(n, b + 1, 1.0, 1.0)? <= error_bound(n, b, 1.0, 1.0)?;
        }
    }
    Ok((ok, "substitutions and monotonicity in B".into()))
}

fn counter_matches_ledger() -> Result<(bool, String)> {
    let q = quadratic_objective(vec![1.0; 8], vec![0.0; 8])?;
    let mut store = ParameterStore::from_flat(vec![1.0; 8])?;
    let cfg = OptimizerConfig {
        budget: 3,
        ..OptimizerConfig::default()
    };
    let mut opt = Cocd::new(&cfg, &store)?;
    let mut charged = 0;
    for _ in 0..10 {
        charged += opt.step(&mut store, &q, None)?.queries;
    }
    let counted = q.query_count();
    Ok((counted == charged && charged == 60, format!("{counted} counted, {charged} charged")))
}

/// Runs every check; cheap enough for CI.
pub fn verify_suite() -> Vec<Check> {
    vec![
        check("full budget recovers the finite-difference gradient", full_budget_exact()),
        check("gamma = 0 reproduces block cyclic coordinate descent", bccd_matches_gamma_zero()),
        check("runs are reproducible and the ledger balances", run_is_reproducible()),
        check("objective counter matches the budget ledger", counter_matches_ledger()),
        check("bound formulas", formulas()),
    ]
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn suite_passes() {
        for c in verify_suite() {
            assert!(c.passed, "{}: {}", c.name, c.detail);
        }
    }
}
