//! Straight-line references shared by the integration tests.
#![allow(dead_code)]

use cocd::{Objective, ParameterStore};

/// Central differences written out by hand on a private copy of the store.
pub fn fd_oracle(objective: &dyn Objective, store: &ParameterStore, eps: f64) -> Vec<f64> {
    let mut probe = store.clone();
    let n = probe.total_params();
    let mut g = Vec::with_capacity(n);
    for i in 0..n {
        let x = probe.read_flat(i).unwrap();
        probe.write_flat(i, x + eps).unwrap();
        let up = objective.loss(&probe, None);
        probe.write_flat(i, x - eps).unwrap();
        let down = objective.loss(&probe, None);
        probe.write_flat(i, x).unwrap();
        g.push((up - down) / (2.0 * eps));
    }
    g
}

pub fn quad_loss(diag: &[f64], shift: &[f64], x: &[f64]) -> f64 {
    let mut acc = 0.0;
    for i in 0..x.len() {
        let r = x[i] - shift[i];
        acc += diag[i] * r * r;
    }
    0.5 * acc
}

/// Plain-vector replay of coherent coordinate descent on a diagonal
/// quadratic with `m = n`: decay, cyclic refresh of `budget` entries,
/// descent on the whole buffer.
pub struct RefSim {
    pub diag: Vec<f64>,
    pub shift: Vec<f64>,
    pub x: Vec<f64>,
    pub g: Vec<f64>,
    pub next: usize,
}

impl RefSim {
    pub fn new(diag: Vec<f64>, shift: Vec<f64>, x: Vec<f64>) -> Self {
        let n = x.len();
        RefSim {
            diag,
            shift,
            x,
            g: vec![0.0; n],
            next: 0,
        }
    }

    pub fn step(&mut self, alpha: f64, gamma: f64, eps: f64, budget: usize) {
        let n = self.x.len();
        let mut fresh = vec![false; n];
        for _ in 0..budget {
            let i = self.next;
            let old = self.x[i];
            self.x[i] = old + eps;
            let up = quad_loss(&self.diag, &self.shift, &self.x);
            self.x[i] = old - eps;
            let down = quad_loss(&self.diag, &self.shift, &self.x);
            self.x[i] = old;
            self.g[i] = (up - down) / (2.0 * eps);
            fresh[i] = true;
            self.next = (i + 1) % n;
        }
        for (g, &f) in self.g.iter_mut().zip(&fresh) {
            if !f {
                *g *= gamma;
            }
        }
        for i in 0..n {
            self.x[i] -= alpha * self.g[i];
        }
    }
}

pub fn bits(v: &[f64]) -> Vec<u64> {
    v.iter().map(|x| x.to_bits()).collect()
}
