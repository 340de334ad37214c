//! The CoCD state machine.
//!
//! One step is decay → refresh → descend. Refresh walks `B` coordinates in
//! the fixed cyclic order, writes their finite differences into a circular
//! buffer of length `m`, and descent applies the buffer in place through
//! the flat view of the parameter store. Coordinates are 0-based here; the
//! 1-based successor rule `i ↦ (i mod n) + 1` is [`advance_cycle`].

mod config;
mod fd;

use std::io::{BufRead, Write};

pub use config::{OptimizerConfig, ResolvedConfig, WindowMode};
pub use fd::{coordinate_fd, full_fd_gradient, FdScheme};

use crate::error::{Error, Result};
use crate::objectives::{BatchSpec, Objective};
use crate::param_store::{Cursor, ParameterStore};

/// Successor of the 1-based coordinate `i` in the cyclic schedule.
pub fn advance_cycle(i: usize, n: usize) -> usize {
    (i % n) + 1
}

/// Per-step record.
#[derive(Debug, Clone, PartialEq)]
pub struct StepTrace {
    /// 1-based index of the step that produced this record.
    pub step: u64,
    /// `f(x_t)` on the step's batch, before the update.
    pub loss: f64,
    /// `‖x_{t+1} − x_t‖`.
    pub step_norm: f64,
    /// Objective queries charged to the optimizer's budget.
    pub queries: u64,
    /// Queries spent by verification, kept out of the budget.
    pub oracle_queries: u64,
    /// `‖ĝ_t − ∇̃f(x_t)‖` when verification ran this step.
    pub staleness_error: Option<f64>,
    /// `‖ĝ_t − ĝ_{t−1}‖`.
    pub grad_diff: Option<f64>,
}

/// Circular buffer of coordinate gradients plus the refresh and descent pointers.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientBuffer {
    values: Vec<f64>,
    cur_grad_idx: usize,
    refresh: Cursor,
    grad_offset: usize,
    descent: Cursor,
}

impl GradientBuffer {
    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn cur_grad_idx(&self) -> usize {
        self.cur_grad_idx
    }

    /// `(cur_param_idx, cur_weight_idx)`.
    pub fn refresh_pointer(&self) -> Cursor {
        self.refresh
    }

    pub fn grad_offset(&self) -> usize {
        self.grad_offset
    }

    /// `(param_offset, weight_offset)`.
    pub fn descent_pointer(&self) -> Cursor {
        self.descent
    }

    /// `ĝ ← γ·ĝ`.
    pub fn decay(&mut self, gamma: f64) {
        if gamma == 1.0 {
            return;
        }
        for v in &mut self.values {
            *v *= gamma;
        }
    }
}

#[derive(Debug, Clone)]
pub struct Cocd {
    config: ResolvedConfig,
    buffer: GradientBuffer,
    steps: u64,
}

impl Cocd {
    pub fn new(config: &OptimizerConfig, store: &ParameterStore) -> Result<Self> {
        let config = config.resolve(store.total_params())?;
        let (n, m, b) = (config.n, config.memory, config.budget);
        let (grad_offset, descent) = match config.window {
            // first window must end at the B freshest entries
            WindowMode::Sliding => (b % m, store.cursor_at((b + n - m) % n)?),
            WindowMode::Fixed => (0, Cursor::default()),
        };
        Ok(Cocd {
            buffer: GradientBuffer {
                values: vec![0.0; m],
                cur_grad_idx: 0,
                refresh: Cursor::default(),
                grad_offset,
                descent,
            },
            config,
            steps: 0,
        })
    }

    pub fn config(&self) -> &ResolvedConfig {
        &self.config
    }

    pub fn buffer(&self) -> &GradientBuffer {
        &self.buffer
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Queries one step charges to the budget.
    pub fn queries_per_step(&self) -> u64 {
        self.config.fd_scheme.queries_for(self.config.budget)
    }

    /// Persistent scalar state: the buffer, nothing else.
    pub fn state_scalars(&self) -> usize {
        self.buffer.values.len()
    }

    /// Heap bytes held across steps.
    pub fn heap_bytes(&self) -> usize {
        self.buffer.values.capacity() * std::mem::size_of::<f64>()
    }

    /// Integer pointers: grad idx, refresh (param, weight), grad offset,
    /// descent (param, weight).
    pub const POINTERS: usize = 6;

    /// `ĝ ← γ·ĝ` over the whole buffer.
    pub fn decay(&mut self) {
        self.buffer.decay(self.config.gamma);
    }

    /// Overwrite the next `B` buffer entries with fresh finite differences
    /// at the current point. On an evaluation error the probed coordinate is
    /// restored and the refresh pointers return to where they started.
    pub fn refresh<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<u64> {
        let base = self.base_value(store, objective, batch)?;
        self.refresh_inner(store, objective, batch, base)?;
        Ok(self.queries_per_step())
    }

    /// Apply `x ← x − α(ĝ + λx)` over the length-`m` descent window, chunk
    /// by chunk through the flat view. Returns `‖Δx‖`.
    pub fn optimize(&mut self, store: &mut ParameterStore) -> Result<f64> {
        let (n, m) = (self.config.n, self.config.memory);
        let mut slot = self.buffer.grad_offset;
        let mut coord = self.buffer.descent.flat(store);
        let mut count = 0;
        let mut moved = 0.0;
        while count < m {
            let chunk = (m - count).min(m - slot).min(n - coord);
            moved += store.descend_chunk(
                coord,
                &self.buffer.values[slot..slot + chunk],
                self.config.alpha,
                self.config.weight_decay,
            )?;
            slot = (slot + chunk) % m;
            coord = (coord + chunk) % n;
            count += chunk;
        }
        if !moved.is_finite() {
            let bad = store.iter_flat().position(|v| !v.is_finite()).unwrap_or(0);
            return Err(Error::NonFinite {
                coordinate: bad,
                detail: format!("parameter update produced {moved} step norm"),
            });
        }
        if self.config.window == WindowMode::Sliding {
            let b = self.config.budget;
            self.buffer.grad_offset = (self.buffer.grad_offset + b) % m;
            self.buffer.descent.advance_by(store, b);
        }
        Ok(moved.sqrt())
    }

    pub fn step<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<StepTrace> {
        self.step_with(store, objective, batch, false)
    }

    /// One full step. With `verify`, the fresh full finite-difference
    /// gradient is computed between refresh and descent and the staleness
    /// error recorded; those queries are reported as `oracle_queries`.
    ///
    /// Decay is applied after the refresh, to the entries not refreshed;
    /// the result equals decay-then-overwrite. A failed step therefore
    /// leaves unrefreshed entries at their pre-step values, and a retry at
    /// the same point reproduces the uninterrupted step bit for bit.
    pub fn step_with<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
        verify: bool,
    ) -> Result<StepTrace> {
        let base = self.base_value(store, objective, batch)?;
        let loss = match self.config.fd_scheme {
            FdScheme::Central => objective.loss(store, batch),
            FdScheme::Forward => base,
        };
        let start_slot = self.buffer.cur_grad_idx;
        let mut diff_sq = self.refresh_inner(store, objective, batch, base)?;
        diff_sq += self.decay_unrefreshed(start_slot);

        let (staleness_error, oracle_queries) = if verify {
            let oracle = full_fd_gradient(
                objective,
                store,
                self.config.epsilon,
                batch,
                self.config.fd_scheme,
                true,
            )?;
            (
                Some(self.staleness_against(store, &oracle)),
                self.config.fd_scheme.queries_for(self.config.n),
            )
        } else {
            (None, 0)
        };

        let step_norm = self.optimize(store)?;
        self.steps += 1;
        Ok(StepTrace {
            step: self.steps,
            loss,
            step_norm,
            queries: self.queries_per_step(),
            oracle_queries,
            staleness_error,
            grad_diff: Some(diff_sq.sqrt()),
        })
    }

    fn base_value<O: Objective + ?Sized>(
        &self,
        store: &ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
    ) -> Result<f64> {
        match self.config.fd_scheme {
            FdScheme::Central => Ok(f64::NAN),
            FdScheme::Forward => {
                let f = objective.evaluate(store, batch);
                if f.is_finite() {
                    Ok(f)
                } else {
                    let at = self.buffer.refresh;
                    Err(Error::Evaluation {
                        coordinate: at.flat(store),
                        probe: store.get(at),
                        value: f,
                    })
                }
            }
        }
    }

    /// Returns the squared change of the refreshed entries.
    fn refresh_inner<O: Objective + ?Sized>(
        &mut self,
        store: &mut ParameterStore,
        objective: &O,
        batch: Option<&BatchSpec>,
        base: f64,
    ) -> Result<f64> {
        let (m, b, eps, scheme) = (
            self.config.memory,
            self.config.budget,
            self.config.epsilon,
            self.config.fd_scheme,
        );
        let saved = (self.buffer.cur_grad_idx, self.buffer.refresh);
        let mut diff_sq = 0.0;

        if self.config.parallel_probes {
            let fresh =
                fd::probe_parallel(objective, store, self.buffer.refresh, b, eps, batch, scheme, base)?;
            for v in fresh {
                let slot = &mut self.buffer.values[self.buffer.cur_grad_idx];
                diff_sq += (v - *slot) * (v - *slot);
                *slot = v;
                self.buffer.cur_grad_idx = (self.buffer.cur_grad_idx + 1) % m;
                self.buffer.refresh.advance(store);
            }
            return Ok(diff_sq);
        }

        for _ in 0..b {
            let v = match fd::fd_at(objective, store, self.buffer.refresh, eps, batch, scheme, base) {
                Ok(v) => v,
                Err(e) => {
                    (self.buffer.cur_grad_idx, self.buffer.refresh) = saved;
                    return Err(e);
                }
            };
            let slot = &mut self.buffer.values[self.buffer.cur_grad_idx];
            diff_sq += (v - *slot) * (v - *slot);
            *slot = v;
            self.buffer.cur_grad_idx = (self.buffer.cur_grad_idx + 1) % m;
            self.buffer.refresh.advance(store);
        }
        Ok(diff_sq)
    }

    /// Multiply the `m − B` entries not refreshed this step by γ; returns
    /// their squared change.
    fn decay_unrefreshed(&mut self, start_slot: usize) -> f64 {
        let (m, b, gamma) = (self.config.memory, self.config.budget, self.config.gamma);
        if gamma == 1.0 {
            return 0.0;
        }
        let mut diff_sq = 0.0;
        let mut slot = (start_slot + b) % m;
        for _ in 0..m - b {
            let v = &mut self.buffer.values[slot];
            let decayed = gamma * *v;
            diff_sq += (decayed - *v) * (decayed - *v);
            *v = decayed;
            slot += 1;
            if slot == m {
                slot = 0;
            }
        }
        diff_sq
    }

    /// Walks the last `m` refresh events as `(slot, flat coordinate)` pairs.
    fn for_each_live_entry(&self, store: &ParameterStore, mut visit: impl FnMut(usize, usize)) {
        let (n, m) = (self.config.n, self.config.memory);
        let mut slot = self.buffer.cur_grad_idx;
        let mut coord = (self.buffer.refresh.flat(store) + n - m) % n;
        for _ in 0..m {
            visit(slot, coord);
            slot += 1;
            if slot == m {
                slot = 0;
            }
            coord += 1;
            if coord == n {
                coord = 0;
            }
        }
    }

    /// The buffer as an n-vector: each of the last `m` refreshed coordinates
    /// carries its (decayed) estimate, the rest are zero.
    pub fn logical_gradient(&self, store: &ParameterStore) -> Vec<f64> {
        let mut g = vec![0.0; self.config.n];
        self.for_each_live_entry(store, |slot, coord| g[coord] = self.buffer.values[slot]);
        g
    }

    /// `‖logical buffer − reference‖` without materializing the buffer as an n-vector.
    pub fn staleness_against(&self, store: &ParameterStore, reference: &[f64]) -> f64 {
        let (n, m) = (self.config.n, self.config.memory);
        let mut acc: f64 = reference.iter().map(|r| r * r).sum();
        if m == n {
            acc = 0.0;
        }
        self.for_each_live_entry(store, |slot, coord| {
            let (g, r) = (self.buffer.values[slot], reference[coord]);
            if m == n {
                acc += (g - r) * (g - r);
            } else {
                acc += (g - r) * (g - r) - r * r;
            }
        });
        acc.max(0.0).sqrt()
    }

    /// Plain-text checkpoint: `m`, the `m` buffer values, the pointer
    /// sextuple, the step counter; one value per line.
    pub fn write_state<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let b = &self.buffer;
        writeln!(w, "{}", b.values.len())?;
        for v in &b.values {
            writeln!(w, "{v}")?;
        }
        for p in [
            b.cur_grad_idx,
            b.refresh.param_idx,
            b.refresh.within_idx,
            b.grad_offset,
            b.descent.param_idx,
            b.descent.within_idx,
        ] {
            writeln!(w, "{p}")?;
        }
        writeln!(w, "{}", self.steps)
    }

    /// Restore a checkpoint written by [`write_state`](Self::write_state)
    /// into an optimizer built with the same config and store layout.
    pub fn read_state<R: BufRead>(&mut self, store: &ParameterStore, r: R) -> Result<()> {
        let lines: Vec<String> = r
            .lines()
            .collect::<std::io::Result<_>>()
            .map_err(|e| Error::Parse {
                row: 0,
                column: 1,
                message: e.to_string(),
            })?;
        let field = |row: usize| -> Result<&str> {
            lines.get(row).map(|s| s.trim()).ok_or_else(|| Error::Parse {
                row: row + 1,
                column: 1,
                message: "checkpoint truncated".into(),
            })
        };
        let int = |row: usize| -> Result<usize> {
            field(row)?.parse().map_err(|e| Error::Parse {
                row: row + 1,
                column: 1,
                message: format!("{e}"),
            })
        };
        let m = int(0)?;
        if m != self.config.memory {
            return Err(Error::LengthMismatch {
                left: m,
                right: self.config.memory,
            });
        }
        let mut values = Vec::with_capacity(m);
        for row in 1..=m {
            values.push(field(row)?.parse::<f64>().map_err(|e| Error::Parse {
                row: row + 1,
                column: 1,
                message: format!("{e}"),
            })?);
        }
        let p: Vec<usize> = (m + 1..m + 7).map(int).collect::<Result<_>>()?;
        let steps = int(m + 7)? as u64;
        let cursor = |param_idx: usize, within_idx: usize| -> Result<Cursor> {
            if param_idx >= store.params().len() || within_idx >= store.param(param_idx).numel() {
                return Err(Error::config(format!("pointer ({param_idx}, {within_idx}) outside the store")));
            }
            Ok(Cursor {
                param_idx,
                within_idx,
            })
        };
        if p[0] >= m || p[3] >= m {
            return Err(Error::config("buffer pointer outside the buffer"));
        }
        self.buffer = GradientBuffer {
            values,
            cur_grad_idx: p[0],
            refresh: cursor(p[1], p[2])?,
            grad_offset: p[3],
            descent: cursor(p[4], p[5])?,
        };
        self.steps = steps;
        Ok(())
    }
}
