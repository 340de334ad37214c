//! Flat-vector view over an ordered list of shaped parameter tensors.
//!
//! Coordinates are numbered row-major inside each tensor, tensors in
//! declaration order. Index translation never reshapes or copies tensor
//! storage; sequential walks go through [`Cursor`], which advances in O(1).

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShapedParam {
    dims: Vec<usize>,
    values: Vec<f64>,
}

impl ShapedParam {
    pub fn new(dims: Vec<usize>, values: Vec<f64>) -> Result<Self> {
        if dims.contains(&0) {
            return Err(Error::Precondition(format!(
                "tensor extents must be positive, got {dims:?}"
            )));
        }
        let numel: usize = dims.iter().product();
        if numel != values.len() {
            return Err(Error::Precondition(format!(
                "shape {dims:?} holds {numel} values, got {}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Precondition(format!(
                "non-finite value {} at element {pos}",
                values[pos]
            )));
        }
        Ok(ShapedParam { dims, values })
    }

    pub fn zeros(dims: Vec<usize>) -> Result<Self> {
        let numel = dims.iter().product();
        ShapedParam::new(dims, vec![0.0; numel])
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn numel(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }
}

/// Position of a flat coordinate inside the tensor list.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FlatLocation {
    pub param_idx: usize,
    pub within_idx: usize,
}

/// A `(param_idx, within_idx)` pointer that walks the flat order one
/// coordinate at a time, wrapping from the last tensor back to the first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Cursor {
    pub param_idx: usize,
    pub within_idx: usize,
}

impl Cursor {
    pub fn location(&self) -> FlatLocation {
        FlatLocation {
            param_idx: self.param_idx,
            within_idx: self.within_idx,
        }
    }

    /// Step to the next coordinate; wraps modulo the number of tensors.
    #[inline]
    pub fn advance(&mut self, store: &ParameterStore) {
        self.within_idx += 1;
        if self.within_idx >= store.params[self.param_idx].numel() {
            self.within_idx = 0;
            self.param_idx = (self.param_idx + 1) % store.params.len();
        }
    }

    /// Jump forward by `count` coordinates (modulo n), crossing tensors as needed.
    pub fn advance_by(&mut self, store: &ParameterStore, count: usize) {
        let n = store.total_params();
        if n == 0 {
            return;
        }
        let flat = (store.offsets[self.param_idx] + self.within_idx + count % n) % n;
        *self = Cursor::from(store.locate_unchecked(flat));
    }

    pub fn flat(&self, store: &ParameterStore) -> usize {
        store.offsets[self.param_idx] + self.within_idx
    }
}

impl From<FlatLocation> for Cursor {
    fn from(loc: FlatLocation) -> Self {
        Cursor {
            param_idx: loc.param_idx,
            within_idx: loc.within_idx,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParameterStore {
    params: Vec<ShapedParam>,
    offsets: Vec<usize>,
    total: usize,
}

impl ParameterStore {
    pub fn new(params: Vec<ShapedParam>) -> Self {
        let mut offsets = Vec::with_capacity(params.len());
        let mut total = 0;
        for p in &params {
            offsets.push(total);
            total += p.numel();
        }
        ParameterStore {
            params,
            offsets,
            total,
        }
    }

    /// Single 1-D tensor holding `values`.
    pub fn from_flat(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Ok(ParameterStore::new(Vec::new()));
        }
        let len = values.len();
        Ok(ParameterStore::new(vec![ShapedParam::new(vec![len], values)?]))
    }

    /// Zero-filled store with the given tensor shapes.
    pub fn zeros(shapes: &[Vec<usize>]) -> Result<Self> {
        let params = shapes
            .iter()
            .map(|dims| ShapedParam::zeros(dims.clone()))
            .collect::<Result<Vec<_>>>()?;
        Ok(ParameterStore::new(params))
    }

    pub fn total_params(&self) -> usize {
        self.total
    }

    pub fn params(&self) -> &[ShapedParam] {
        &self.params
    }

    pub fn param(&self, idx: usize) -> &ShapedParam {
        &self.params[idx]
    }

    pub fn param_mut(&mut self, idx: usize) -> &mut ShapedParam {
        &mut self.params[idx]
    }

    pub fn offsets(&self) -> &[usize] {
        &self.offsets
    }

    pub fn shapes(&self) -> Vec<Vec<usize>> {
        self.params.iter().map(|p| p.dims.clone()).collect()
    }

    pub fn locate(&self, flat_index: usize) -> Result<FlatLocation> {
        if flat_index >= self.total {
            return Err(Error::Range {
                index: flat_index,
                len: self.total,
            });
        }
        Ok(self.locate_unchecked(flat_index))
    }

    fn locate_unchecked(&self, flat_index: usize) -> FlatLocation {
        // offsets are strictly increasing because every tensor is non-empty
        let param_idx = self.offsets.partition_point(|&o| o <= flat_index) - 1;
        FlatLocation {
            param_idx,
            within_idx: flat_index - self.offsets[param_idx],
        }
    }

    pub fn flat_index(&self, loc: FlatLocation) -> usize {
        self.offsets[loc.param_idx] + loc.within_idx
    }

    pub fn cursor_at(&self, flat_index: usize) -> Result<Cursor> {
        self.locate(flat_index).map(Cursor::from)
    }

    pub fn read_flat(&self, flat_index: usize) -> Result<f64> {
        let loc = self.locate(flat_index)?;
        Ok(self.params[loc.param_idx].values[loc.within_idx])
    }

    pub fn write_flat(&mut self, flat_index: usize, value: f64) -> Result<()> {
        let loc = self.locate(flat_index)?;
        self.params[loc.param_idx].values[loc.within_idx] = value;
        Ok(())
    }

    #[inline]
    pub fn get(&self, at: Cursor) -> f64 {
        self.params[at.param_idx].values[at.within_idx]
    }

    #[inline]
    pub fn set(&mut self, at: Cursor, value: f64) {
        self.params[at.param_idx].values[at.within_idx] = value;
    }

    pub fn perturb(&mut self, flat_index: usize, delta: f64) -> Result<()> {
        if !delta.is_finite() {
            return Err(Error::Precondition(format!(
                "perturbation must be finite, got {delta}"
            )));
        }
        let loc = self.locate(flat_index)?;
        self.params[loc.param_idx].values[loc.within_idx] += delta;
        Ok(())
    }

    /// `x[start + k] -= scale * grads[k]` for every k, crossing tensor
    /// boundaries but never wrapping past the last coordinate.
    pub fn axpy_chunk(&mut self, start_flat: usize, grads: &[f64], scale: f64) -> Result<()> {
        self.check_span(start_flat, grads.len())?;
        if grads.is_empty() {
            return Ok(());
        }
        let mut loc = self.locate_unchecked(start_flat);
        let mut rest = grads;
        while !rest.is_empty() {
            let tensor = &mut self.params[loc.param_idx].values[loc.within_idx..];
            let chunk = tensor.len().min(rest.len());
            for (x, g) in tensor[..chunk].iter_mut().zip(&rest[..chunk]) {
                *x -= scale * g;
            }
            rest = &rest[chunk..];
            loc = FlatLocation {
                param_idx: loc.param_idx + 1,
                within_idx: 0,
            };
        }
        Ok(())
    }

    /// Like [`axpy_chunk`](Self::axpy_chunk) with decoupled weight decay:
    /// `x ← x − scale·g − scale·decay·x`. Returns the squared norm of the
    /// applied change.
    pub fn descend_chunk(
        &mut self,
        start_flat: usize,
        grads: &[f64],
        scale: f64,
        decay: f64,
    ) -> Result<f64> {
        self.check_span(start_flat, grads.len())?;
        if grads.is_empty() {
            return Ok(0.0);
        }
        let mut moved = 0.0;
        let mut loc = self.locate_unchecked(start_flat);
        let mut rest = grads;
        while !rest.is_empty() {
            let tensor = &mut self.params[loc.param_idx].values[loc.within_idx..];
            let chunk = tensor.len().min(rest.len());
            for (x, g) in tensor[..chunk].iter_mut().zip(&rest[..chunk]) {
                let old = *x;
                let mut new = old - scale * g;
                if decay != 0.0 {
                    new -= scale * decay * old;
                }
                *x = new;
                let d = new - old;
                moved += d * d;
            }
            rest = &rest[chunk..];
            loc = FlatLocation {
                param_idx: loc.param_idx + 1,
                within_idx: 0,
            };
        }
        Ok(moved)
    }

    fn check_span(&self, start: usize, len: usize) -> Result<()> {
        if len == 0 {
            return Ok(());
        }
        match start.checked_add(len) {
            Some(end) if end <= self.total => Ok(()),
            _ => Err(Error::Range {
                index: start.saturating_add(len) - 1,
                len: self.total,
            }),
        }
    }

    pub fn iter_flat(&self) -> impl Iterator<Item = f64> + '_ {
        self.params.iter().flat_map(|p| p.values.iter().copied())
    }

    pub fn to_flat(&self) -> Vec<f64> {
        self.iter_flat().collect()
    }

    /// Overwrite every coordinate from a flat slice of length n.
    pub fn assign_flat(&mut self, values: &[f64]) -> Result<()> {
        if values.len() != self.total {
            return Err(Error::LengthMismatch {
                left: values.len(),
                right: self.total,
            });
        }
        let mut rest = values;
        for p in &mut self.params {
            let (head, tail) = rest.split_at(p.numel());
            p.values.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    pub fn shape_manifest(&self) -> String {
        let mut out = String::new();
        for p in &self.params {
            let dims: Vec<String> = p.dims.iter().map(|d| d.to_string()).collect();
            let _ = writeln!(out, "{}", dims.join("x"));
        }
        out
    }

    /// Checkpoint format: shape manifest, a `---` separator, then one scalar per line.
    pub fn write_checkpoint<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        w.write_all(self.shape_manifest().as_bytes())?;
        writeln!(w, "---")?;
        for v in self.iter_flat() {
            writeln!(w, "{v}")?;
        }
        Ok(())
    }

    pub fn read_checkpoint<R: BufRead>(r: R) -> Result<Self> {
        let mut shapes = Vec::new();
        let mut values = Vec::new();
        let mut in_values = false;
        for (row, line) in r.lines().enumerate() {
            let line = line.map_err(|e| Error::Parse {
                row: row + 1,
                column: 1,
                message: e.to_string(),
            })?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            if !in_values {
                if line == "---" {
                    in_values = true;
                    continue;
                }
                let dims = line
                    .split('x')
                    .map(|t| t.parse::<usize>())
                    .collect::<std::result::Result<Vec<_>, _>>()
                    .map_err(|e| Error::Parse {
                        row: row + 1,
                        column: 1,
                        message: format!("bad shape '{line}': {e}"),
                    })?;
                shapes.push(dims);
            } else {
                values.push(line.parse::<f64>().map_err(|e| Error::Parse {
                    row: row + 1,
                    column: 1,
                    message: format!("bad scalar '{line}': {e}"),
                })?);
            }
        }
        let mut store = ParameterStore::zeros(&shapes)?;
        store.assign_flat(&values)?;
        Ok(store)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn store_2x2_3() -> ParameterStore {
        ParameterStore::new(vec![
            ShapedParam::new(vec![2, 2], vec![0.0, 1.0, 2.0, 3.0]).unwrap(),
            ShapedParam::new(vec![3], vec![4.0, 5.0, 6.0]).unwrap(),
        ])
    }

    #[test]
    fn total_params_sums_numels() {
        assert_eq!(store_2x2_3().total_params(), 7);
        assert_eq!(ParameterStore::new(vec![]).total_params(), 0);
        let s = ParameterStore::zeros(&[vec![5], vec![5], vec![5]]).unwrap();
        assert_eq!(s.total_params(), 15);
    }

    #[test]
    fn locate_examples() {
        let s = store_2x2_3();
        let at = |p, w| FlatLocation {
            param_idx: p,
            within_idx: w,
        };
        assert_eq!(s.locate(0).unwrap(), at(0, 0));
        assert_eq!(s.locate(5).unwrap(), at(1, 1));
        assert_eq!(s.locate(6).unwrap(), at(1, 2));
        assert!(matches!(s.locate(7), Err(Error::Range { index: 7, len: 7 })));
    }

    #[test]
    fn read_write_round_trip() {
        let mut s = store_2x2_3();
        s.write_flat(5, 3.5).unwrap();
        assert_eq!(s.read_flat(5).unwrap(), 3.5);
        assert_eq!(s.read_flat(4).unwrap(), 4.0);
        assert!(s.write_flat(7, 1.0).is_err());
    }

    #[test]
    fn perturb_and_restore() {
        let mut s = ParameterStore::from_flat(vec![3.0]).unwrap();
        s.perturb(0, 0.1).unwrap();
        assert_eq!(s.read_flat(0).unwrap(), 3.0 + 0.1);
        let mut s = ParameterStore::from_flat(vec![3.0]).unwrap();
        s.perturb(0, 0.5).unwrap();
        s.perturb(0, -0.5).unwrap();
        assert_eq!(s.read_flat(0).unwrap(), 3.0);
        assert!(matches!(s.perturb(0, f64::NAN), Err(Error::Precondition(_))));
    }

    #[test]
    fn axpy_spans_tensor_boundary() {
        let mut s = ParameterStore::new(vec![
            ShapedParam::new(vec![2], vec![1.0, 1.0]).unwrap(),
            ShapedParam::new(vec![2], vec![1.0, 1.0]).unwrap(),
        ]);
        s.axpy_chunk(1, &[1.0, 1.0, 1.0], 0.5).unwrap();
        assert_eq!(s.to_flat(), vec![1.0, 0.5, 0.5, 0.5]);

        let before = s.clone();
        s.axpy_chunk(0, &[3.0, 3.0], 0.0).unwrap();
        assert_eq!(s, before);
        s.axpy_chunk(2, &[], 1.0).unwrap();
        assert_eq!(s, before);
        assert!(matches!(
            s.axpy_chunk(2, &[1.0, 1.0, 1.0], 1.0),
            Err(Error::Range { .. })
        ));
    }

    #[test]
    fn cursor_follows_update_pointer_semantics() {
        let s = store_2x2_3();
        let mut c = Cursor::default();
        let mut seen = Vec::new();
        for _ in 0..9 {
            seen.push((c.param_idx, c.within_idx));
            c.advance(&s);
        }
        assert_eq!(
            seen,
            vec![(0, 0), (0, 1), (0, 2), (0, 3), (1, 0), (1, 1), (1, 2), (0, 0), (0, 1)]
        );
        let mut c = Cursor::default();
        c.advance_by(&s, 12);
        assert_eq!(c.flat(&s), 5);
    }

    #[test]
    fn checkpoint_round_trip() {
        let s = store_2x2_3();
        let mut buf = Vec::new();
        s.write_checkpoint(&mut buf).unwrap();
        let back = ParameterStore::read_checkpoint(&buf[..]).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn rejects_bad_tensors() {
        assert!(ShapedParam::new(vec![2, 2], vec![0.0; 3]).is_err());
        assert!(ShapedParam::new(vec![0], vec![]).is_err());
        assert!(ShapedParam::new(vec![1], vec![f64::INFINITY]).is_err());
    }

    fn arb_store() -> impl Strategy<Value = ParameterStore> {
        prop::collection::vec(prop::collection::vec(1usize..4, 1..3), 1..5).prop_flat_map(
            |shapes| {
                let n: usize = shapes.iter().map(|d| d.iter().product::<usize>()).sum();
                prop::collection::vec(-10.0f64..10.0, n).prop_map(move |vals| {
                    let mut s = ParameterStore::zeros(&shapes).unwrap();
                    s.assign_flat(&vals).unwrap();
                    s
                })
            },
        )
    }

    proptest! {
        #[test]
        fn locate_is_a_bijection(s in arb_store()) {
            let mut cursor = Cursor::default();
            for i in 0..s.total_params() {
                let loc = s.locate(i).unwrap();
                prop_assert_eq!(s.flat_index(loc), i);
                prop_assert!(loc.within_idx < s.param(loc.param_idx).numel());
                prop_assert_eq!(cursor.location(), loc);
                cursor.advance(&s);
            }
            prop_assert_eq!(cursor, Cursor::default());
        }

        #[test]
        fn axpy_matches_elementwise_loop(
            s in arb_store(),
            start_frac in 0.0f64..1.0,
            scale in -2.0f64..2.0,
            seed_grads in prop::collection::vec(-5.0f64..5.0, 0..40),
        ) {
            let n = s.total_params();
            let start = ((n as f64) * start_frac) as usize % n;
            let len = seed_grads.len().min(n - start);
            let grads = &seed_grads[..len];
            let mut fast = s.clone();
            fast.axpy_chunk(start, grads, scale).unwrap();
            let mut slow = s.clone();
            for (k, g) in grads.iter().enumerate() {
                let v = slow.read_flat(start + k).unwrap();
                slow.write_flat(start + k, v - scale * g).unwrap();
            }
            prop_assert_eq!(fast, slow);
        }

        #[test]
        fn dyadic_perturbation_restores_bits(s in arb_store(), k in -8i32..8, idx_frac in 0.0f64..1.0) {
            let i = ((s.total_params() as f64) * idx_frac) as usize % s.total_params();
            let d = 2f64.powi(k);
            let mut t = s.clone();
            // round to a value on the 2^-8 grid so the sum is exact
            let v = (t.read_flat(i).unwrap() * 256.0).round() / 256.0;
            t.write_flat(i, v).unwrap();
            let before = t.clone();
            t.perturb(i, d).unwrap();
            t.perturb(i, -d).unwrap();
            prop_assert_eq!(t.read_flat(i).unwrap().to_bits(), before.read_flat(i).unwrap().to_bits());
        }
    }
}
