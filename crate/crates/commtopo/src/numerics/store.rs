//! Flat named parameter storage.
//!
//! All learnable parameters of a network live in one contiguous `Vec<f64>`,
//! partitioned into named, shaped segments registered in a fixed order.
//! Gradient buffers, Adam moment accumulators, and target networks are
//! `zeros_like`/`clone` copies sharing the same layout, so whole-network
//! operations (clipping, optimizer steps, target sync, serialization) are
//! plain slice walks.

use crate::numerics::rng::SeededRng;

/// Handle to one registered segment.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SegId(usize);

#[derive(Debug, Clone, PartialEq)]
struct SegmentMeta {
    name: String,
    rows: usize,
    cols: usize,
    offset: usize,
}

/// Row-major matrix view into a store.
#[derive(Debug, Clone, Copy)]
pub struct MatRef<'a> {
    pub rows: usize,
    pub cols: usize,
    pub data: &'a [f64],
}

impl<'a> MatRef<'a> {
    #[inline]
    pub fn row(&self, r: usize) -> &'a [f64] {
        debug_assert!(r < self.rows);
        &self.data[r * self.cols..(r + 1) * self.cols]
    }
}

/// Owned dense row-major matrix. Used for standalone values such as the
/// output of [`xavier_init`](crate::numerics::xavier_init).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl DenseMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        assert!(rows > 0 && cols > 0, "matrix dims must be positive");
        DenseMatrix { rows, cols, data: vec![0.0; rows * cols] }
    }

    pub fn from_rows(rows: &[&[f64]]) -> Self {
        assert!(!rows.is_empty());
        let cols = rows[0].len();
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.len(), cols, "ragged rows");
            data.extend_from_slice(r);
        }
        DenseMatrix { rows: rows.len(), cols, data }
    }

    pub fn as_ref(&self) -> MatRef<'_> {
        MatRef { rows: self.rows, cols: self.cols, data: &self.data }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParameterStore {
    segments: Vec<SegmentMeta>,
    data: Vec<f64>,
}

impl ParameterStore {
    pub fn new() -> Self {
        ParameterStore { segments: Vec::new(), data: Vec::new() }
    }

    /// Registers a zero-initialized `rows x cols` segment. Names must be
    /// unique; vectors are registered as `rows x 1`.
    pub fn register(&mut self, name: &str, rows: usize, cols: usize) -> SegId {
        assert!(rows > 0 && cols > 0, "segment {name}: dims must be positive");
        assert!(
            self.segments.iter().all(|s| s.name != name),
            "duplicate segment name {name}"
        );
        let offset = self.data.len();
        self.data.resize(offset + rows * cols, 0.0);
        self.segments.push(SegmentMeta { name: name.to_string(), rows, cols, offset });
        SegId(self.segments.len() - 1)
    }

    /// A store with the same layout and all-zero values.
    pub fn zeros_like(&self) -> Self {
        ParameterStore {
            segments: self.segments.clone(),
            data: vec![0.0; self.data.len()],
        }
    }

    /// True when `other` has byte-identical segment layout.
    pub fn same_layout(&self, other: &ParameterStore) -> bool {
        self.segments == other.segments
    }

    /// Copies all values from `src` (layouts must match).
    pub fn copy_from(&mut self, src: &ParameterStore) {
        assert!(self.same_layout(src), "layout mismatch in copy_from");
        self.data.copy_from_slice(&src.data);
    }

    pub fn zero(&mut self) {
        self.data.fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn num_segments(&self) -> usize {
        self.segments.len()
    }

    pub fn segment_name(&self, id: SegId) -> &str {
        &self.segments[id.0].name
    }

    pub fn segment_shape(&self, id: SegId) -> (usize, usize) {
        let m = &self.segments[id.0];
        (m.rows, m.cols)
    }

    pub fn segment_ids(&self) -> impl Iterator<Item = SegId> {
        (0..self.segments.len()).map(SegId)
    }

    #[inline]
    fn range(&self, id: SegId) -> std::ops::Range<usize> {
        let m = &self.segments[id.0];
        m.offset..m.offset + m.rows * m.cols
    }

    #[inline]
    pub fn mat(&self, id: SegId) -> MatRef<'_> {
        let m = &self.segments[id.0];
        MatRef { rows: m.rows, cols: m.cols, data: &self.data[self.range(id)] }
    }

    #[inline]
    pub fn vec(&self, id: SegId) -> &[f64] {
        &self.data[self.range(id)]
    }

    #[inline]
    pub fn vec_mut(&mut self, id: SegId) -> &mut [f64] {
        let r = self.range(id);
        &mut self.data[r]
    }

    /// Mutable views of two distinct segments at once.
    pub fn pair_mut(&mut self, a: SegId, b: SegId) -> (&mut [f64], &mut [f64]) {
        assert_ne!(a.0, b.0, "pair_mut needs distinct segments");
        let ra = self.range(a);
        let rb = self.range(b);
        if ra.start < rb.start {
            let (left, right) = self.data.split_at_mut(rb.start);
            (&mut left[ra.start..ra.end], &mut right[..rb.end - rb.start])
        } else {
            let (left, right) = self.data.split_at_mut(ra.start);
            let b_slice = &mut left[rb.start..rb.end];
            (&mut right[..ra.end - ra.start], b_slice)
        }
    }

    /// The full flat value buffer in registration order.
    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn all_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }

    /// Xavier-uniform init for every weight matrix (`cols > 1`), zeros for
    /// every bias vector (`cols == 1`), in registration order.
    pub fn init_xavier(&mut self, rng: &mut SeededRng) {
        for i in 0..self.segments.len() {
            let (rows, cols) = {
                let m = &self.segments[i];
                (m.rows, m.cols)
            };
            if cols == 1 {
                continue; // biases stay zero
            }
            let limit = (6.0 / (rows + cols) as f64).sqrt();
            let r = self.range(SegId(i));
            for x in &mut self.data[r] {
                *x = rng.uniform_signed(limit);
            }
        }
    }
}

impl Default for ParameterStore {
    fn default() -> Self {
        Self::new()
    }
}

/// Affine layer handle: weight `out x in` plus bias `out`.
#[derive(Debug, Clone, Copy)]
pub struct AffineIds {
    pub w: SegId,
    pub b: SegId,
}

impl AffineIds {
    pub fn register(store: &mut ParameterStore, name: &str, out: usize, input: usize) -> Self {
        AffineIds {
            w: store.register(&format!("{name}.w"), out, input),
            b: store.register(&format!("{name}.b"), out, 1),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn registration_and_views() {
        let mut s = ParameterStore::new();
        let a = s.register("a", 2, 3);
        let b = s.register("b", 4, 1);
        assert_eq!(s.len(), 10);
        assert_eq!(s.mat(a).rows, 2);
        assert_eq!(s.vec(b).len(), 4);
        s.vec_mut(a)[5] = 1.5;
        assert_eq!(s.mat(a).row(1)[2], 1.5);
    }

    #[test]
    #[should_panic(expected = "duplicate segment name")]
    fn duplicate_names_panic() {
        let mut s = ParameterStore::new();
        s.register("x", 1, 1);
        s.register("x", 2, 2);
    }

    #[test]
    fn zeros_like_shares_layout() {
        let mut s = ParameterStore::new();
        s.register("a", 3, 3);
        let mut rng = SeededRng::new(0);
        s.init_xavier(&mut rng);
        let z = s.zeros_like();
        assert!(z.same_layout(&s));
        assert!(z.data().iter().all(|&x| x == 0.0));
    }

    #[test]
    fn xavier_bounds_and_determinism() {
        let mut s = ParameterStore::new();
        s.register("w", 128, 128);
        s.register("b", 128, 1);
        let mut t = s.clone();
        s.init_xavier(&mut SeededRng::new(11));
        t.init_xavier(&mut SeededRng::new(11));
        assert_eq!(s.data(), t.data());
        let limit = (6.0 / 256.0f64).sqrt();
        let w = s.segment_ids().next().unwrap();
        assert!(s.vec(w).iter().all(|x| x.abs() <= limit));
        assert!(s.vec(w).iter().any(|&x| x != 0.0));
        let b = s.segment_ids().nth(1).unwrap();
        assert!(s.vec(b).iter().all(|&x| x == 0.0));
    }
}
