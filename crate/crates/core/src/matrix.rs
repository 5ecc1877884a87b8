//! Dense row-major point collections.

use rayon::prelude::*;

use crate::error::{invalid_argument, invalid_data, Result};

/// A dense `rows × cols` matrix of finite `f64` values, one point per row.
#[derive(Debug, Clone, PartialEq)]
pub struct DataMatrix {
    rows: usize,
    cols: usize,
    values: Vec<f64>,
}

impl DataMatrix {
    /// Builds a matrix from row-major values, rejecting empty shapes and
    /// non-finite entries.
    pub fn new(rows: usize, cols: usize, values: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(invalid_argument(format!(
                "matrix shape must be non-empty, got {rows}x{cols}"
            )));
        }
        if values.len() != rows * cols {
            return Err(invalid_argument(format!(
                "expected {} values for a {rows}x{cols} matrix, got {}",
                rows * cols,
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid_data(format!(
                "non-finite value at row {}, column {}",
                pos / cols,
                pos % cols
            )));
        }
        Ok(Self { rows, cols, values })
    }

    /// Builds a matrix from a list of equally sized rows.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let n = rows.len();
        let d = rows.first().map_or(0, |r| r.as_ref().len());
        let mut values = Vec::with_capacity(n * d);
        for (i, r) in rows.iter().enumerate() {
            let r = r.as_ref();
            if r.len() != d {
                return Err(invalid_data(format!(
                    "row {i} has {} columns, expected {d}",
                    r.len()
                )));
            }
            values.extend_from_slice(r);
        }
        Self::new(n, d, values)
    }

    /// Used internally where finiteness is already guaranteed by construction.
    pub(crate) fn from_vec_unchecked(rows: usize, cols: usize, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), rows * cols);
        Self { rows, cols, values }
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self::from_vec_unchecked(rows, cols, vec![0.0; rows * cols])
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.values[i * self.cols..(i + 1) * self.cols]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.values
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.values
    }

    pub fn iter_rows(&self) -> impl ExactSizeIterator<Item = &[f64]> {
        self.values.chunks_exact(self.cols)
    }

    pub(crate) fn par_rows(&self) -> rayon::slice::ChunksExact<'_, f64> {
        self.values.par_chunks_exact(self.cols)
    }

    pub(crate) fn par_rows_mut(&mut self) -> rayon::slice::ChunksExactMut<'_, f64> {
        self.values.par_chunks_exact_mut(self.cols)
    }

    /// Copies the selected rows, in the given order.
    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self::from_vec_unchecked(indices.len(), self.cols, values)
    }

    /// Column means.
    pub fn mean(&self) -> Vec<f64> {
        let mut mean = vec![0.0; self.cols];
        for r in self.iter_rows() {
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v;
            }
        }
        let n = self.rows as f64;
        mean.iter_mut().for_each(|m| *m /= n);
        mean
    }
}

/// Squared Euclidean distance.
///
/// Every search backend goes through this function (or its bounded twin), so
/// equal pairs always produce bit-identical distances and index tie-breaking
/// stays consistent across backends.
#[inline]
pub fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    let mut ca = a.chunks_exact(BLOCK);
    let mut cb = b.chunks_exact(BLOCK);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc += block_sum(x, y);
    }
    acc + tail_sum(ca.remainder(), cb.remainder())
}

/// Like [`sq_dist`], but gives up as soon as the running sum exceeds `bound`.
/// When it returns `Some`, the value is bit-identical to [`sq_dist`].
#[inline]
pub fn sq_dist_bounded(a: &[f64], b: &[f64], bound: f64) -> Option<f64> {
    let mut acc = 0.0;
    let mut ca = a.chunks_exact(BLOCK);
    let mut cb = b.chunks_exact(BLOCK);
    for (x, y) in (&mut ca).zip(&mut cb) {
        acc += block_sum(x, y);
        if acc > bound {
            return None;
        }
    }
    let d = acc + tail_sum(ca.remainder(), cb.remainder());
    (d <= bound).then_some(d)
}

#[inline]
pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    sq_dist(a, b).sqrt()
}

const BLOCK: usize = 16;

#[inline(always)]
fn block_sum(x: &[f64], y: &[f64]) -> f64 {
    let mut lanes = [0.0f64; 4];
    for (xs, ys) in x.chunks_exact(4).zip(y.chunks_exact(4)) {
        for l in 0..4 {
            let t = xs[l] - ys[l];
            lanes[l] += t * t;
        }
    }
    (lanes[0] + lanes[1]) + (lanes[2] + lanes[3])
}

#[inline(always)]
fn tail_sum(x: &[f64], y: &[f64]) -> f64 {
    x.iter()
        .zip(y)
        .map(|(a, b)| {
            let t = a - b;
            t * t
        })
        .sum()
}
