//! Exact and approximate k-nearest-neighbor search under Euclidean distance.
//!
//! All backends order candidates by `(distance, row index)`, so equal
//! distances resolve to the smaller row index and every result is
//! deterministic regardless of thread count.

mod descent;
mod kdtree;
mod topk;

use rayon::prelude::*;

use crate::error::{invalid_argument, Result};
use crate::matrix::{sq_dist_bounded, DataMatrix};

use kdtree::KdTree;
use topk::TopK;

pub use descent::knn_approx;

/// Above this many rows, `NnBackend::Auto` switches to the approximate
/// backend for high-dimensional data.
pub const AUTO_EXACT_MAX_ROWS: usize = 20_000;

/// Dimensions up to this use a k-d tree for exact search; above it, brute force.
pub const KDTREE_MAX_DIM: usize = 16;

/// Default seed of the approximate backend.
pub const DEFAULT_SEED: u64 = 0;

/// Which nearest-neighbor implementation to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum NnBackend {
    /// Exact for small or low-dimensional inputs, approximate otherwise.
    Auto { seed: u64 },
    Exact,
    Approx { seed: u64 },
}

impl Default for NnBackend {
    fn default() -> Self {
        NnBackend::Auto { seed: DEFAULT_SEED }
    }
}

impl NnBackend {
    /// Resolves `Auto` for a concrete input shape.
    pub fn resolve(self, rows: usize, cols: usize) -> NnBackend {
        match self {
            NnBackend::Auto { seed } => {
                if rows <= AUTO_EXACT_MAX_ROWS || cols <= KDTREE_MAX_DIM {
                    NnBackend::Exact
                } else {
                    NnBackend::Approx { seed }
                }
            }
            other => other,
        }
    }
}

/// `rows × k` neighbor indices and Euclidean distances, ascending per row.
#[derive(Debug, Clone, PartialEq)]
pub struct NeighborList {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
}

impl NeighborList {
    pub(crate) fn from_rows(k: usize, rows: Vec<Vec<(f64, usize)>>) -> Self {
        let mut indices = Vec::with_capacity(rows.len() * k);
        let mut distances = Vec::with_capacity(rows.len() * k);
        for r in rows {
            debug_assert_eq!(r.len(), k);
            for (d, i) in r {
                indices.push(i);
                distances.push(d.sqrt());
            }
        }
        Self {
            k,
            indices,
            distances,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.indices.len().checked_div(self.k).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// Fraction of `reference` neighbors that also appear in `self`.
    pub fn recall_against(&self, reference: &NeighborList) -> f64 {
        assert_eq!(self.len(), reference.len());
        assert_eq!(self.k, reference.k);
        let mut hits = 0usize;
        for i in 0..self.len() {
            let mine = self.indices(i);
            hits += reference
                .indices(i)
                .iter()
                .filter(|j| mine.contains(j))
                .count();
        }
        hits as f64 / (self.len() * self.k) as f64
    }
}

/// Exact search structure over a reference set.
pub(crate) enum ExactIndex<'a> {
    Kd(KdTree<'a>),
    Brute(&'a DataMatrix),
}

impl<'a> ExactIndex<'a> {
    pub(crate) fn build(data: &'a DataMatrix) -> Self {
        if data.cols() <= KDTREE_MAX_DIM && data.rows() > 64 {
            ExactIndex::Kd(KdTree::build(data))
        } else {
            ExactIndex::Brute(data)
        }
    }

    /// k nearest reference rows to `q`, sorted by `(squared distance, index)`.
    pub(crate) fn query(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        match self {
            ExactIndex::Kd(tree) => tree.query(q, k, exclude),
            ExactIndex::Brute(data) => {
                let mut top = TopK::new(k);
                for (j, row) in data.iter_rows().enumerate() {
                    if Some(j) == exclude {
                        continue;
                    }
                    if let Some(d) = sq_dist_bounded(q, row, top.bound()) {
                        top.push(d, j);
                    }
                }
                top.into_sorted()
            }
        }
    }
}

fn check_k(rows: usize, k: usize) -> Result<()> {
    if k == 0 {
        return Err(invalid_argument("k must be at least 1"));
    }
    if k >= rows {
        return Err(invalid_argument(format!(
            "k = {k} must be smaller than the number of points ({rows})"
        )));
    }
    Ok(())
}

/// Exact k nearest neighbors of every row among the other rows.
pub fn knn_exact(points: &DataMatrix, k: usize) -> Result<NeighborList> {
    check_k(points.rows(), k)?;
    let index = ExactIndex::build(points);
    let rows: Vec<_> = (0..points.rows())
        .into_par_iter()
        .map(|i| index.query(points.row(i), k, Some(i)))
        .collect();
    Ok(NeighborList::from_rows(k, rows))
}

/// k nearest neighbors using the requested backend.
pub fn knn(points: &DataMatrix, k: usize, backend: NnBackend) -> Result<NeighborList> {
    match backend.resolve(points.rows(), points.cols()) {
        NnBackend::Approx { seed } => knn_approx(points, k, seed),
        _ => knn_exact(points, k),
    }
}

/// Exact k nearest `reference` rows for each row of `queries`. No row is
/// excluded, so a query identical to a reference row finds it at distance 0.
pub fn query_exact(reference: &DataMatrix, queries: &DataMatrix, k: usize) -> Result<NeighborList> {
    if queries.cols() != reference.cols() {
        return Err(invalid_argument(format!(
            "query dimension {} does not match reference dimension {}",
            queries.cols(),
            reference.cols()
        )));
    }
    if k == 0 || k > reference.rows() {
        return Err(invalid_argument(format!(
            "k = {k} must be in 1..={}",
            reference.rows()
        )));
    }
    let index = ExactIndex::build(reference);
    let rows: Vec<_> = queries
        .par_rows()
        .map(|q| index.query(q, k, None))
        .collect();
    Ok(NeighborList::from_rows(k, rows))
}
