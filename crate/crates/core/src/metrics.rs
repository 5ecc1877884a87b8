//! Embedding quality scores: trustworthiness, cross-validated k-NN accuracy
//! and centroid triplet accuracy.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rayon::prelude::*;

use crate::error::{invalid_argument, Result};
use crate::matrix::{sq_dist, DataMatrix};
use crate::nnsearch::{knn_exact, query_exact};
use crate::rng;

pub const DEFAULT_TRUST_K: usize = 5;
pub const DEFAULT_FOLDS: usize = 10;
pub const DEFAULT_KNN_SWEEP: [usize; 5] = [1, 5, 10, 15, 20];
/// Relative tolerance under which two triplet distances count as equal.
pub const CTA_TIE_TOLERANCE: f64 = 1e-12;

const FOLD_STREAM: u64 = 0x4b46;

fn same_rows(high: &DataMatrix, low: &DataMatrix) -> Result<()> {
    if high.rows() != low.rows() {
        return Err(invalid_argument(format!(
            "row count mismatch: {} high-dimensional vs {} embedded",
            high.rows(),
            low.rows()
        )));
    }
    Ok(())
}

/// Sum over points of `max(0, r(i, j) − k)` for the `k` embedded neighbors `j`
/// of each `i`, where `r` is the rank in the original space.
pub fn trustworthiness_penalty(high: &DataMatrix, low: &DataMatrix, k: usize) -> Result<u128> {
    same_rows(high, low)?;
    let n = high.rows();
    if k == 0 || 2 * k >= n {
        return Err(invalid_argument(format!(
            "trustworthiness needs 1 <= k < n/2, got k={k} with n={n}"
        )));
    }
    let low_nn = knn_exact(low, k)?;
    let total = (0..n)
        .into_par_iter()
        .map(|i| {
            let xi = high.row(i);
            let dist: Vec<f64> = (0..n).map(|m| sq_dist(xi, high.row(m))).collect();
            let mut penalty = 0u128;
            for &j in low_nn.indices(i) {
                let key = (dist[j], j);
                let rank = 1 + (0..n)
                    .filter(|&m| m != i && (dist[m], m) < key)
                    .count();
                penalty += rank.saturating_sub(k) as u128;
            }
            penalty
        })
        .sum();
    Ok(total)
}

/// Trustworthiness T(k) in [0, 1]; 1 when every embedded neighbor is also a
/// neighbor in the original space. Rank ties break by row index.
pub fn trustworthiness(high: &DataMatrix, low: &DataMatrix, k: usize) -> Result<f64> {
    let penalty = trustworthiness_penalty(high, low, k)?;
    let (n, k) = (high.rows() as f64, k as f64);
    let t = 1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty as f64;
    Ok(t.clamp(0.0, 1.0))
}

/// Per-fold outcome of [`knn_accuracy_cv`].
#[derive(Debug, Clone, PartialEq)]
pub struct CvResult {
    pub k: usize,
    pub correct: Vec<usize>,
    pub fold_sizes: Vec<usize>,
}

impl CvResult {
    pub fn folds(&self) -> usize {
        self.fold_sizes.len()
    }

    /// Mean of the per-fold accuracies.
    pub fn mean_accuracy(&self) -> f64 {
        let sum: f64 = self
            .correct
            .iter()
            .zip(&self.fold_sizes)
            .map(|(&c, &s)| c as f64 / s as f64)
            .sum();
        sum / self.folds() as f64
    }
}

/// Stratified fold index for every row. Each class is shuffled with the
/// seeded generator and dealt round-robin, continuing where the previous
/// class stopped so fold sizes differ by at most one.
pub fn stratified_folds(labels: &[i64], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(invalid_argument(format!("need at least 2 folds, got {folds}")));
    }
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let mut rng = rng::seeded(seed, FOLD_STREAM);
    let mut fold_of = vec![0; labels.len()];
    let mut offset = 0;
    for (label, mut members) in classes {
        if members.len() < folds {
            return Err(invalid_argument(format!(
                "class {label} has {} member(s), fewer than {folds} folds",
                members.len()
            )));
        }
        members.shuffle(&mut rng);
        for (pos, &i) in members.iter().enumerate() {
            fold_of[i] = (offset + pos) % folds;
        }
        offset = (offset + members.len()) % folds;
    }
    Ok(fold_of)
}

/// Majority vote over neighbor labels, listed nearest first. A tie goes to
/// the tied class that appears earliest in the list.
pub fn vote(neighbor_labels: &[i64]) -> i64 {
    let mut counts: Vec<(i64, usize)> = Vec::new();
    for &l in neighbor_labels {
        match counts.iter_mut().find(|(c, _)| *c == l) {
            Some(e) => e.1 += 1,
            None => counts.push((l, 1)),
        }
    }
    let best = counts.iter().map(|&(_, c)| c).max().unwrap_or(0);
    counts
        .into_iter()
        .find(|&(_, c)| c == best)
        .map(|(l, _)| l)
        .expect("vote over an empty neighbor list")
}

/// Stratified k-fold cross-validated k-NN classification accuracy.
pub fn knn_accuracy_cv(
    embedding: &DataMatrix,
    labels: &[i64],
    k: usize,
    folds: usize,
    seed: u64,
) -> Result<CvResult> {
    if labels.len() != embedding.rows() {
        return Err(invalid_argument(format!(
            "{} labels for {} rows",
            labels.len(),
            embedding.rows()
        )));
    }
    if k == 0 {
        return Err(invalid_argument("k must be at least 1"));
    }
    let fold_of = stratified_folds(labels, folds, seed)?;
    let mut correct = Vec::with_capacity(folds);
    let mut fold_sizes = Vec::with_capacity(folds);
    for f in 0..folds {
        let (test, train): (Vec<usize>, Vec<usize>) =
            (0..labels.len()).partition(|&i| fold_of[i] == f);
        if k > train.len() {
            return Err(invalid_argument(format!(
                "k={k} exceeds the {} training rows of fold {f}",
                train.len()
            )));
        }
        let nl = query_exact(&embedding.select_rows(&train), &embedding.select_rows(&test), k)?;
        let hits = (0..test.len())
            .filter(|&t| {
                let votes: Vec<i64> = nl.indices(t).iter().map(|&j| labels[train[j]]).collect();
                vote(&votes) == labels[test[t]]
            })
            .count();
        correct.push(hits);
        fold_sizes.push(test.len());
    }
    Ok(CvResult {
        k,
        correct,
        fold_sizes,
    })
}

/// Per-class means, classes in ascending label order.
pub fn class_centroids(points: &DataMatrix, labels: &[i64]) -> Result<(Vec<i64>, DataMatrix)> {
    if labels.len() != points.rows() {
        return Err(invalid_argument(format!(
            "{} labels for {} rows",
            labels.len(),
            points.rows()
        )));
    }
    let mut classes: BTreeMap<i64, Vec<usize>> = BTreeMap::new();
    for (i, &l) in labels.iter().enumerate() {
        classes.entry(l).or_default().push(i);
    }
    let cols = points.cols();
    let mut values = Vec::with_capacity(classes.len() * cols);
    for members in classes.values() {
        let mut acc = vec![0.0; cols];
        for &i in members {
            for (a, v) in acc.iter_mut().zip(points.row(i)) {
                *a += v;
            }
        }
        values.extend(acc.iter().map(|a| a / members.len() as f64));
    }
    let ids: Vec<i64> = classes.into_keys().collect();
    let m = DataMatrix::new(ids.len(), cols, values)?;
    Ok((ids, m))
}

/// Orders two distances, treating a relative difference within
/// [`CTA_TIE_TOLERANCE`] as equal.
pub fn tolerant_cmp(a: f64, b: f64) -> Ordering {
    if (a - b).abs() <= CTA_TIE_TOLERANCE * a.abs().max(b.abs()) {
        Ordering::Equal
    } else {
        a.total_cmp(&b)
    }
}

fn triplet_signature(c: &DataMatrix, a: usize, b: usize, d: usize) -> [Ordering; 3] {
    let ab = sq_dist(c.row(a), c.row(b)).sqrt();
    let ad = sq_dist(c.row(a), c.row(d)).sqrt();
    let bd = sq_dist(c.row(b), c.row(d)).sqrt();
    [tolerant_cmp(ab, ad), tolerant_cmp(ab, bd), tolerant_cmp(ad, bd)]
}

/// Number of preserved class-centroid triplets and the total count.
pub fn centroid_triplet_counts(
    high: &DataMatrix,
    low: &DataMatrix,
    labels: &[i64],
) -> Result<(u64, u64)> {
    same_rows(high, low)?;
    let (_, ch) = class_centroids(high, labels)?;
    let (_, cl) = class_centroids(low, labels)?;
    let c = ch.rows();
    if c < 3 {
        return Err(invalid_argument(format!(
            "centroid triplet accuracy needs at least 3 classes, got {c}"
        )));
    }
    let preserved: u64 = (0..c)
        .into_par_iter()
        .map(|a| {
            let mut kept = 0u64;
            for b in a + 1..c {
                for d in b + 1..c {
                    if triplet_signature(&ch, a, b, d) == triplet_signature(&cl, a, b, d) {
                        kept += 1;
                    }
                }
            }
            kept
        })
        .sum();
    let c = c as u64;
    Ok((preserved, c * (c - 1) * (c - 2) / 6))
}

/// Fraction of class-centroid triplets whose three pairwise distances have
/// the same order in both spaces. A tie must be a tie in both spaces.
pub fn centroid_triplet_accuracy(high: &DataMatrix, low: &DataMatrix, labels: &[i64]) -> Result<f64> {
    let (kept, total) = centroid_triplet_counts(high, low, labels)?;
    Ok(kept as f64 / total as f64)
}

/// One k-NN accuracy entry of a [`MetricsReport`].
#[derive(Debug, Clone, PartialEq)]
pub struct KnnScore {
    pub k: usize,
    pub accuracy: f64,
    pub folds: usize,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub trustworthiness: Option<f64>,
    pub trustworthiness_k: usize,
    pub knn_accuracy: Vec<KnnScore>,
    pub cta: Option<f64>,
    pub runtime_seconds: f64,
}
