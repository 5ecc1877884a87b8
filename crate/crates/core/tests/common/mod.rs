//! Brute-force reference implementations and shared fixtures for the
//! integration tests. Everything here is deliberately naive: full sorts,
//! plain loops, no shared code with the library beyond `DataMatrix`.

#![allow(dead_code)]

use hnne::dataio::gen_blobs;
use hnne::hierarchy::Hierarchy;
use hnne::translate::Translation;
use hnne::DataMatrix;

pub fn euclid(a: &[f64], b: &[f64]) -> f64 {
    let mut s = 0.0;
    for i in 0..a.len() {
        s += (a[i] - b[i]) * (a[i] - b[i]);
    }
    s.sqrt()
}

/// Others of `i`, nearest first, ties by index.
fn ordered_others(x: &DataMatrix, i: usize) -> Vec<usize> {
    let mut others: Vec<(f64, usize)> = (0..x.rows())
        .filter(|&m| m != i)
        .map(|m| (euclid(x.row(i), x.row(m)), m))
        .collect();
    others.sort_by(|a, b| a.partial_cmp(b).unwrap());
    others.into_iter().map(|p| p.1).collect()
}

pub fn naive_trustworthiness(high: &DataMatrix, low: &DataMatrix, k: usize) -> f64 {
    let n = high.rows();
    let mut penalty = 0.0;
    for i in 0..n {
        let high_order = ordered_others(high, i);
        let low_order = ordered_others(low, i);
        for &j in &low_order[..k] {
            let rank = high_order.iter().position(|&m| m == j).unwrap() + 1;
            if rank > k {
                penalty += (rank - k) as f64;
            }
        }
    }
    let (n, k) = (n as f64, k as f64);
    1.0 - 2.0 / (n * k * (2.0 * n - 3.0 * k - 1.0)) * penalty
}

fn class_means(x: &DataMatrix, labels: &[i64]) -> Vec<Vec<f64>> {
    let mut classes: Vec<i64> = labels.to_vec();
    classes.sort();
    classes.dedup();
    classes
        .iter()
        .map(|&c| {
            let mut sum = vec![0.0; x.cols()];
            let mut count = 0.0;
            for (i, &l) in labels.iter().enumerate() {
                if l == c {
                    for (s, v) in sum.iter_mut().zip(x.row(i)) {
                        *s += v;
                    }
                    count += 1.0;
                }
            }
            sum.iter().map(|s| s / count).collect()
        })
        .collect()
}

/// Rank of each of the three distances: how many of the others are smaller
/// by more than the tie tolerance.
fn rank_pattern(d: [f64; 3]) -> [usize; 3] {
    let less = |a: f64, b: f64| b - a > 1e-12 * a.abs().max(b.abs());
    let mut r = [0; 3];
    for i in 0..3 {
        r[i] = (0..3).filter(|&j| less(d[j], d[i])).count();
    }
    r
}

pub fn naive_cta(high: &DataMatrix, low: &DataMatrix, labels: &[i64]) -> f64 {
    let ch = class_means(high, labels);
    let cl = class_means(low, labels);
    let c = ch.len();
    let (mut kept, mut total) = (0.0, 0.0);
    for a in 0..c {
        for b in a + 1..c {
            for e in b + 1..c {
                let dh = [euclid(&ch[a], &ch[b]), euclid(&ch[a], &ch[e]), euclid(&ch[b], &ch[e])];
                let dl = [euclid(&cl[a], &cl[b]), euclid(&cl[a], &cl[e]), euclid(&cl[b], &cl[e])];
                total += 1.0;
                if rank_pattern(dh) == rank_pattern(dl) {
                    kept += 1.0;
                }
            }
        }
    }
    kept / total
}

/// Correct predictions per fold for k-NN majority vote given a fold assignment.
pub fn naive_knn_counts(emb: &DataMatrix, labels: &[i64], k: usize, fold_of: &[usize], folds: usize) -> Vec<usize> {
    let mut correct = vec![0; folds];
    for t in 0..emb.rows() {
        let f = fold_of[t];
        let mut cand: Vec<(f64, usize)> = (0..emb.rows())
            .filter(|&m| fold_of[m] != f)
            .map(|m| (euclid(emb.row(t), emb.row(m)), m))
            .collect();
        cand.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let near: Vec<i64> = cand[..k].iter().map(|p| labels[p.1]).collect();
        let count = |c: i64| near.iter().filter(|&&l| l == c).count();
        let best = near.iter().map(|&c| count(c)).max().unwrap();
        let pred = *near.iter().find(|&&c| count(c) == best).unwrap();
        if pred == labels[t] {
            correct[f] += 1;
        }
    }
    correct
}

/// The default desk-scale blobs dataset.
pub fn blobs(n: usize, seed: u64) -> (DataMatrix, Vec<i64>) {
    gen_blobs(n, 64, 10, 20.0, 1.0, seed).unwrap()
}

/// Fraction of points whose embedded nearest neighbor carries the same label.
pub fn one_nn_agreement(emb: &DataMatrix, labels: &[i64]) -> f64 {
    let nl = hnne::nnsearch::knn_exact(emb, 1).unwrap();
    let hits = (0..emb.rows()).filter(|&i| labels[nl.indices(i)[0]] == labels[i]).count();
    hits as f64 / emb.rows() as f64
}

/// Points of `members` of every node on every level, as original row ids.
pub fn descendants(h: &Hierarchy) -> Vec<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    let mut point_sets: Vec<Vec<usize>> = h.base_partition().members();
    for (k, level) in h.levels().iter().enumerate() {
        if k > 0 {
            let members = level.parent_of_child.members();
            point_sets = members
                .iter()
                .map(|kids| kids.iter().flat_map(|&c| point_sets[c].iter().copied()).collect())
                .collect();
        }
        out.push(point_sets.clone());
    }
    out
}

/// Worst ratio `|p − c| / (radius_fraction · r_c)` over every centroid and
/// every descendant point; at most 1 means full containment.
pub fn worst_containment_ratio(h: &Hierarchy, t: &Translation, radius_fraction: f64) -> (f64, usize) {
    let mut worst: f64 = 0.0;
    let mut checked = 0;
    for (k, nodes) in descendants(h).iter().enumerate() {
        for (c, pts) in nodes.iter().enumerate() {
            let center = t.positions[k].row(c);
            let r = radius_fraction * t.radii[k][c];
            for &p in pts {
                worst = worst.max(euclid(t.embedding.row(p), center) / r);
            }
            checked += 1;
        }
    }
    (worst, checked)
}
