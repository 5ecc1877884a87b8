//! Approximate k-NN graph construction: random-projection forest
//! initialisation followed by neighbor-descent refinement.
//!
//! Randomness is drawn from seeded ChaCha8 streams and every parallel phase
//! only reads shared state, collecting proposals in point order. Updates are
//! then applied sequentially, so the graph depends on the seed alone.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::Result;
use crate::matrix::{sq_dist, DataMatrix};

use super::{check_k, knn_exact, NeighborList};

/// Inputs this small are answered exactly.
const EXACT_CUTOFF: usize = 256;
const MIN_GRAPH_K: usize = 30;
const N_TREES: usize = 10;
const MAX_ITERS: usize = 24;
const DELTA: f64 = 0.0005;
const POLISH_ROUNDS: usize = 3;
const POLISH_MIN_HOPS: usize = 10;

#[derive(Debug, Clone, Copy)]
struct Entry {
    d: f64,
    idx: u32,
    new: bool,
}

struct Graph {
    k: usize,
    lists: Vec<Vec<Entry>>,
}

impl Graph {
    fn new(n: usize, k: usize) -> Self {
        Self {
            k,
            lists: vec![Vec::with_capacity(k + 1); n],
        }
    }

    fn bound(&self, i: usize) -> f64 {
        let l = &self.lists[i];
        if l.len() < self.k {
            f64::INFINITY
        } else {
            l[self.k - 1].d
        }
    }

    /// Inserts `j` into the list of `i`; returns whether the list changed.
    fn push(&mut self, i: usize, j: usize, d: f64) -> bool {
        let k = self.k;
        let list = &mut self.lists[i];
        let key = (d, j as u32);
        if list.len() == k {
            let w = list[k - 1];
            if key >= (w.d, w.idx) {
                return false;
            }
        }
        if list.iter().any(|e| e.idx as usize == j) {
            return false;
        }
        let pos = list.partition_point(|e| (e.d, e.idx) < key);
        list.insert(
            pos,
            Entry {
                d,
                idx: j as u32,
                new: true,
            },
        );
        list.truncate(k);
        true
    }
}

fn stream(seed: u64, tag: u64, item: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(tag.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ item);
    rng
}

/// Approximate k nearest neighbors of every row. Deterministic for a given
/// seed; recall against [`knn_exact`] is typically above 0.99.
pub fn knn_approx(points: &DataMatrix, k: usize, seed: u64) -> Result<NeighborList> {
    let n = points.rows();
    check_k(n, k)?;
    if n <= EXACT_CUTOFF {
        return knn_exact(points, k);
    }
    let gk = (3 * k).max(MIN_GRAPH_K).min(n - 1);
    let mut graph = Graph::new(n, gk);

    init_forest(points, &mut graph, seed);
    fill_random(&mut graph, n, seed, points);
    refine(points, &mut graph, seed);
    polish(points, &mut graph, (2 * k).max(POLISH_MIN_HOPS));

    let rows = graph
        .lists
        .into_iter()
        .map(|l| l.into_iter().take(k).map(|e| (e.d, e.idx as usize)).collect())
        .collect();
    Ok(NeighborList::from_rows(k, rows))
}

fn init_forest(points: &DataMatrix, graph: &mut Graph, seed: u64) {
    let n = points.rows();
    let leaf_size = (2 * graph.k).max(24);
    for t in 0..N_TREES {
        let mut rng = stream(seed, 1, t as u64);
        let mut leaves = Vec::new();
        let mut stack = vec![(0..n).collect::<Vec<usize>>()];
        while let Some(ids) = stack.pop() {
            if ids.len() <= leaf_size {
                leaves.push(ids);
                continue;
            }
            let (l, r) = split(points, &ids, &mut rng);
            stack.push(l);
            stack.push(r);
        }
        let proposals: Vec<Vec<(u32, u32, f64)>> = leaves
            .par_iter()
            .map(|leaf| {
                let mut out = Vec::with_capacity(leaf.len() * leaf.len() / 2);
                for (a, &i) in leaf.iter().enumerate() {
                    for &j in &leaf[a + 1..] {
                        out.push((i as u32, j as u32, sq_dist(points.row(i), points.row(j))));
                    }
                }
                out
            })
            .collect();
        for (i, j, d) in proposals.into_iter().flatten() {
            graph.push(i as usize, j as usize, d);
            graph.push(j as usize, i as usize, d);
        }
    }
}

/// Random hyperplane split between two sampled points.
fn split(points: &DataMatrix, ids: &[usize], rng: &mut ChaCha8Rng) -> (Vec<usize>, Vec<usize>) {
    let a = ids[rng.random_range(0..ids.len())];
    let mut b = ids[rng.random_range(0..ids.len())];
    for _ in 0..8 {
        if points.row(a) != points.row(b) {
            break;
        }
        b = ids[rng.random_range(0..ids.len())];
    }
    let pa = points.row(a);
    let pb = points.row(b);
    let normal: Vec<f64> = pa.iter().zip(pb).map(|(x, y)| x - y).collect();
    let offset: f64 = normal
        .iter()
        .zip(pa.iter().zip(pb))
        .map(|(w, (x, y))| w * 0.5 * (x + y))
        .sum();
    let mut left = Vec::with_capacity(ids.len() / 2 + 1);
    let mut right = Vec::with_capacity(ids.len() / 2 + 1);
    for &i in ids {
        let side: f64 = normal
            .iter()
            .zip(points.row(i))
            .map(|(w, x)| w * x)
            .sum::<f64>()
            - offset;
        if side < 0.0 || (side == 0.0 && rng.random::<bool>()) {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    // degenerate hyperplane (duplicates): fall back to a random halving
    if left.is_empty() || right.is_empty() {
        let mut all: Vec<usize> = ids.to_vec();
        all.shuffle(rng);
        let r = all.split_off(all.len() / 2);
        return (all, r);
    }
    (left, right)
}

fn fill_random(graph: &mut Graph, n: usize, seed: u64, points: &DataMatrix) {
    for i in 0..n {
        if graph.lists[i].len() >= graph.k {
            continue;
        }
        let mut rng = stream(seed, 2, i as u64);
        let mut tries = 0;
        while graph.lists[i].len() < graph.k && tries < 8 * graph.k {
            let j = rng.random_range(0..n);
            if j != i {
                graph.push(i, j, sq_dist(points.row(i), points.row(j)));
            }
            tries += 1;
        }
    }
}

fn refine(points: &DataMatrix, graph: &mut Graph, seed: u64) {
    let n = points.rows();
    let max_cand = graph.k;
    for iter in 0..MAX_ITERS {
        // forward candidates; sampled "new" entries become "old" afterwards
        let mut new_c: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_c: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            let mut rng = stream(seed, 3 + iter as u64, i as u64);
            let mut fresh: Vec<usize> = (0..graph.lists[i].len())
                .filter(|&p| graph.lists[i][p].new)
                .collect();
            fresh.shuffle(&mut rng);
            fresh.truncate(max_cand);
            for &p in &fresh {
                let e = &mut graph.lists[i][p];
                e.new = false;
                new_c[i].push(e.idx);
            }
            for e in &graph.lists[i] {
                if !e.new && !new_c[i].contains(&e.idx) {
                    old_c[i].push(e.idx);
                }
            }
        }
        // reverse candidates
        let mut new_r: Vec<Vec<u32>> = vec![Vec::new(); n];
        let mut old_r: Vec<Vec<u32>> = vec![Vec::new(); n];
        for i in 0..n {
            for &j in &new_c[i] {
                new_r[j as usize].push(i as u32);
            }
            for &j in &old_c[i] {
                old_r[j as usize].push(i as u32);
            }
        }
        let merge = |fwd: &mut Vec<Vec<u32>>, rev: Vec<Vec<u32>>, tag: u64| {
            for (i, mut r) in rev.into_iter().enumerate() {
                let mut rng = stream(seed, tag, i as u64);
                r.shuffle(&mut rng);
                r.truncate(max_cand);
                for j in r {
                    if !fwd[i].contains(&j) {
                        fwd[i].push(j);
                    }
                }
            }
        };
        merge(&mut new_c, new_r, 1000 + iter as u64);
        merge(&mut old_c, old_r, 2000 + iter as u64);

        let bounds: Vec<f64> = (0..n).map(|i| graph.bound(i)).collect();
        let proposals: Vec<Vec<(u32, u32, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let mut out = Vec::new();
                let nc = &new_c[i];
                let oc = &old_c[i];
                for (a, &u) in nc.iter().enumerate() {
                    let (u, ur) = (u as usize, points.row(u as usize));
                    let pairs = nc[a + 1..].iter().chain(oc.iter());
                    for &v in pairs {
                        let v = v as usize;
                        if u == v {
                            continue;
                        }
                        let d = sq_dist(ur, points.row(v));
                        if d <= bounds[u] || d <= bounds[v] {
                            out.push((u as u32, v as u32, d));
                        }
                    }
                }
                out
            })
            .collect();
        let mut changes = 0usize;
        for (u, v, d) in proposals.into_iter().flatten() {
            changes += graph.push(u as usize, v as usize, d) as usize;
            changes += graph.push(v as usize, u as usize, d) as usize;
        }
        log::debug!("nn-descent iteration {iter}: {changes} updates");
        if (changes as f64) <= DELTA * (n * graph.k) as f64 {
            break;
        }
    }
}

/// Two-hop search: every point checks all neighbors of its `hops` nearest
/// forward and reverse neighbors. Later rounds only follow lists that
/// changed in the round before.
fn polish(points: &DataMatrix, graph: &mut Graph, hops: usize) {
    let n = points.rows();
    let mut changed = vec![true; n];
    for round in 0..POLISH_ROUNDS {
        let mut reverse: Vec<Vec<(f64, u32)>> = vec![Vec::new(); n];
        for (i, l) in graph.lists.iter().enumerate() {
            for e in l {
                reverse[e.idx as usize].push((e.d, i as u32));
            }
        }
        for r in &mut reverse {
            r.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            r.truncate(hops);
        }
        let g = &*graph;
        let proposals: Vec<Vec<(u32, f64)>> = (0..n)
            .into_par_iter()
            .map(|i| {
                let hops = g.lists[i]
                    .iter()
                    .take(hops)
                    .map(|e| e.idx)
                    .chain(reverse[i].iter().map(|r| r.1))
                    .filter(|&j| changed[i] || changed[j as usize]);
                let mut cand: Vec<u32> = Vec::new();
                for j in hops {
                    cand.extend(g.lists[j as usize].iter().map(|e| e.idx));
                    cand.push(j);
                }
                if cand.is_empty() {
                    return Vec::new();
                }
                cand.sort_unstable();
                cand.dedup();
                let mut seen: Vec<u32> = g.lists[i].iter().map(|e| e.idx).collect();
                seen.push(i as u32);
                seen.sort_unstable();
                let bound = g.bound(i);
                let xi = points.row(i);
                cand.into_iter()
                    .filter(|c| seen.binary_search(c).is_err())
                    .filter_map(|c| {
                        let d = sq_dist(xi, points.row(c as usize));
                        (d <= bound).then_some((c, d))
                    })
                    .collect()
            })
            .collect();
        let mut changes = 0usize;
        changed.fill(false);
        for (i, props) in proposals.into_iter().enumerate() {
            for (c, d) in props {
                if graph.push(i, c as usize, d) {
                    changed[i] = true;
                    changes += 1;
                }
            }
        }
        log::debug!("two-hop polish round {round}: {changes} updates");
        if changes == 0 {
            break;
        }
    }
}
