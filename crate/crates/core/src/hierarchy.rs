//! The 1-nearest-neighbor graph hierarchy.
//!
//! Level construction: link every point to its nearest neighbor, take the
//! weakly connected components of that directed graph, and replace each
//! component by its centroid. Each component holds at least two points, so
//! every level is at most half the size of the one below and the tree has
//! logarithmic height.

use crate::error::{invalid_argument, Result};
use crate::matrix::DataMatrix;
use crate::nnsearch::{knn, NnBackend};

/// Smallest number of centroids a level may have.
pub const MIN_TOP_SIZE: usize = 3;

/// The directed 1-nearest-neighbor graph: one outgoing edge per point.
#[derive(Debug, Clone, PartialEq)]
pub struct NnGraph {
    pub nn_index: Vec<usize>,
    pub nn_distance: Vec<f64>,
}

impl NnGraph {
    pub fn len(&self) -> usize {
        self.nn_index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nn_index.is_empty()
    }
}

/// Grouping of `n` items into `groups` labelled `0..groups`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Partition {
    labels: Vec<usize>,
    groups: usize,
}

impl Partition {
    /// Validates that labels cover `0..groups` without gaps.
    pub fn new(labels: Vec<usize>) -> Result<Self> {
        let groups = labels.iter().max().map_or(0, |m| m + 1);
        let mut seen = vec![false; groups];
        for &l in &labels {
            seen[l] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            return Err(invalid_argument(format!(
                "partition labels skip group {missing}"
            )));
        }
        Ok(Self { labels, groups })
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn groups(&self) -> usize {
        self.groups
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.groups];
        for &l in &self.labels {
            s[l] += 1;
        }
        s
    }

    /// Member indices of every group, ascending.
    pub fn members(&self) -> Vec<Vec<usize>> {
        let mut m = vec![Vec::new(); self.groups];
        for (i, &l) in self.labels.iter().enumerate() {
            m[l].push(i);
        }
        m
    }

    /// Relabels through a coarser partition over this partition's groups.
    pub fn compose(&self, upper: &Partition) -> Result<Partition> {
        if upper.len() != self.groups {
            return Err(invalid_argument(format!(
                "cannot compose: upper partition covers {} items, lower has {} groups",
                upper.len(),
                self.groups
            )));
        }
        Ok(Partition {
            labels: self.labels.iter().map(|&l| upper.labels[l]).collect(),
            groups: upper.groups,
        })
    }
}

/// One centroid level: the centroids and the map from the level below.
#[derive(Debug, Clone, PartialEq)]
pub struct HierarchyLevel {
    pub centroids: DataMatrix,
    pub parent_of_child: Partition,
}

/// The full tree over `X`, bottom level first.
#[derive(Debug, Clone, PartialEq)]
pub struct Hierarchy {
    n_points: usize,
    base_partition: Partition,
    levels: Vec<HierarchyLevel>,
}

impl Hierarchy {
    pub fn n_points(&self) -> usize {
        self.n_points
    }

    pub fn base_partition(&self) -> &Partition {
        &self.base_partition
    }

    pub fn levels(&self) -> &[HierarchyLevel] {
        &self.levels
    }

    /// Centroid count of every level, bottom first.
    pub fn level_sizes(&self) -> Vec<usize> {
        self.levels.iter().map(|l| l.centroids.rows()).collect()
    }

    /// Index of the highest valid level for [`partition_at_level`].
    pub fn top_level(&self) -> usize {
        self.levels.len().saturating_sub(1)
    }
}

#[derive(Debug)]
struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
}

impl UnionFind {
    fn new(n: usize) -> Self {
        Self {
            parent: (0..n).collect(),
            size: vec![1; n],
        }
    }

    fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            let up = self.parent[x];
            self.parent[x] = self.parent[up];
            x = up;
        }
        x
    }

    fn union(&mut self, a: usize, b: usize) {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
    }
}

/// Each point's single nearest neighbor (ties to the lower index).
pub fn build_1nng(points: &DataMatrix, backend: NnBackend) -> Result<NnGraph> {
    if points.rows() < 2 {
        return Err(invalid_argument(format!(
            "a nearest-neighbor graph needs at least 2 points, got {}",
            points.rows()
        )));
    }
    let nl = knn(points, 1, backend)?;
    let n = points.rows();
    Ok(NnGraph {
        nn_index: (0..n).map(|i| nl.indices(i)[0]).collect(),
        nn_distance: (0..n).map(|i| nl.distances(i)[0]).collect(),
    })
}

/// Weakly connected components, labelled in order of first appearance.
pub fn connected_components(graph: &NnGraph) -> Partition {
    let n = graph.len();
    let mut uf = UnionFind::new(n);
    for (i, &j) in graph.nn_index.iter().enumerate() {
        uf.union(i, j);
    }
    let mut label_of_root = vec![usize::MAX; n];
    let mut labels = Vec::with_capacity(n);
    let mut next = 0;
    for i in 0..n {
        let r = uf.find(i);
        if label_of_root[r] == usize::MAX {
            label_of_root[r] = next;
            next += 1;
        }
        labels.push(label_of_root[r]);
    }
    Partition {
        labels,
        groups: next,
    }
}

/// Arithmetic mean of every group. Groups must have at least two members,
/// as 1-NN graph components always do.
pub fn component_centroids(points: &DataMatrix, partition: &Partition) -> Result<DataMatrix> {
    if partition.len() != points.rows() {
        return Err(invalid_argument(format!(
            "partition covers {} items but there are {} points",
            partition.len(),
            points.rows()
        )));
    }
    let sizes = partition.sizes();
    if let Some(g) = sizes.iter().position(|&s| s < 2) {
        return Err(invalid_argument(format!(
            "group {g} has {} member(s); components must have at least 2",
            sizes[g]
        )));
    }
    Ok(group_means(points, partition))
}

/// Group means without the component-size precondition.
pub(crate) fn group_means(points: &DataMatrix, partition: &Partition) -> DataMatrix {
    let cols = points.cols();
    let mut out = DataMatrix::zeros(partition.groups(), cols);
    for (i, &l) in partition.labels().iter().enumerate() {
        for (o, v) in out.row_mut(l).iter_mut().zip(points.row(i)) {
            *o += v;
        }
    }
    for (g, &s) in partition.sizes().iter().enumerate() {
        let s = s as f64;
        out.row_mut(g).iter_mut().for_each(|v| *v /= s);
    }
    out
}

/// Builds the hierarchy, stopping before any level with fewer than three
/// centroids. The base partition over `X` is always kept, even when it has
/// fewer than three groups; in that case there are no centroid levels.
pub fn build_hierarchy(points: &DataMatrix, backend: NnBackend) -> Result<Hierarchy> {
    let graph = build_1nng(points, backend)?;
    let base = connected_components(&graph);
    let mut levels: Vec<HierarchyLevel> = Vec::new();
    if base.groups() >= MIN_TOP_SIZE {
        let centroids = component_centroids(points, &base)?;
        levels.push(HierarchyLevel {
            centroids,
            parent_of_child: base.clone(),
        });
        loop {
            let current = &levels[levels.len() - 1].centroids;
            if current.rows() < MIN_TOP_SIZE + 1 {
                break;
            }
            let partition = connected_components(&build_1nng(current, backend)?);
            if partition.groups() < MIN_TOP_SIZE {
                break;
            }
            let centroids = component_centroids(current, &partition)?;
            levels.push(HierarchyLevel {
                centroids,
                parent_of_child: partition,
            });
        }
    }
    log::debug!(
        "hierarchy over {} points: level sizes {:?}",
        points.rows(),
        levels.iter().map(|l| l.centroids.rows()).collect::<Vec<_>>()
    );
    Ok(Hierarchy {
        n_points: points.rows(),
        base_partition: base,
        levels,
    })
}

/// Labels of the original points at `level` (0 = base partition).
pub fn partition_at_level(h: &Hierarchy, level: usize) -> Result<Partition> {
    if level > h.top_level() {
        return Err(invalid_argument(format!(
            "level {level} out of range 0..={}",
            h.top_level()
        )));
    }
    let mut p = h.base_partition.clone();
    for l in h.levels.iter().take(level + 1).skip(1) {
        p = p.compose(&l.parent_of_child)?;
    }
    Ok(p)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn exact() -> NnBackend {
        NnBackend::Exact
    }

    #[test]
    fn one_nng_on_a_line() {
        let p = DataMatrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        assert_eq!(build_1nng(&p, exact()).unwrap().nn_index, vec![1, 0, 1]);
    }

    #[test]
    fn two_points_form_a_mutual_pair() {
        let p = DataMatrix::from_rows(&[[0.0, 1.0], [4.0, 2.0]]).unwrap();
        assert_eq!(build_1nng(&p, exact()).unwrap().nn_index, vec![1, 0]);
    }

    #[test]
    fn unit_square_ties_go_to_lower_index() {
        // corners in order (0,0) (1,0) (1,1) (0,1); sides 1, diagonals sqrt 2
        let p = DataMatrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]]).unwrap();
        let g = build_1nng(&p, exact()).unwrap();
        assert_eq!(g.nn_index, vec![1, 0, 1, 0]);
        assert!(g.nn_distance.iter().all(|&d| d == 1.0));
    }

    #[test]
    fn single_point_is_rejected() {
        let p = DataMatrix::from_rows(&[[0.0]]).unwrap();
        assert!(build_1nng(&p, exact()).is_err());
        assert!(build_hierarchy(&p, exact()).is_err());
    }

    #[test]
    fn components_of_small_graphs() {
        let g = |idx: Vec<usize>| NnGraph {
            nn_distance: vec![1.0; idx.len()],
            nn_index: idx,
        };
        let p = connected_components(&g(vec![1, 0, 3, 2]));
        assert_eq!(p.labels(), &[0, 0, 1, 1]);
        assert_eq!(p.groups(), 2);
        let p = connected_components(&g(vec![1, 0, 1]));
        assert_eq!(p.labels(), &[0, 0, 0]);
        assert_eq!(connected_components(&g(vec![1, 0])).groups(), 1);
    }

    #[test]
    fn centroids_are_component_means() {
        let p = DataMatrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let part = Partition::new(vec![0, 0]).unwrap();
        assert_eq!(component_centroids(&p, &part).unwrap().row(0), &[1.0]);

        let p = DataMatrix::from_rows(&[[0.0, 0.0], [2.0, 0.0], [1.0, 3.0]]).unwrap();
        let part = Partition::new(vec![0, 0, 0]).unwrap();
        assert_eq!(component_centroids(&p, &part).unwrap().row(0), &[1.0, 1.0]);
    }

    #[test]
    fn singleton_groups_are_flagged() {
        let p = DataMatrix::from_rows(&[[0.0], [2.0]]).unwrap();
        let identity = Partition::new(vec![0, 1]).unwrap();
        assert!(matches!(
            component_centroids(&p, &identity),
            Err(crate::HnneError::InvalidArgument(_))
        ));
    }

    #[test]
    fn three_separated_pairs_stop_at_base() {
        let p = DataMatrix::from_rows(&[
            [0.0, 0.0],
            [0.1, 0.0],
            [10.0, 0.0],
            [10.0, 0.1],
            [0.0, 10.0],
            [0.1, 10.0],
        ])
        .unwrap();
        let h = build_hierarchy(&p, exact()).unwrap();
        assert_eq!(h.base_partition().groups(), 3);
        assert_eq!(h.level_sizes(), vec![3]);
    }

    #[test]
    fn two_points_have_no_centroid_levels() {
        let p = DataMatrix::from_rows(&[[0.0], [1.0]]).unwrap();
        let h = build_hierarchy(&p, exact()).unwrap();
        assert_eq!(h.base_partition().groups(), 1);
        assert!(h.levels().is_empty());
        assert_eq!(partition_at_level(&h, 0).unwrap().labels(), &[0, 0]);
        assert!(partition_at_level(&h, 1).is_err());
    }

    #[test]
    fn partition_labels_must_be_contiguous() {
        assert!(Partition::new(vec![0, 2, 2]).is_err());
    }
}
