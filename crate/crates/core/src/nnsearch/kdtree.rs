use crate::matrix::{sq_dist_bounded, DataMatrix};

use super::topk::TopK;

const LEAF_SIZE: usize = 16;

#[derive(Debug)]
enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        dim: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Exact k-d tree over a borrowed matrix. Efficient for low dimensions only.
#[derive(Debug)]
pub(crate) struct KdTree<'a> {
    data: &'a DataMatrix,
    perm: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub(crate) fn build(data: &'a DataMatrix) -> Self {
        let mut tree = Self {
            data,
            perm: (0..data.rows()).collect(),
            nodes: Vec::new(),
        };
        tree.build_range(0, data.rows());
        tree
    }

    fn build_range(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let cols = self.data.cols();
        let mut lo = vec![f64::INFINITY; cols];
        let mut hi = vec![f64::NEG_INFINITY; cols];
        for &p in &self.perm[start..end] {
            for (c, &v) in self.data.row(p).iter().enumerate() {
                lo[c] = lo[c].min(v);
                hi[c] = hi[c].max(v);
            }
        }
        let dim = (0..cols)
            .max_by(|&a, &b| (hi[a] - lo[a]).total_cmp(&(hi[b] - lo[b])).then(b.cmp(&a)))
            .unwrap_or(0);
        if hi[dim] - lo[dim] <= 0.0 {
            // all points coincide
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let mid = start + (end - start) / 2;
        let data = self.data;
        self.perm[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            data.row(a)[dim]
                .total_cmp(&data.row(b)[dim])
                .then(a.cmp(&b))
        });
        let value = data.row(self.perm[mid])[dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build_range(start, mid);
        let right = self.build_range(mid, end);
        self.nodes[id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        id
    }

    pub(crate) fn query(&self, q: &[f64], k: usize, exclude: Option<usize>) -> Vec<(f64, usize)> {
        let mut top = TopK::new(k);
        self.search(0, q, exclude, &mut top);
        top.into_sorted()
    }

    fn search(&self, node: usize, q: &[f64], exclude: Option<usize>, top: &mut TopK) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &p in &self.perm[start..end] {
                    if Some(p) == exclude {
                        continue;
                    }
                    if let Some(d) = sq_dist_bounded(q, self.data.row(p), top.bound()) {
                        top.push(d, p);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = q[dim] - value;
                let (near, far) = if diff <= 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, exclude, top);
                // Points across the plane are at least |diff| away; ties must
                // still be visited so index tie-breaking stays exact.
                if diff * diff <= top.bound() {
                    self.search(far, q, exclude, top);
                }
            }
        }
    }
}
