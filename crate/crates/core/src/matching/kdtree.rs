//! Exact backtracking kd-tree for two-nearest-neighbor queries.
//!
//! No approximation anywhere: the far side of a split is pruned only when
//! the squared plane distance strictly exceeds the current second-best
//! distance, and candidates are ordered by (distance, index), so results
//! match a brute-force scan exactly, ties included.

use super::{sq_l2_bounded, BestTwo};

enum Node {
    Split {
        dim: usize,
        value: f32,
        left: usize,
        right: usize,
    },
    Leaf {
        start: usize,
        end: usize,
    },
}

pub struct KdTree {
    /// count x dims coordinates, original order.
    points: Vec<f32>,
    dims: usize,
    count: usize,
    /// Point ids permuted by the build; leaves reference ranges of this.
    order: Vec<u32>,
    nodes: Vec<Node>,
    root: usize,
}

impl KdTree {
    pub fn build(points: Vec<f32>, dims: usize, count: usize, leaf_size: usize) -> Self {
        assert_eq!(points.len(), dims * count);
        let mut tree = KdTree {
            points,
            dims,
            count,
            order: (0..count as u32).collect(),
            nodes: Vec::new(),
            root: 0,
        };
        if count > 0 {
            let leaf_size = leaf_size.max(1);
            tree.root = tree.build_node(0, count, leaf_size);
        } else {
            tree.nodes.push(Node::Leaf { start: 0, end: 0 });
        }
        tree
    }

    pub fn len(&self) -> usize {
        self.count
    }

    pub fn is_empty(&self) -> bool {
        self.count == 0
    }

    pub fn dims(&self) -> usize {
        self.dims
    }

    #[inline]
    fn coord(&self, point: u32, dim: usize) -> f32 {
        self.points[point as usize * self.dims + dim]
    }

    fn build_node(&mut self, start: usize, end: usize, leaf_size: usize) -> usize {
        let n = end - start;
        if n <= leaf_size {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }
        // Split on the dimension with the largest spread; a zero spread
        // everywhere means all points coincide and a leaf is fine.
        let mut best_dim = 0;
        let mut best_spread = 0.0f32;
        for d in 0..self.dims {
            let mut lo = f32::INFINITY;
            let mut hi = f32::NEG_INFINITY;
            for &p in &self.order[start..end] {
                let c = self.coord(p, d);
                lo = lo.min(c);
                hi = hi.max(c);
            }
            let spread = hi - lo;
            if spread > best_spread {
                best_spread = spread;
                best_dim = d;
            }
        }
        if best_spread == 0.0 {
            self.nodes.push(Node::Leaf { start, end });
            return self.nodes.len() - 1;
        }

        let mid = start + n / 2;
        let dim = best_dim;
        {
            let points = &self.points;
            let dims = self.dims;
            self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
                let ca = points[a as usize * dims + dim];
                let cb = points[b as usize * dims + dim];
                ca.partial_cmp(&cb)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.cmp(&b))
            });
        }
        let value = self.coord(self.order[mid], dim);
        let node_id = self.nodes.len();
        self.nodes.push(Node::Leaf { start: 0, end: 0 }); // placeholder
        let left = self.build_node(start, mid, leaf_size);
        let right = self.build_node(mid, end, leaf_size);
        self.nodes[node_id] = Node::Split {
            dim,
            value,
            left,
            right,
        };
        node_id
    }

    /// Accumulate the two nearest points to `query` into `best`
    /// (squared L2 distances).
    pub(crate) fn knn2(&self, query: &[f32], best: &mut BestTwo) {
        debug_assert_eq!(query.len(), self.dims);
        self.search(self.root, query, best);
    }

    fn search(&self, node: usize, query: &[f32], best: &mut BestTwo) {
        match &self.nodes[node] {
            Node::Leaf { start, end } => {
                for &p in &self.order[*start..*end] {
                    let t = &self.points[p as usize * self.dims..(p as usize + 1) * self.dims];
                    if let Some(d) = sq_l2_bounded(query, t, best.bound()) {
                        best.offer(d, p as usize);
                    }
                }
            }
            Node::Split {
                dim,
                value,
                left,
                right,
            } => {
                let diff = query[*dim] - value;
                let (near, far) = if diff < 0.0 {
                    (*left, *right)
                } else {
                    (*right, *left)
                };
                self.search(near, query, best);
                // Equal plane distance may still hide an equal-distance
                // smaller-index candidate, so only a strict excess prunes.
                if diff * diff <= best.bound() {
                    self.search(far, query, best);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn two_point_tree() {
        let tree = KdTree::build(vec![0.0, 0.0, 3.0, 4.0], 2, 2, 1);
        let mut best = BestTwo::new();
        tree.knn2(&[0.0, 0.1], &mut best);
        assert_eq!(best.first.1, 0);
        assert_eq!(best.second.1, 1);
    }

    #[test]
    fn all_identical_points_form_leaf() {
        let pts = vec![1.5f32; 3 * 20];
        let tree = KdTree::build(pts, 3, 20, 4);
        let mut best = BestTwo::new();
        tree.knn2(&[1.5, 1.5, 1.5], &mut best);
        // Smallest indices win on full ties.
        assert_eq!(best.first, (0.0, 0));
        assert_eq!(best.second, (0.0, 1));
    }
}
