//! Two-nearest-neighbour search: exact brute force and a kd-tree.
//!
//! Both searches rank candidates by `(squared distance, index)`, so equal
//! distances resolve to the smaller index and the two searches return
//! identical neighbours.

use alloc::vec::Vec;

use super::PointCloud;

/// First and second nearest neighbours of one point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TwoNeighbours {
    pub first: usize,
    pub first_sq: f64,
    pub second: usize,
    pub second_sq: f64,
}

#[derive(Clone, Copy)]
struct Best {
    slots: [(f64, usize); 2],
}

impl Best {
    fn new() -> Self {
        Self {
            slots: [(f64::INFINITY, usize::MAX); 2],
        }
    }

    #[inline]
    fn offer(&mut self, d: f64, idx: usize) {
        let cand = (d, idx);
        if lt(cand, self.slots[0]) {
            self.slots[1] = self.slots[0];
            self.slots[0] = cand;
        } else if lt(cand, self.slots[1]) {
            self.slots[1] = cand;
        }
    }

    fn worst(&self) -> f64 {
        self.slots[1].0
    }

    fn finish(self) -> TwoNeighbours {
        TwoNeighbours {
            first: self.slots[0].1,
            first_sq: self.slots[0].0,
            second: self.slots[1].1,
            second_sq: self.slots[1].0,
        }
    }
}

#[inline]
fn lt(a: (f64, usize), b: (f64, usize)) -> bool {
    a.0 < b.0 || (a.0 == b.0 && a.1 < b.1)
}

#[inline]
fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Exact O(N²) search.
pub fn brute_force(cloud: &PointCloud) -> Vec<TwoNeighbours> {
    (0..cloud.len())
        .map(|i| {
            let p = cloud.point(i);
            let mut best = Best::new();
            for j in 0..cloud.len() {
                if j != i {
                    best.offer(sq_dist(p, cloud.point(j)), j);
                }
            }
            best.finish()
        })
        .collect()
}

const LEAF_SIZE: usize = 12;

enum Node {
    Leaf {
        start: usize,
        end: usize,
    },
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

/// Static kd-tree over a point cloud, median splits on the widest axis.
pub struct KdTree<'a> {
    cloud: &'a PointCloud,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl<'a> KdTree<'a> {
    pub fn build(cloud: &'a PointCloud) -> Self {
        let mut tree = Self {
            cloud,
            order: (0..cloud.len()).collect(),
            nodes: Vec::new(),
        };
        if !cloud.is_empty() {
            tree.build_node(0, cloud.len());
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.cloud.dim();
        let mut axis = 0;
        let mut widest = -1.0;
        for k in 0..dim {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.cloud.point(i)[k];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > widest {
                widest = hi - lo;
                axis = k;
            }
        }
        let mid = start + (end - start) / 2;
        let cloud = self.cloud;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            cloud.point(a)[axis].total_cmp(&cloud.point(b)[axis])
        });
        let value = cloud.point(self.order[mid])[axis];
        self.nodes.push(Node::Split {
            axis,
            value,
            left: 0,
            right: 0,
        });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        if let Node::Split {
            left: l, right: r, ..
        } = &mut self.nodes[id]
        {
            *l = left;
            *r = right;
        }
        id
    }

    /// Two nearest neighbours of cloud point `i`, excluding itself.
    pub fn two_nearest(&self, i: usize) -> TwoNeighbours {
        let mut best = Best::new();
        if !self.nodes.is_empty() {
            self.search(0, self.cloud.point(i), i, &mut best);
        }
        best.finish()
    }

    fn search(&self, node: usize, q: &[f64], skip: usize, best: &mut Best) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &j in &self.order[start..end] {
                    if j != skip {
                        best.offer(sq_dist(q, self.cloud.point(j)), j);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[axis] - value;
                let (near, far) = if diff < 0.0 {
                    (left, right)
                } else {
                    (right, left)
                };
                self.search(near, q, skip, best);
                // points on the far side can tie the current second distance
                if diff * diff <= best.worst() {
                    self.search(far, q, skip, best);
                }
            }
        }
    }

    pub fn all_two_nearest(&self) -> Vec<TwoNeighbours> {
        (0..self.cloud.len()).map(|i| self.two_nearest(i)).collect()
    }
}
