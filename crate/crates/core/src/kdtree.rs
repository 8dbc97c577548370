//! Exact incremental KD-tree used by the `FscsKdTree` strategy.
//!
//! Points are inserted one at a time; the split axis cycles with depth. No
//! rebalancing: test inputs arrive in random order, which keeps the expected
//! depth logarithmic.

use crate::geometry::squared_euclidean;

const NONE: u32 = u32::MAX;

#[derive(Debug, Clone)]
struct Node {
    axis: u32,
    left: u32,
    right: u32,
}

#[derive(Debug, Clone)]
pub struct KdTree {
    dim: usize,
    coords: Vec<f64>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "kd-tree needs at least one dimension");
        KdTree {
            dim,
            coords: Vec::new(),
            nodes: Vec::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Stored points, flattened, in insertion order.
    pub fn flat_coords(&self) -> &[f64] {
        &self.coords
    }

    #[inline]
    fn point(&self, id: u32) -> &[f64] {
        let s = id as usize * self.dim;
        &self.coords[s..s + self.dim]
    }

    pub fn insert(&mut self, p: &[f64]) {
        assert_eq!(p.len(), self.dim, "point dimensionality");
        let id = self.nodes.len() as u32;
        self.coords.extend_from_slice(p);
        if id == 0 {
            self.nodes.push(Node {
                axis: 0,
                left: NONE,
                right: NONE,
            });
            return;
        }
        let mut cur = 0u32;
        loop {
            let node = &self.nodes[cur as usize];
            let axis = node.axis as usize;
            let go_left = p[axis] < self.point(cur)[axis];
            let next = if go_left { node.left } else { node.right };
            if next == NONE {
                let child_axis = ((axis + 1) % self.dim) as u32;
                self.nodes.push(Node {
                    axis: child_axis,
                    left: NONE,
                    right: NONE,
                });
                let parent = &mut self.nodes[cur as usize];
                if go_left {
                    parent.left = id;
                } else {
                    parent.right = id;
                }
                return;
            }
            cur = next;
        }
    }

    /// Exact nearest neighbor: `(insertion index, euclidean distance)`.
    /// Ties resolve to the lower insertion index.
    pub fn nearest(&self, q: &[f64]) -> Option<(usize, f64)> {
        self.nearest_squared(q).map(|(i, d2)| (i, d2.sqrt()))
    }

    /// Like [`nearest`](Self::nearest) but reports the squared distance.
    pub fn nearest_squared(&self, q: &[f64]) -> Option<(usize, f64)> {
        if self.is_empty() {
            return None;
        }
        let mut best = (NONE, f64::INFINITY);
        self.descend(0, q, &mut best);
        Some((best.0 as usize, best.1))
    }

    fn descend(&self, id: u32, q: &[f64], best: &mut (u32, f64)) {
        let p = self.point(id);
        let d2 = squared_euclidean(q, p);
        if d2 < best.1 || (d2 == best.1 && id < best.0) {
            *best = (id, d2);
        }
        let node = &self.nodes[id as usize];
        let axis = node.axis as usize;
        let diff = q[axis] - p[axis];
        let (near, far) = if diff < 0.0 {
            (node.left, node.right)
        } else {
            (node.right, node.left)
        };
        if near != NONE {
            self.descend(near, q, best);
        }
        // <= keeps equal-distance points on the far side reachable for the tie rule.
        if far != NONE && diff * diff <= best.1 {
            self.descend(far, q, best);
        }
    }
}
