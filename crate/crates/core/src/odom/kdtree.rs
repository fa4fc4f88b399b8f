//! Static 3D kd-tree over a point array.

use crate::geom::Vec3;

const LEAF_SIZE: usize = 8;

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { dim: usize, value: f64, left: usize, right: usize },
}

/// Balanced kd-tree. Query results are `(point index, squared distance)`.
#[derive(Debug, Clone)]
pub struct KdTree {
    points: Vec<Vec3>,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl Default for KdTree {
    fn default() -> Self {
        Self::new(Vec::new())
    }
}

impl KdTree {
    pub fn new(points: Vec<Vec3>) -> Self {
        let mut tree = KdTree {
            order: (0..points.len()).collect(),
            points,
            nodes: Vec::new(),
        };
        if !tree.points.is_empty() {
            tree.build(0, tree.points.len());
        }
        tree
    }

    pub fn points(&self) -> &[Vec3] {
        &self.points
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let dim = self.widest_dim(start, end);
        let mid = start + (end - start) / 2;
        let points = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            points[a][dim].total_cmp(&points[b][dim]).then(a.cmp(&b))
        });
        let value = self.points[self.order[mid]][dim];
        self.nodes.push(Node::Leaf { start: 0, end: 0 });
        let left = self.build(start, mid);
        let right = self.build(mid, end);
        self.nodes[id] = Node::Split { dim, value, left, right };
        id
    }

    fn widest_dim(&self, start: usize, end: usize) -> usize {
        let mut lo = Vec3::repeat(f64::INFINITY);
        let mut hi = Vec3::repeat(f64::NEG_INFINITY);
        for &k in &self.order[start..end] {
            lo = lo.inf(&self.points[k]);
            hi = hi.sup(&self.points[k]);
        }
        (hi - lo).imax()
    }

    /// All points within `radius` (inclusive), sorted by index.
    pub fn within_radius(&self, query: &Vec3, radius: f64) -> Vec<(usize, f64)> {
        let mut out = Vec::new();
        if !self.nodes.is_empty() {
            self.radius_rec(0, query, radius * radius, &mut out);
        }
        out.sort_unstable_by_key(|(k, _)| *k);
        out
    }

    fn radius_rec(&self, node: usize, q: &Vec3, r2: f64, out: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &k in &self.order[start..end] {
                    let d2 = (self.points[k] - q).norm_squared();
                    if d2 <= r2 {
                        out.push((k, d2));
                    }
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.radius_rec(near, q, r2, out);
                if diff * diff <= r2 {
                    self.radius_rec(far, q, r2, out);
                }
            }
        }
    }

    /// The `k` nearest points, closest first; ties broken by index.
    pub fn nearest(&self, query: &Vec3, k: usize) -> Vec<(usize, f64)> {
        self.nearest_within(query, k, f64::INFINITY)
    }

    /// Up to `k` nearest points no farther than `radius`, closest first.
    pub fn nearest_within(&self, query: &Vec3, k: usize, radius: f64) -> Vec<(usize, f64)> {
        let mut best: Vec<(usize, f64)> = Vec::with_capacity(k + 1);
        if k == 0 || self.nodes.is_empty() {
            return best;
        }
        let r2 = if radius.is_finite() { radius * radius } else { f64::INFINITY };
        self.knn_rec(0, query, k, r2, &mut best);
        best
    }

    fn knn_rec(&self, node: usize, q: &Vec3, k: usize, r2: f64, best: &mut Vec<(usize, f64)>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &idx in &self.order[start..end] {
                    let d2 = (self.points[idx] - q).norm_squared();
                    if d2 > r2 {
                        continue;
                    }
                    if best.len() == k {
                        let (wi, wd) = best[k - 1];
                        if d2 > wd || (d2 == wd && idx > wi) {
                            continue;
                        }
                    }
                    let pos = best.partition_point(|&(bi, bd)| bd < d2 || (bd == d2 && bi < idx));
                    best.insert(pos, (idx, d2));
                    best.truncate(k);
                }
            }
            Node::Split { dim, value, left, right } => {
                let diff = q[dim] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.knn_rec(near, q, k, r2, best);
                let bound = if best.len() == k { best[k - 1].1.min(r2) } else { r2 };
                if diff * diff <= bound {
                    self.knn_rec(far, q, k, r2, best);
                }
            }
        }
    }
}
