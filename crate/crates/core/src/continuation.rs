//! Estimation of the continuation map `h` with `f = h . phi` from fiber
//! samples `(phi(x), f(x))`.
//!
//! `h(z)` is the inverse-distance-weighted (power 2) average of the target
//! values of the `k` nearest anchors; a query that coincides with an anchor
//! returns that anchor's value. The estimate is defined on all of `R^m`.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::map::{check_dim, distance, VectorMap};

pub const DEFAULT_K_NEIGHBORS: usize = 4;

#[derive(Debug, Clone)]
pub struct ContinuationFn {
    anchors_z: Vec<Vec<f64>>,
    anchors_y: Vec<Vec<f64>>,
    k_neighbors: usize,
    tree: KdTree,
}

/// Anchor pair whose inputs coincide while the target values differ.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FiberConflict {
    pub first: usize,
    pub second: usize,
    pub z_gap: f64,
    pub y_gap: f64,
}

pub fn estimate_continuation(
    phi_samples: &[(Vec<f64>, Vec<f64>)],
    f_values: &[Vec<f64>],
    k_neighbors: usize,
) -> Result<ContinuationFn> {
    if phi_samples.is_empty() || f_values.is_empty() {
        return Err(Error::EmptyAnchors);
    }
    check_dim(phi_samples.len(), f_values.len())?;
    let anchors_z = phi_samples.iter().map(|(_, z)| z.clone()).collect();
    ContinuationFn::new(anchors_z, f_values.to_vec(), k_neighbors)
}

impl ContinuationFn {
    pub fn new(anchors_z: Vec<Vec<f64>>, anchors_y: Vec<Vec<f64>>, k_neighbors: usize) -> Result<Self> {
        if anchors_z.is_empty() {
            return Err(Error::EmptyAnchors);
        }
        check_dim(anchors_z.len(), anchors_y.len())?;
        let dz = anchors_z[0].len();
        let dy = anchors_y[0].len();
        for (z, y) in anchors_z.iter().zip(&anchors_y) {
            check_dim(dz, z.len())?;
            check_dim(dy, y.len())?;
        }
        if k_neighbors == 0 || k_neighbors > anchors_z.len() {
            return Err(Error::InvalidArgument(format!(
                "k_neighbors must be in 1..={}, got {k_neighbors}",
                anchors_z.len()
            )));
        }
        let tree = KdTree::build(&anchors_z);
        Ok(Self {
            anchors_z,
            anchors_y,
            k_neighbors,
            tree,
        })
    }

    pub fn len(&self) -> usize {
        self.anchors_z.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors_z.is_empty()
    }

    pub fn k_neighbors(&self) -> usize {
        self.k_neighbors
    }

    pub fn anchors(&self) -> impl Iterator<Item = (&[f64], &[f64])> {
        self.anchors_z
            .iter()
            .zip(&self.anchors_y)
            .map(|(z, y)| (z.as_slice(), y.as_slice()))
    }

    /// First pair of anchors closer than `z_radius` whose values differ by at
    /// least `y_bound`.
    pub fn fiber_conflict(&self, z_radius: f64, y_bound: f64) -> Option<FiberConflict> {
        let mut order: Vec<usize> = (0..self.anchors_z.len()).collect();
        order.sort_by(|&a, &b| self.anchors_z[a][0].total_cmp(&self.anchors_z[b][0]).then(a.cmp(&b)));
        for (pos, &a) in order.iter().enumerate() {
            for &b in &order[pos + 1..] {
                if self.anchors_z[b][0] - self.anchors_z[a][0] >= z_radius {
                    break;
                }
                let z_gap = distance(&self.anchors_z[a], &self.anchors_z[b]);
                if z_gap < z_radius {
                    let y_gap = distance(&self.anchors_y[a], &self.anchors_y[b]);
                    if y_gap >= y_bound {
                        let (first, second) = (a.min(b), a.max(b));
                        return Some(FiberConflict {
                            first,
                            second,
                            z_gap,
                            y_gap,
                        });
                    }
                }
            }
        }
        None
    }

    pub fn evaluate(&self, z: &[f64]) -> Result<Vec<f64>> {
        check_dim(self.anchors_z[0].len(), z.len())?;
        let nearest = self.tree.nearest(&self.anchors_z, z, self.k_neighbors);
        let (d0, i0) = nearest[0];
        if d0 == 0.0 {
            return Ok(self.anchors_y[i0].clone());
        }
        let dy = self.anchors_y[0].len();
        let mut acc = vec![0.0; dy];
        let mut total = 0.0;
        for &(d2, i) in &nearest {
            let w = 1.0 / d2;
            total += w;
            for (a, y) in acc.iter_mut().zip(&self.anchors_y[i]) {
                *a += w * y;
            }
        }
        for a in &mut acc {
            *a /= total;
        }
        Ok(acc)
    }
}

impl VectorMap for ContinuationFn {
    fn dim_in(&self) -> usize {
        self.anchors_z[0].len()
    }
    fn dim_out(&self) -> usize {
        self.anchors_y[0].len()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.evaluate(x)
    }
}

/// Static k-d tree over anchor indices, split at the median of the widest axis.
#[derive(Debug, Clone)]
struct KdTree {
    nodes: Vec<KdNode>,
    root: usize,
}

#[derive(Debug, Clone)]
enum KdNode {
    Leaf(Vec<usize>),
    Split {
        axis: usize,
        value: f64,
        left: usize,
        right: usize,
    },
}

const LEAF_SIZE: usize = 16;

/// Heap entry ordered by (squared distance, index) so ties resolve to the lowest index.
#[derive(Debug, Clone, Copy, PartialEq)]
struct Candidate(f64, usize);

impl Eq for Candidate {}

impl PartialOrd for Candidate {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Candidate {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0).then(self.1.cmp(&other.1))
    }
}

impl KdTree {
    fn build(points: &[Vec<f64>]) -> Self {
        let mut nodes = Vec::new();
        let idx: Vec<usize> = (0..points.len()).collect();
        let root = Self::build_rec(points, idx, &mut nodes);
        Self { nodes, root }
    }

    fn build_rec(points: &[Vec<f64>], mut idx: Vec<usize>, nodes: &mut Vec<KdNode>) -> usize {
        if idx.len() <= LEAF_SIZE {
            nodes.push(KdNode::Leaf(idx));
            return nodes.len() - 1;
        }
        let dim = points[idx[0]].len();
        let axis = (0..dim)
            .max_by(|&a, &b| {
                let spread = |j: usize| {
                    let (lo, hi) = idx.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                        (lo.min(points[i][j]), hi.max(points[i][j]))
                    });
                    hi - lo
                };
                spread(a).total_cmp(&spread(b)).then(b.cmp(&a))
            })
            .unwrap_or(0);
        idx.sort_by(|&a, &b| points[a][axis].total_cmp(&points[b][axis]).then(a.cmp(&b)));
        let mid = idx.len() / 2;
        let value = points[idx[mid]][axis];
        let right_idx = idx.split_off(mid);
        let left = Self::build_rec(points, idx, nodes);
        let right = Self::build_rec(points, right_idx, nodes);
        nodes.push(KdNode::Split {
            axis,
            value,
            left,
            right,
        });
        nodes.len() - 1
    }

    /// The `k` nearest anchors as `(squared distance, index)`, closest first.
    fn nearest(&self, points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut heap: BinaryHeap<Candidate> = BinaryHeap::with_capacity(k + 1);
        self.search(self.root, points, q, k, &mut heap);
        let mut out: Vec<(f64, usize)> = heap.into_iter().map(|c| (c.0, c.1)).collect();
        out.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        out
    }

    fn search(&self, node: usize, points: &[Vec<f64>], q: &[f64], k: usize, heap: &mut BinaryHeap<Candidate>) {
        match &self.nodes[node] {
            KdNode::Leaf(idx) => {
                for &i in idx {
                    let d2: f64 = points[i].iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum();
                    let cand = Candidate(d2, i);
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("nonempty heap") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            KdNode::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = q[*axis] - value;
                let (near, far) = if diff < 0.0 { (*left, *right) } else { (*right, *left) };
                self.search(near, points, q, k, heap);
                let worst = heap.peek().map_or(f64::INFINITY, |c| c.0);
                if heap.len() < k || diff * diff <= worst {
                    self.search(far, points, q, k, heap);
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SplitMix64;

    fn brute_nearest(points: &[Vec<f64>], q: &[f64], k: usize) -> Vec<(f64, usize)> {
        let mut all: Vec<(f64, usize)> = points
            .iter()
            .enumerate()
            .map(|(i, p)| (p.iter().zip(q).map(|(a, b)| (a - b) * (a - b)).sum(), i))
            .collect();
        all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        all.truncate(k);
        all
    }

    #[test]
    fn kd_tree_matches_brute_force() {
        let mut rng = SplitMix64::new(3);
        for dim in 1..=3 {
            let points: Vec<Vec<f64>> = (0..500)
                .map(|_| (0..dim).map(|_| rng.uniform(-1.0, 1.0)).collect())
                .collect();
            let tree = KdTree::build(&points);
            for _ in 0..200 {
                let q: Vec<f64> = (0..dim).map(|_| rng.uniform(-1.5, 1.5)).collect();
                assert_eq!(tree.nearest(&points, &q, 4), brute_nearest(&points, &q, 4));
            }
        }
    }

    #[test]
    fn identity_phi_reproduces_anchor_values() {
        let xs: Vec<Vec<f64>> = (0..11).map(|k| vec![k as f64 / 10.0]).collect();
        let samples: Vec<_> = xs.iter().map(|x| (x.clone(), x.clone())).collect();
        let fvals: Vec<Vec<f64>> = xs.iter().map(|x| vec![(3.0 * x[0]).cos()]).collect();
        let h = estimate_continuation(&samples, &fvals, 4).unwrap();
        for (x, y) in xs.iter().zip(&fvals) {
            assert_eq!(&h.evaluate(x).unwrap(), y);
        }
    }

    #[test]
    fn square_fiber_example() {
        // phi(x) = x^2, f(x) = x^4 at x in {0, 0.5, 1}; h(z) = z^2.
        let xs = [0.0, 0.5, 1.0];
        let samples: Vec<_> = xs.iter().map(|&x| (vec![x], vec![x * x])).collect();
        let fvals: Vec<_> = xs.iter().map(|&x| vec![x * x * x * x]).collect();
        let h = estimate_continuation(&samples, &fvals, 2).unwrap();
        assert_eq!(h.evaluate(&[0.25]).unwrap(), vec![0.0625]);
    }

    #[test]
    fn equidistant_anchors_average() {
        let z = vec![vec![1.0, 0.0], vec![-1.0, 0.0], vec![0.0, 1.0], vec![0.0, -1.0]];
        let y = vec![vec![1.0], vec![2.0], vec![3.0], vec![6.0]];
        let h = ContinuationFn::new(z, y, 4).unwrap();
        assert!((h.evaluate(&[0.0, 0.0]).unwrap()[0] - 3.0).abs() < 1e-15);
    }

    #[test]
    fn errors() {
        assert!(matches!(estimate_continuation(&[], &[], 1), Err(Error::EmptyAnchors)));
        let s = vec![(vec![0.0], vec![0.0])];
        assert!(matches!(
            estimate_continuation(&s, &[vec![1.0]], 2),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn detects_fiber_conflicts() {
        let z = vec![vec![0.0], vec![0.5], vec![0.5 + 1e-12]];
        let consistent = ContinuationFn::new(z.clone(), vec![vec![0.0], vec![1.0], vec![1.0]], 1).unwrap();
        assert_eq!(consistent.fiber_conflict(1e-9, 1e-6), None);
        let broken = ContinuationFn::new(z, vec![vec![0.0], vec![1.0], vec![2.0]], 1).unwrap();
        let c = broken.fiber_conflict(1e-9, 1e-6).unwrap();
        assert_eq!((c.first, c.second), (1, 2));
        assert_eq!(c.y_gap, 1.0);
    }
}
