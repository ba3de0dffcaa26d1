//! Balanced k-d trees for radius and k-nearest-neighbor queries.
//!
//! `PlanarPointIndex` is the 2D (x, y) index used by the continuity filter
//! and the grid partition; the 3D variant backs normal estimation. Queries
//! are read-only and safe to run concurrently.

use nalgebra::Point3;

use crate::error::{Error, Result};

#[derive(Debug, Clone)]
struct Node {
    index: u32,
    axis: u8,
    left: i32,
    right: i32,
}

/// Static balanced kd-tree over `D`-dimensional points.
#[derive(Debug, Clone)]
pub struct KdTree<const D: usize> {
    points: Vec<[f64; D]>,
    nodes: Vec<Node>,
    root: i32,
}

impl<const D: usize> KdTree<D> {
    pub fn build(points: Vec<[f64; D]>) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::EmptyPointSet);
        }
        let mut order: Vec<u32> = (0..points.len() as u32).collect();
        let mut tree = KdTree {
            points,
            nodes: Vec::new(),
            root: -1,
        };
        tree.root = tree.build_node(&mut order, 0);
        Ok(tree)
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    fn build_node(&mut self, order: &mut [u32], depth: usize) -> i32 {
        if order.is_empty() {
            return -1;
        }
        let axis = depth % D;
        let mid = order.len() / 2;
        order.select_nth_unstable_by(mid, |&a, &b| {
            self.points[a as usize][axis]
                .total_cmp(&self.points[b as usize][axis])
                .then(a.cmp(&b))
        });
        let index = order[mid];
        let node_id = self.nodes.len() as i32;
        self.nodes.push(Node {
            index,
            axis: axis as u8,
            left: -1,
            right: -1,
        });
        let (lo, rest) = order.split_at_mut(mid);
        let hi = &mut rest[1..];
        let left = self.build_node(lo, depth + 1);
        let right = self.build_node(hi, depth + 1);
        self.nodes[node_id as usize].left = left;
        self.nodes[node_id as usize].right = right;
        node_id
    }

    /// All point indices within `radius` (inclusive) of `center`, ascending.
    pub fn radius_query(&self, center: &[f64; D], radius: f64) -> Vec<usize> {
        assert!(radius > 0.0, "radius must be positive");
        let r2 = radius * radius;
        let mut out = Vec::new();
        self.radius_rec(self.root, center, radius, r2, &mut out);
        out.sort_unstable();
        out
    }

    fn radius_rec(&self, node: i32, center: &[f64; D], radius: f64, r2: f64, out: &mut Vec<usize>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.index as usize];
        if dist2(p, center) <= r2 {
            out.push(n.index as usize);
        }
        let diff = center[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.radius_rec(near, center, radius, r2, out);
        if diff.abs() <= radius {
            self.radius_rec(far, center, radius, r2, out);
        }
    }

    /// The k nearest indices by Euclidean distance; distance ties break
    /// toward the lower index. Returns all points when fewer than k exist.
    pub fn knn_query(&self, center: &[f64; D], k: usize) -> Vec<usize> {
        assert!(k >= 1, "k must be at least 1");
        let mut heap: Vec<(f64, u32)> = Vec::with_capacity(k + 1); // max-heap by (dist2, index)
        self.knn_rec(self.root, center, k, &mut heap);
        heap.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        heap.into_iter().map(|(_, i)| i as usize).collect()
    }

    fn knn_rec(&self, node: i32, center: &[f64; D], k: usize, heap: &mut Vec<(f64, u32)>) {
        if node < 0 {
            return;
        }
        let n = &self.nodes[node as usize];
        let p = &self.points[n.index as usize];
        let d2 = dist2(p, center);
        heap_push(heap, k, (d2, n.index));
        let diff = center[n.axis as usize] - p[n.axis as usize];
        let (near, far) = if diff < 0.0 { (n.left, n.right) } else { (n.right, n.left) };
        self.knn_rec(near, center, k, heap);
        let worst = heap_worst(heap, k);
        if heap.len() < k || (diff * diff, 0u32) <= worst {
            self.knn_rec(far, center, k, heap);
        }
    }
}

fn dist2<const D: usize>(a: &[f64; D], b: &[f64; D]) -> f64 {
    let mut s = 0.0;
    for i in 0..D {
        let d = a[i] - b[i];
        s += d * d;
    }
    s
}

/// Binary max-heap on (dist2, index) capped at k entries; the tie order on
/// index means an equal-distance lower index displaces a higher one.
fn heap_push(heap: &mut Vec<(f64, u32)>, k: usize, item: (f64, u32)) {
    let gt = |a: &(f64, u32), b: &(f64, u32)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)).is_gt();
    if heap.len() < k {
        heap.push(item);
        let mut i = heap.len() - 1;
        while i > 0 {
            let parent = (i - 1) / 2;
            if gt(&heap[i], &heap[parent]) {
                heap.swap(i, parent);
                i = parent;
            } else {
                break;
            }
        }
    } else if gt(&heap[0], &item) {
        heap[0] = item;
        let mut i = 0;
        loop {
            let (l, r) = (2 * i + 1, 2 * i + 2);
            let mut largest = i;
            if l < heap.len() && gt(&heap[l], &heap[largest]) {
                largest = l;
            }
            if r < heap.len() && gt(&heap[r], &heap[largest]) {
                largest = r;
            }
            if largest == i {
                break;
            }
            heap.swap(i, largest);
            i = largest;
        }
    }
}

fn heap_worst(heap: &[(f64, u32)], k: usize) -> (f64, u32) {
    if heap.len() < k {
        (f64::INFINITY, u32::MAX)
    } else {
        heap[0]
    }
}

/// 2D spatial index over the (x, y) projection of a 3D point set.
#[derive(Debug, Clone)]
pub struct PlanarPointIndex {
    tree: KdTree<2>,
}

impl PlanarPointIndex {
    pub fn build(points: &[Point3<f64>]) -> Result<Self> {
        let planar: Vec<[f64; 2]> = points.iter().map(|p| [p.x, p.y]).collect();
        Ok(PlanarPointIndex {
            tree: KdTree::build(planar)?,
        })
    }

    /// All indices with planar distance <= radius from (x, y).
    pub fn radius_query(&self, center: [f64; 2], radius: f64) -> Vec<usize> {
        self.tree.radius_query(&center, radius)
    }

    /// The k planar-nearest indices (all points if fewer than k exist).
    pub fn knn_query(&self, center: [f64; 2], k: usize) -> Vec<usize> {
        self.tree.knn_query(&center, k)
    }

    pub fn len(&self) -> usize {
        self.tree.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tree.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn linear_radius(points: &[[f64; 2]], center: [f64; 2], radius: f64) -> Vec<usize> {
        let r2 = radius * radius;
        (0..points.len()).filter(|&i| dist2(&points[i], &center) <= r2).collect()
    }

    fn linear_knn(points: &[[f64; 2]], center: [f64; 2], k: usize) -> Vec<usize> {
        let mut order: Vec<usize> = (0..points.len()).collect();
        order.sort_by(|&a, &b| {
            dist2(&points[a], &center)
                .total_cmp(&dist2(&points[b], &center))
                .then(a.cmp(&b))
        });
        order.truncate(k);
        order
    }

    #[test]
    fn square_corners_radius() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]];
        let tree = KdTree::build(pts).unwrap();
        let half_diag = (0.5f64 * 0.5 + 0.5 * 0.5).sqrt();
        let hits = tree.radius_query(&[0.5, 0.5], half_diag + 1e-9);
        assert_eq!(hits, vec![0, 1, 2, 3]);
    }

    #[test]
    fn collinear_knn() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0], [3.0, 0.0]];
        let tree = KdTree::build(pts).unwrap();
        assert_eq!(tree.knn_query(&[0.0, 0.0], 2), vec![0, 1]);
    }

    #[test]
    fn knn_clamps_to_point_count() {
        let pts = vec![[0.0, 0.0], [1.0, 0.0]];
        let tree = KdTree::build(pts).unwrap();
        assert_eq!(tree.knn_query(&[0.0, 0.0], 50).len(), 2);
    }

    #[test]
    fn empty_point_set_errors() {
        assert!(matches!(
            KdTree::<2>::build(Vec::new()),
            Err(crate::error::Error::EmptyPointSet)
        ));
    }

    #[test]
    fn thousand_random_points_match_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<[f64; 2]> = (0..1000)
            .map(|_| [rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0)])
            .collect();
        let tree = KdTree::build(pts.clone()).unwrap();
        for _ in 0..50 {
            let center = [rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0)];
            let radius = rng.random_range(1.0..40.0);
            assert_eq!(tree.radius_query(&center, radius), linear_radius(&pts, center, radius));
        }
    }

    #[test]
    fn random_point_sets_match_linear_scan() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let n = rng.random_range(1..120);
            let pts: Vec<[f64; 2]> = (0..n)
                .map(|_| [rng.random_range(-10.0..10.0), rng.random_range(-10.0..10.0)])
                .collect();
            let tree = KdTree::build(pts.clone()).unwrap();
            let center = [rng.random_range(-12.0..12.0), rng.random_range(-12.0..12.0)];
            let radius = rng.random_range(0.5..15.0);
            assert_eq!(tree.radius_query(&center, radius), linear_radius(&pts, center, radius));
            let k = rng.random_range(1..20);
            assert_eq!(tree.knn_query(&center, k), linear_knn(&pts, center, k));
        }
    }
}
