//! Bounding-volume hierarchy over mesh triangles and ray queries.
//!
//! Hits on shared edges or vertices are reported by every incident triangle
//! and merged afterwards, so a ray crossing an edge still counts one
//! surface crossing.

use nalgebra::{Point3, Unit, Vector3};

/// Distance below which two hits along one ray collapse into one (mm).
pub const HIT_MERGE_EPS: f64 = 1e-6;

/// A ray with unit direction. Coordinates in millimeters.
#[derive(Debug, Clone)]
pub struct Ray {
    pub origin: Point3<f64>,
    pub direction: Unit<Vector3<f64>>,
}

impl Ray {
    pub fn new(origin: Point3<f64>, direction: Vector3<f64>) -> Self {
        Ray {
            origin,
            direction: Unit::new_normalize(direction),
        }
    }

    pub fn at(&self, t: f64) -> Point3<f64> {
        self.origin + self.direction.as_ref() * t
    }
}

/// One ray-mesh intersection.
#[derive(Debug, Clone)]
pub struct HitRecord {
    /// Signed distance along the ray (mm), always >= 0 for reported hits.
    pub t: f64,
    pub point: Point3<f64>,
    pub triangle_id: usize,
    /// Geometric normal of the hit triangle, as oriented in the mesh.
    pub facet_normal: Unit<Vector3<f64>>,
}

/// Möller–Trumbore with inclusive edge handling: barycentric boundaries are
/// accepted so a hit exactly on a shared edge is seen by both triangles
/// (deduplicated later by `merge_hits`). Returns t along the ray.
pub fn intersect_triangle(
    v0: &Point3<f64>,
    v1: &Point3<f64>,
    v2: &Point3<f64>,
    ray: &Ray,
) -> Option<f64> {
    let edge1 = v1 - v0;
    let edge2 = v2 - v0;
    let pvec = ray.direction.cross(&edge2);
    let det = edge1.dot(&pvec);
    // Parallel or degenerate; threshold scales with edge lengths.
    if det.abs() <= 1e-12 * edge1.norm() * edge2.norm() {
        return None;
    }
    let inv_det = 1.0 / det;
    let tvec = ray.origin - v0;
    let u = tvec.dot(&pvec) * inv_det;
    if !(-1e-12..=1.0 + 1e-12).contains(&u) {
        return None;
    }
    let qvec = tvec.cross(&edge1);
    let v = ray.direction.dot(&qvec) * inv_det;
    if v < -1e-12 || u + v > 1.0 + 1e-12 {
        return None;
    }
    Some(edge2.dot(&qvec) * inv_det)
}

/// Sorts raw (t, triangle_id) hits and merges duplicates within
/// `HIT_MERGE_EPS` along the ray, keeping the lowest triangle id.
pub fn merge_hits(mut hits: Vec<(f64, usize)>) -> Vec<(f64, usize)> {
    hits.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    let mut merged: Vec<(f64, usize)> = Vec::with_capacity(hits.len());
    for h in hits {
        match merged.last() {
            Some(last) if (h.0 - last.0).abs() <= HIT_MERGE_EPS => {}
            _ => merged.push(h),
        }
    }
    merged
}

#[derive(Debug, Clone, Copy)]
struct NodeBounds {
    min: Point3<f64>,
    max: Point3<f64>,
}

impl NodeBounds {
    fn empty() -> Self {
        NodeBounds {
            min: Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY),
            max: Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY),
        }
    }

    fn grow(&mut self, p: &Point3<f64>) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(p[k]);
            self.max[k] = self.max[k].max(p[k]);
        }
    }

    fn merge(&mut self, other: &NodeBounds) {
        for k in 0..3 {
            self.min[k] = self.min[k].min(other.min[k]);
            self.max[k] = self.max[k].max(other.max[k]);
        }
    }

    /// Slab test over [t_min, t_max]; returns the entry distance if the ray
    /// overlaps the box.
    fn entry(&self, ray: &Ray, t_min: f64, t_max: f64) -> Option<f64> {
        let mut lo = t_min;
        let mut hi = t_max;
        for k in 0..3 {
            let d = ray.direction[k];
            let o = ray.origin[k];
            if d.abs() < 1e-300 {
                if o < self.min[k] || o > self.max[k] {
                    return None;
                }
                continue;
            }
            let inv = 1.0 / d;
            let (mut t0, mut t1) = ((self.min[k] - o) * inv, (self.max[k] - o) * inv);
            if t0 > t1 {
                std::mem::swap(&mut t0, &mut t1);
            }
            lo = lo.max(t0);
            hi = hi.min(t1);
            if lo > hi {
                return None;
            }
        }
        Some(lo)
    }
}

#[derive(Debug, Clone)]
struct BvhNode {
    bounds: NodeBounds,
    /// Leaf: range into `order`. Internal: children at `left`, `left + 1` is
    /// not assumed; both child indices stored explicitly.
    left: u32,
    right: u32,
    start: u32,
    len: u32,
}

const LEAF_SIZE: usize = 4;

/// Static median-split BVH. Construction is deterministic.
#[derive(Debug, Clone)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    order: Vec<u32>,
}

impl Bvh {
    pub fn build(vertices: &[Point3<f64>], triangles: &[[u32; 3]]) -> Self {
        let mut centroids = Vec::with_capacity(triangles.len());
        let mut tri_bounds = Vec::with_capacity(triangles.len());
        for tri in triangles {
            let mut b = NodeBounds::empty();
            let mut c = Vector3::zeros();
            for &vi in tri {
                let p = &vertices[vi as usize];
                b.grow(p);
                c += p.coords;
            }
            tri_bounds.push(b);
            centroids.push(Point3::from(c / 3.0));
        }
        let mut order: Vec<u32> = (0..triangles.len() as u32).collect();
        let mut nodes = Vec::new();
        if !order.is_empty() {
            build_node(&mut nodes, &mut order, 0, triangles.len(), &centroids, &tri_bounds);
        }
        Bvh { nodes, order }
    }

    /// All intersections with t >= 0, ascending, edge duplicates merged.
    pub fn all_hits(
        &self,
        vertices: &[Point3<f64>],
        triangles: &[[u32; 3]],
        ray: &Ray,
    ) -> Vec<HitRecord> {
        let mut raw = Vec::new();
        if self.nodes.is_empty() {
            return Vec::new();
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.entry(ray, 0.0, f64::INFINITY).is_none() {
                continue;
            }
            if node.len > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.len) as usize] {
                    let tri = &triangles[ti as usize];
                    if let Some(t) = intersect_triangle(
                        &vertices[tri[0] as usize],
                        &vertices[tri[1] as usize],
                        &vertices[tri[2] as usize],
                        ray,
                    ) {
                        if t >= 0.0 {
                            raw.push((t, ti as usize));
                        }
                    }
                }
            } else {
                stack.push(node.left as usize);
                stack.push(node.right as usize);
            }
        }
        merge_hits(raw)
            .into_iter()
            .map(|(t, id)| hit_record(vertices, triangles, ray, t, id))
            .collect()
    }

    /// Nearest intersection with t >= t_min, if any.
    pub fn first_hit(
        &self,
        vertices: &[Point3<f64>],
        triangles: &[[u32; 3]],
        ray: &Ray,
        t_min: f64,
    ) -> Option<HitRecord> {
        if self.nodes.is_empty() {
            return None;
        }
        let mut best: Option<(f64, usize)> = None;
        let mut stack: Vec<(usize, f64)> = Vec::new();
        if let Some(e) = self.nodes[0].bounds.entry(ray, t_min, f64::INFINITY) {
            stack.push((0, e));
        }
        while let Some((ni, entry)) = stack.pop() {
            if let Some((bt, _)) = best {
                if entry > bt {
                    continue;
                }
            }
            let node = &self.nodes[ni];
            if node.len > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.len) as usize] {
                    let tri = &triangles[ti as usize];
                    if let Some(t) = intersect_triangle(
                        &vertices[tri[0] as usize],
                        &vertices[tri[1] as usize],
                        &vertices[tri[2] as usize],
                        ray,
                    ) {
                        if t >= t_min {
                            let better = match best {
                                Some((bt, bi)) => t < bt || (t == bt && (ti as usize) < bi),
                                None => true,
                            };
                            if better {
                                best = Some((t, ti as usize));
                            }
                        }
                    }
                }
            } else {
                let limit = best.map_or(f64::INFINITY, |(bt, _)| bt);
                let kids = [node.left as usize, node.right as usize];
                let mut live: Vec<(usize, f64)> = kids
                    .iter()
                    .filter_map(|&ci| {
                        self.nodes[ci].bounds.entry(ray, t_min, limit).map(|e| (ci, e))
                    })
                    .collect();
                // Push farther child first so the nearer one pops first.
                live.sort_by(|a, b| b.1.total_cmp(&a.1));
                stack.extend(live);
            }
        }
        best.map(|(t, id)| hit_record(vertices, triangles, ray, t, id))
    }

    /// True iff any intersection exists with t > skip.
    pub fn any_hit_beyond(
        &self,
        vertices: &[Point3<f64>],
        triangles: &[[u32; 3]],
        ray: &Ray,
        skip: f64,
    ) -> bool {
        if self.nodes.is_empty() {
            return false;
        }
        let mut stack = vec![0usize];
        while let Some(ni) = stack.pop() {
            let node = &self.nodes[ni];
            if node.bounds.entry(ray, skip, f64::INFINITY).is_none() {
                continue;
            }
            if node.len > 0 {
                for &ti in &self.order[node.start as usize..(node.start + node.len) as usize] {
                    let tri = &triangles[ti as usize];
                    if let Some(t) = intersect_triangle(
                        &vertices[tri[0] as usize],
                        &vertices[tri[1] as usize],
                        &vertices[tri[2] as usize],
                        ray,
                    ) {
                        if t > skip {
                            return true;
                        }
                    }
                }
            } else {
                stack.push(node.left as usize);
                stack.push(node.right as usize);
            }
        }
        false
    }
}

fn hit_record(
    vertices: &[Point3<f64>],
    triangles: &[[u32; 3]],
    ray: &Ray,
    t: f64,
    id: usize,
) -> HitRecord {
    let tri = &triangles[id];
    let a = &vertices[tri[0] as usize];
    let b = &vertices[tri[1] as usize];
    let c = &vertices[tri[2] as usize];
    let n = (b - a).cross(&(c - a));
    HitRecord {
        t,
        point: ray.at(t),
        triangle_id: id,
        facet_normal: Unit::new_normalize(n),
    }
}

fn build_node(
    nodes: &mut Vec<BvhNode>,
    order: &mut [u32],
    start: usize,
    len: usize,
    centroids: &[Point3<f64>],
    tri_bounds: &[NodeBounds],
) -> u32 {
    let mut bounds = NodeBounds::empty();
    let mut cbounds = NodeBounds::empty();
    for &ti in &order[start..start + len] {
        bounds.merge(&tri_bounds[ti as usize]);
        cbounds.grow(&centroids[ti as usize]);
    }
    let index = nodes.len() as u32;
    nodes.push(BvhNode {
        bounds,
        left: 0,
        right: 0,
        start: start as u32,
        len: 0,
    });
    let extent = [
        cbounds.max.x - cbounds.min.x,
        cbounds.max.y - cbounds.min.y,
        cbounds.max.z - cbounds.min.z,
    ];
    let axis = (0..3).max_by(|&a, &b| extent[a].total_cmp(&extent[b])).unwrap();
    if len <= LEAF_SIZE || extent[axis] <= 0.0 {
        nodes[index as usize].len = len as u32;
        return index;
    }
    let mid = len / 2;
    order[start..start + len].select_nth_unstable_by(mid, |&a, &b| {
        centroids[a as usize][axis]
            .total_cmp(&centroids[b as usize][axis])
            .then(a.cmp(&b))
    });
    let left = build_node(nodes, order, start, mid, centroids, tri_bounds);
    let right = build_node(nodes, order, start + mid, len - mid, centroids, tri_bounds);
    nodes[index as usize].left = left;
    nodes[index as usize].right = right;
    index
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unit_triangle() -> [Point3<f64>; 3] {
        [
            Point3::new(0.0, 0.0, 0.0),
            Point3::new(1.0, 0.0, 0.0),
            Point3::new(0.0, 1.0, 0.0),
        ]
    }

    #[test]
    fn triangle_hit_and_miss() {
        let [a, b, c] = unit_triangle();
        let hit = Ray::new(Point3::new(0.25, 0.25, -1.0), Vector3::z());
        assert!((intersect_triangle(&a, &b, &c, &hit).unwrap() - 1.0).abs() < 1e-12);
        let miss = Ray::new(Point3::new(0.9, 0.9, -1.0), Vector3::z());
        assert!(intersect_triangle(&a, &b, &c, &miss).is_none());
    }

    #[test]
    fn edge_hit_is_inclusive() {
        let [a, b, c] = unit_triangle();
        // On the hypotenuse u + v = 1.
        let ray = Ray::new(Point3::new(0.5, 0.5, -1.0), Vector3::z());
        assert!(intersect_triangle(&a, &b, &c, &ray).is_some());
        // Grazing parallel ray rejected.
        let parallel = Ray::new(Point3::new(0.0, 0.0, -1.0), Vector3::x());
        assert!(intersect_triangle(&a, &b, &c, &parallel).is_none());
    }

    #[test]
    fn merge_collapses_shared_edge() {
        let merged = merge_hits(vec![(1.0, 7), (1.0, 3), (1.0 + 1e-9, 5), (2.0, 1)]);
        assert_eq!(merged.len(), 2);
        assert_eq!(merged[0].1, 3); // lowest triangle id wins an exact tie
    }
}
