//! Triangle mesh ingestion, mass properties, and ray queries.
//!
//! All coordinates are millimeters. A `TriMesh` is immutable after
//! construction; the ray acceleration structure is built lazily on first
//! query and the mesh can be shared read-only across threads.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use nalgebra::{Point3, Unit, Vector3};

use crate::bvh::{Bvh, HitRecord, Ray};
use crate::error::{Error, Result};
use crate::stl;

/// Triangles with area at or below this are dropped at load (mm^2).
pub const DEGENERATE_AREA_EPS: f64 = 1e-9;

/// Default self-intersection guard for visibility rays (mm).
pub const DEFAULT_RAY_SKIP: f64 = 1e-3;

/// Axis-aligned bounding box in millimeters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    pub min: Point3<f64>,
    pub max: Point3<f64>,
}

impl Aabb {
    pub fn from_points<'a>(points: impl Iterator<Item = &'a Point3<f64>>) -> Option<Aabb> {
        let mut min = Point3::new(f64::INFINITY, f64::INFINITY, f64::INFINITY);
        let mut max = Point3::new(f64::NEG_INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
        let mut any = false;
        for p in points {
            any = true;
            for k in 0..3 {
                min[k] = min[k].min(p[k]);
                max[k] = max[k].max(p[k]);
            }
        }
        any.then_some(Aabb { min, max })
    }

    pub fn contains(&self, p: &Point3<f64>) -> bool {
        (0..3).all(|k| self.min[k] <= p[k] && p[k] <= self.max[k])
    }

    pub fn diagonal(&self) -> f64 {
        (self.max - self.min).norm()
    }

    pub fn extent(&self) -> Vector3<f64> {
        self.max - self.min
    }
}

/// Options for `TriMesh::load_stl`.
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Triangles with area at or below this are dropped and counted.
    pub degenerate_area_eps: f64,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            degenerate_area_eps: DEGENERATE_AREA_EPS,
        }
    }
}

/// Indexed triangle surface with cached bbox and watertightness flag.
#[derive(Debug, Clone, Default)]
pub struct TriMesh {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
    bbox: Option<Aabb>,
    watertight: bool,
    degenerate_dropped: usize,
    bvh: OnceLock<Bvh>,
}

impl TriMesh {
    /// Builds a mesh from indexed parts, dropping degenerate triangles.
    pub fn from_parts(vertices: Vec<Point3<f64>>, triangles: Vec<[u32; 3]>) -> Result<TriMesh> {
        Self::from_parts_with(vertices, triangles, &LoadOptions::default())
    }

    pub fn from_parts_with(
        vertices: Vec<Point3<f64>>,
        triangles: Vec<[u32; 3]>,
        opts: &LoadOptions,
    ) -> Result<TriMesh> {
        let nv = vertices.len() as u32;
        let mut kept = Vec::with_capacity(triangles.len());
        let mut dropped = 0usize;
        for tri in triangles {
            if tri.iter().any(|&i| i >= nv) {
                return Err(Error::Config {
                    field: "triangles".into(),
                    message: format!("triangle index out of range (vertex count {nv})"),
                });
            }
            let a = &vertices[tri[0] as usize];
            let b = &vertices[tri[1] as usize];
            let c = &vertices[tri[2] as usize];
            let area = 0.5 * (b - a).cross(&(c - a)).norm();
            if area <= opts.degenerate_area_eps {
                dropped += 1;
            } else {
                kept.push(tri);
            }
        }
        if kept.is_empty() {
            return Err(Error::EmptyMesh);
        }
        let bbox = Aabb::from_points(vertices.iter());
        let watertight = edge_closed(&kept);
        Ok(TriMesh {
            vertices,
            triangles: kept,
            bbox,
            watertight,
            degenerate_dropped: dropped,
            bvh: OnceLock::new(),
        })
    }

    /// Loads an STL file (ASCII or binary).
    pub fn load_stl(path: &Path, opts: &LoadOptions) -> Result<TriMesh> {
        let raw = stl::read_stl(path)?;
        Self::from_parts_with(raw.vertices, raw.triangles, opts)
    }

    pub fn bbox(&self) -> Aabb {
        self.bbox.expect("non-empty mesh always has a bbox")
    }

    pub fn is_watertight(&self) -> bool {
        self.watertight
    }

    /// Number of zero-area triangles dropped at construction.
    pub fn degenerate_dropped(&self) -> usize {
        self.degenerate_dropped
    }

    fn bvh(&self) -> &Bvh {
        self.bvh.get_or_init(|| Bvh::build(&self.vertices, &self.triangles))
    }

    /// All intersections with t >= 0, ascending by t, edge duplicates merged
    /// within 1e-6 mm.
    pub fn raycast_all_hits(&self, ray: &Ray) -> Vec<HitRecord> {
        self.bvh().all_hits(&self.vertices, &self.triangles, ray)
    }

    /// Nearest intersection with t >= t_min.
    pub fn raycast_first_hit(&self, ray: &Ray, t_min: f64) -> Option<HitRecord> {
        self.bvh().first_hit(&self.vertices, &self.triangles, ray, t_min)
    }

    /// True iff anything lies along `direction` from `origin` beyond the
    /// self-intersection guard `skip`.
    pub fn raycast_occluded(&self, origin: Point3<f64>, direction: Vector3<f64>, skip: f64) -> bool {
        let ray = Ray::new(origin, direction);
        self.bvh().any_hit_beyond(&self.vertices, &self.triangles, &ray, skip)
    }

    /// Unit normal of triangle `id` as oriented in the mesh.
    pub fn facet_normal(&self, id: usize) -> Unit<Vector3<f64>> {
        let tri = &self.triangles[id];
        let a = &self.vertices[tri[0] as usize];
        let b = &self.vertices[tri[1] as usize];
        let c = &self.vertices[tri[2] as usize];
        Unit::new_normalize((b - a).cross(&(c - a)))
    }

    /// Returns a copy translated by `v`.
    pub fn translated(&self, v: Vector3<f64>) -> TriMesh {
        let vertices = self.vertices.iter().map(|p| p + v).collect();
        TriMesh::from_parts(vertices, self.triangles.clone()).expect("translation preserves validity")
    }
}

/// Volume, center of mass, and mass at uniform density.
#[derive(Debug, Clone, Copy)]
pub struct MassProperties {
    /// mm^3
    pub volume: f64,
    /// mm
    pub com: Point3<f64>,
    /// kg (volume x density)
    pub mass: f64,
}

/// Divergence-theorem integration over the closed surface: each triangle
/// contributes the signed tetrahedron it spans with the origin. Requires a
/// watertight mesh.
pub fn mass_properties(mesh: &TriMesh, density: f64) -> Result<MassProperties> {
    if !mesh.is_watertight() {
        let boundary = count_unmatched_edges(&mesh.triangles);
        return Err(Error::NotWatertight {
            boundary_edges: boundary,
        });
    }
    let mut vol6 = 0.0;
    let mut weighted = Vector3::zeros();
    for tri in &mesh.triangles {
        let a = mesh.vertices[tri[0] as usize].coords;
        let b = mesh.vertices[tri[1] as usize].coords;
        let c = mesh.vertices[tri[2] as usize].coords;
        let det = a.dot(&b.cross(&c));
        vol6 += det;
        weighted += det * (a + b + c) / 4.0;
    }
    if vol6.abs() <= f64::EPSILON {
        return Err(Error::NotWatertight { boundary_edges: 0 });
    }
    let com = Point3::from(weighted / vol6);
    // Orientation-independent: flipping all triangles negates both vol6 and
    // the weighted sum, so com is stable and volume takes the magnitude.
    let volume = vol6.abs() / 6.0;
    Ok(MassProperties {
        volume,
        com,
        mass: volume * density,
    })
}

/// A closed oriented 2-manifold has every directed edge appearing exactly
/// once, matched by its reverse.
fn edge_closed(triangles: &[[u32; 3]]) -> bool {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            let e = (tri[k], tri[(k + 1) % 3]);
            *directed.entry(e).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .all(|(&(a, b), &n)| n == 1 && directed.get(&(b, a)) == Some(&1))
}

fn count_unmatched_edges(triangles: &[[u32; 3]]) -> usize {
    let mut directed: HashMap<(u32, u32), u32> = HashMap::new();
    for tri in triangles {
        for k in 0..3 {
            *directed.entry((tri[k], tri[(k + 1) % 3])).or_insert(0) += 1;
        }
    }
    directed
        .iter()
        .filter(|(&(a, b), &n)| n != 1 || directed.get(&(b, a)) != Some(&1))
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::meshgen;
    use approx::assert_relative_eq;

    #[test]
    fn ascii_cube_loads() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("cube.stl");
        std::fs::write(&path, meshgen::ascii_stl_cube()).unwrap();
        let mesh = TriMesh::load_stl(&path, &LoadOptions::default()).unwrap();
        assert_eq!(mesh.triangles.len(), 12);
        let bbox = mesh.bbox();
        assert_eq!(bbox.min, Point3::new(0.0, 0.0, 0.0));
        assert_eq!(bbox.max, Point3::new(1.0, 1.0, 1.0));
        assert!(mesh.is_watertight());
    }

    #[test]
    fn truncated_binary_errors() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("trunc.stl");
        let mut bytes = vec![0u8; 84 + 40 * 50];
        bytes[80..84].copy_from_slice(&100u32.to_le_bytes());
        std::fs::write(&path, &bytes).unwrap();
        match TriMesh::load_stl(&path, &LoadOptions::default()) {
            Err(Error::TruncatedBinary { declared, actual }) => {
                assert_eq!(declared, 100);
                assert_eq!(actual, 40);
            }
            other => panic!("expected TruncatedBinary, got {other:?}"),
        }
    }

    #[test]
    fn degenerate_triangle_dropped_and_counted() {
        let mut raw = meshgen::boxmesh([0.0; 3], [1.0, 1.0, 1.0]);
        let n = raw.vertices.len() as u32;
        raw.vertices.push(Point3::new(0.0, 0.0, 2.0));
        raw.vertices.push(Point3::new(1.0, 0.0, 2.0));
        raw.triangles.push([n, n + 1, n]); // zero area
        let mesh = TriMesh::from_parts(raw.vertices, raw.triangles).unwrap();
        assert_eq!(mesh.triangles.len(), 12);
        assert_eq!(mesh.degenerate_dropped(), 1);
    }

    #[test]
    fn empty_mesh_errors() {
        match TriMesh::from_parts(vec![Point3::origin()], vec![]) {
            Err(Error::EmptyMesh) => {}
            other => panic!("expected EmptyMesh, got {other:?}"),
        }
    }

    #[test]
    fn cube_mass_properties() {
        let mesh = meshgen::boxmesh([0.0; 3], [1.0, 1.0, 1.0]).into_trimesh();
        let mp = mass_properties(&mesh, 1.0).unwrap();
        assert_relative_eq!(mp.volume, 1.0, epsilon = 1e-12);
        assert_relative_eq!(mp.com, Point3::new(0.5, 0.5, 0.5), epsilon = 1e-12);
        assert_relative_eq!(mp.mass, 1.0, epsilon = 1e-12);
    }

    #[test]
    fn translated_cube_com_shifts() {
        let mesh = meshgen::boxmesh([10.0, 0.0, 0.0], [11.0, 1.0, 1.0]).into_trimesh();
        let mp = mass_properties(&mesh, 1.0).unwrap();
        assert_relative_eq!(mp.com, Point3::new(10.5, 0.5, 0.5), epsilon = 1e-9);
        assert_relative_eq!(mp.volume, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn mass_properties_translation_equivariant() {
        for (parts, v) in [
            (meshgen::l_prism(), Vector3::new(13.0, -40.0, 7.0)),
            (meshgen::hollow_box([0.0; 3], [12.0, 9.0, 6.0], 2.0), Vector3::new(-3.5, 0.25, 101.0)),
        ] {
            let mesh = parts.into_trimesh();
            let base = mass_properties(&mesh, 1.0).unwrap();
            let moved = mass_properties(&mesh.translated(v), 1.0).unwrap();
            assert_relative_eq!(moved.com, base.com + v, epsilon = 1e-9);
            assert_relative_eq!(moved.volume, base.volume, epsilon = 1e-9);
        }
    }

    #[test]
    fn l_solid_matches_composite_centroid() {
        // 2x1x1 box plus a 1x1x1 box stacked on its left half.
        let mesh = meshgen::l_prism().into_trimesh();
        let mp = mass_properties(&mesh, 1.0).unwrap();
        // Composite bodies: vol 2 at (1, .5, .5) and vol 1 at (.5, .5, 1.5).
        let expect = Point3::new((2.0 * 1.0 + 0.5) / 3.0, 0.5, (2.0 * 0.5 + 1.5) / 3.0);
        assert_relative_eq!(mp.volume, 3.0, epsilon = 1e-9);
        assert_relative_eq!(mp.com, expect, epsilon = 1e-9);
    }

    #[test]
    fn open_mesh_not_watertight() {
        let mut raw = meshgen::boxmesh([0.0; 3], [1.0, 1.0, 1.0]);
        raw.triangles.pop();
        let mesh = TriMesh::from_parts(raw.vertices, raw.triangles).unwrap();
        assert!(!mesh.is_watertight());
        assert!(matches!(
            mass_properties(&mesh, 1.0),
            Err(Error::NotWatertight { .. })
        ));
    }

    #[test]
    fn raycast_cube_two_faces() {
        let mesh = meshgen::boxmesh([0.0; 3], [1.0, 1.0, 1.0]).into_trimesh();
        let ray = Ray::new(Point3::new(0.5, 0.5, -1.0), Vector3::z());
        let hits = mesh.raycast_all_hits(&ray);
        assert_eq!(hits.len(), 2);
        assert_relative_eq!(hits[0].point.z, 0.0, epsilon = 1e-9);
        assert_relative_eq!(hits[1].point.z, 1.0, epsilon = 1e-9);
    }

    #[test]
    fn raycast_miss_outside_bbox() {
        let mesh = meshgen::boxmesh([0.0; 3], [1.0, 1.0, 1.0]).into_trimesh();
        let ray = Ray::new(Point3::new(5.0, 5.0, -1.0), Vector3::z());
        assert!(mesh.raycast_all_hits(&ray).is_empty());
    }

    #[test]
    fn hollow_box_four_hits_match_bruteforce() {
        let mesh = meshgen::hollow_box([0.0; 3], [10.0, 10.0, 10.0], 2.0).into_trimesh();
        let ray = Ray::new(Point3::new(5.0, 5.0, -1.0), Vector3::z());
        let hits = mesh.raycast_all_hits(&ray);
        assert_eq!(hits.len(), 4);
        let zs: Vec<f64> = hits.iter().map(|h| h.point.z).collect();
        for (z, expect) in zs.iter().zip([0.0, 2.0, 8.0, 10.0]) {
            assert_relative_eq!(*z, expect, epsilon = 1e-9);
        }
        let oracle = brute_force_hits(&mesh, &ray);
        assert_eq!(hits.len(), oracle.len());
        for (h, o) in hits.iter().zip(&oracle) {
            assert!((h.t - o.0).abs() <= 1e-6);
        }
    }

    #[test]
    fn occlusion_cases() {
        // Plate with an internal shelf: shelf points see the floor below.
        let mesh = meshgen::hollow_box([0.0; 3], [20.0, 20.0, 20.0], 3.0).into_trimesh();
        // Bottom face point looking down: free.
        assert!(!mesh.raycast_occluded(Point3::new(10.0, 10.0, 0.0), -Vector3::z(), 1e-3));
        // Cavity floor (z = 3) looking down: outer floor beneath.
        assert!(mesh.raycast_occluded(Point3::new(10.0, 10.0, 3.0), -Vector3::z(), 1e-3));
        // Self-triangle not counted thanks to the skip guard.
        assert!(!mesh.raycast_occluded(Point3::new(10.0, 10.0, 0.0), Vector3::new(0.0, 0.0, -1.0), 1e-3));
    }

    #[test]
    fn watertight_even_hit_parity() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        for mesh in [
            meshgen::boxmesh([0.0; 3], [30.0, 20.0, 10.0]).into_trimesh(),
            meshgen::hollow_box([0.0; 3], [30.0, 30.0, 30.0], 4.0).into_trimesh(),
            meshgen::l_prism().into_trimesh(),
            meshgen::uv_sphere(Point3::new(0.0, 0.0, 0.0), 15.0, 24, 12).into_trimesh(),
        ] {
            let bb = mesh.bbox();
            for _ in 0..200 {
                let x = rng.random_range(bb.min.x - 5.0..bb.max.x + 5.0);
                let y = rng.random_range(bb.min.y - 5.0..bb.max.y + 5.0);
                let ray = Ray::new(Point3::new(x, y, bb.min.z - 10.0), Vector3::z());
                let hits = mesh.raycast_all_hits(&ray);
                assert_eq!(hits.len() % 2, 0, "odd hit count at ({x}, {y})");
            }
        }
    }

    #[test]
    fn bvh_matches_bruteforce_on_sphere() {
        use rand::{Rng, SeedableRng};
        let mesh = meshgen::uv_sphere(Point3::new(2.0, -3.0, 4.0), 20.0, 32, 16).into_trimesh();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        for _ in 0..300 {
            let origin = Point3::new(
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
                rng.random_range(-40.0..40.0),
            );
            let dir = Vector3::new(
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
                rng.random_range(-1.0..1.0),
            );
            if dir.norm() < 1e-3 {
                continue;
            }
            let ray = Ray::new(origin, dir);
            let hits = mesh.raycast_all_hits(&ray);
            let oracle = brute_force_hits(&mesh, &ray);
            assert_eq!(hits.len(), oracle.len());
            for (h, o) in hits.iter().zip(&oracle) {
                assert!((h.t - o.0).abs() <= 1e-6);
            }
        }
    }

    /// Independent of the BVH: tests every triangle directly.
    pub fn brute_force_hits(mesh: &TriMesh, ray: &Ray) -> Vec<(f64, usize)> {
        let mut raw = Vec::new();
        for (i, tri) in mesh.triangles.iter().enumerate() {
            if let Some(t) = crate::bvh::intersect_triangle(
                &mesh.vertices[tri[0] as usize],
                &mesh.vertices[tri[1] as usize],
                &mesh.vertices[tri[2] as usize],
                ray,
            ) {
                if t >= 0.0 {
                    raw.push((t, i));
                }
            }
        }
        crate::bvh::merge_hits(raw)
    }
}
