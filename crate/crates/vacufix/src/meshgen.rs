//! Synthetic watertight meshes for tests, demos, and scenario files.
//!
//! Everything here produces indexed parts in millimeters with consistent
//! outward orientation, so the results pass the watertightness check and
//! have positive volume.

use nalgebra::Point3;
use std::path::Path;

use crate::error::Result;
use crate::mesh::TriMesh;
use crate::stl;

/// Indexed triangle parts prior to validation.
#[derive(Debug, Clone, Default)]
pub struct Parts {
    pub vertices: Vec<Point3<f64>>,
    pub triangles: Vec<[u32; 3]>,
}

impl Parts {
    pub fn into_trimesh(self) -> TriMesh {
        TriMesh::from_parts(self.vertices, self.triangles).expect("generated mesh is valid")
    }

    pub fn append(&mut self, other: Parts) {
        let base = self.vertices.len() as u32;
        self.vertices.extend(other.vertices);
        self.triangles
            .extend(other.triangles.iter().map(|t| [t[0] + base, t[1] + base, t[2] + base]));
    }

    pub fn save_stl(&self, path: &Path) -> Result<()> {
        stl::write_binary_stl(path, &self.vertices, &self.triangles)
    }
}

/// Axis-aligned box with outward-facing triangles.
pub fn boxmesh(min: [f64; 3], max: [f64; 3]) -> Parts {
    oriented_box(min, max, false)
}

/// Box with inward-facing triangles (a cavity surface).
fn cavity_box(min: [f64; 3], max: [f64; 3]) -> Parts {
    oriented_box(min, max, true)
}

fn oriented_box(min: [f64; 3], max: [f64; 3], inward: bool) -> Parts {
    let [x0, y0, z0] = min;
    let [x1, y1, z1] = max;
    let vertices = vec![
        Point3::new(x0, y0, z0), // 0
        Point3::new(x1, y0, z0), // 1
        Point3::new(x1, y1, z0), // 2
        Point3::new(x0, y1, z0), // 3
        Point3::new(x0, y0, z1), // 4
        Point3::new(x1, y0, z1), // 5
        Point3::new(x1, y1, z1), // 6
        Point3::new(x0, y1, z1), // 7
    ];
    let quads: [[u32; 4]; 6] = [
        [0, 3, 2, 1], // bottom (-z)
        [4, 5, 6, 7], // top (+z)
        [0, 1, 5, 4], // front (-y)
        [2, 3, 7, 6], // back (+y)
        [0, 4, 7, 3], // left (-x)
        [1, 2, 6, 5], // right (+x)
    ];
    let mut triangles = Vec::with_capacity(12);
    for q in quads {
        if inward {
            triangles.push([q[0], q[2], q[1]]);
            triangles.push([q[0], q[3], q[2]]);
        } else {
            triangles.push([q[0], q[1], q[2]]);
            triangles.push([q[0], q[2], q[3]]);
        }
    }
    Parts { vertices, triangles }
}

/// Solid rectangular plate; alias for `boxmesh` with size semantics.
pub fn plate(length: f64, width: f64, thickness: f64) -> Parts {
    boxmesh([0.0, 0.0, 0.0], [length, width, thickness])
}

/// Closed box with an internal cavity inset by `wall` on every side.
/// A vertical ray through the middle crosses four surfaces.
pub fn hollow_box(min: [f64; 3], max: [f64; 3], wall: f64) -> Parts {
    let mut parts = boxmesh(min, max);
    parts.append(cavity_box(
        [min[0] + wall, min[1] + wall, min[2] + wall],
        [max[0] - wall, max[1] - wall, max[2] - wall],
    ));
    parts
}

/// L-shaped solid: a 2x1x1 box with a 1x1x1 box stacked on its left half.
pub fn l_prism() -> Parts {
    extrude_profile_xz(
        &[
            (0.0, 0.0),
            (2.0, 0.0),
            (2.0, 1.0),
            (1.0, 1.0),
            (1.0, 2.0),
            (0.0, 2.0),
        ],
        0.0,
        1.0,
    )
}

/// Plate whose underside jumps from z = 0 to z = `step` at x = `split`.
pub fn stepped_plate(length: f64, width: f64, thickness: f64, split: f64, step: f64) -> Parts {
    extrude_profile_xz(
        &[
            (0.0, 0.0),
            (split, 0.0),
            (split, step),
            (length, step),
            (length, thickness),
            (0.0, thickness),
        ],
        0.0,
        width,
    )
}

/// Plate with a full-width groove of `depth` carved into the underside
/// between x = g0 and x = g1.
pub fn grooved_plate(length: f64, width: f64, thickness: f64, g0: f64, g1: f64, depth: f64) -> Parts {
    extrude_profile_xz(
        &[
            (0.0, 0.0),
            (g0, 0.0),
            (g0, depth),
            (g1, depth),
            (g1, 0.0),
            (length, 0.0),
            (length, thickness),
            (0.0, thickness),
        ],
        0.0,
        width,
    )
}

/// Extrudes a simple polygon in the XZ plane along y in [y0, y1].
/// The profile must be counterclockwise in (x, z) (positive shoelace area)
/// and free of self-intersections; caps are ear-clipped.
pub fn extrude_profile_xz(profile: &[(f64, f64)], y0: f64, y1: f64) -> Parts {
    assert!(profile.len() >= 3, "profile needs at least 3 points");
    assert!(y1 > y0, "extrusion range must be positive");
    assert!(shoelace(profile) > 0.0, "profile must be counterclockwise");
    let n = profile.len() as u32;
    let mut vertices = Vec::with_capacity(profile.len() * 2);
    for &(x, z) in profile {
        vertices.push(Point3::new(x, y0, z));
    }
    for &(x, z) in profile {
        vertices.push(Point3::new(x, y1, z));
    }
    let mut triangles = Vec::new();
    // CCW cap triangles in (x, z) have 3D normal -y: correct for y0, flipped for y1.
    for [a, b, c] in ear_clip(profile) {
        triangles.push([a, b, c]);
        triangles.push([a + n, c + n, b + n]);
    }
    for i in 0..n {
        let j = (i + 1) % n;
        // Outward walls for a CCW profile.
        triangles.push([i, j + n, j]);
        triangles.push([i, i + n, j + n]);
    }
    Parts { vertices, triangles }
}

/// UV sphere, watertight, outward-facing.
pub fn uv_sphere(center: Point3<f64>, radius: f64, segments: u32, rings: u32) -> Parts {
    assert!(segments >= 3 && rings >= 2);
    let mut vertices = Vec::new();
    vertices.push(center + nalgebra::Vector3::new(0.0, 0.0, radius)); // north pole: 0
    for ri in 1..rings {
        let phi = std::f64::consts::PI * ri as f64 / rings as f64;
        let (sp, cp) = phi.sin_cos();
        for si in 0..segments {
            let theta = std::f64::consts::TAU * si as f64 / segments as f64;
            let (st, ct) = theta.sin_cos();
            vertices.push(center + nalgebra::Vector3::new(radius * sp * ct, radius * sp * st, radius * cp));
        }
    }
    let south = vertices.len() as u32;
    vertices.push(center + nalgebra::Vector3::new(0.0, 0.0, -radius));
    let ring_start = |ri: u32| 1 + (ri - 1) * segments;
    let mut triangles = Vec::new();
    for si in 0..segments {
        let sj = (si + 1) % segments;
        triangles.push([0, ring_start(1) + si, ring_start(1) + sj]);
        let last = ring_start(rings - 1);
        triangles.push([south, last + sj, last + si]);
    }
    for ri in 1..rings - 1 {
        let a = ring_start(ri);
        let b = ring_start(ri + 1);
        for si in 0..segments {
            let sj = (si + 1) % segments;
            triangles.push([a + si, b + si, b + sj]);
            triangles.push([a + si, b + sj, a + sj]);
        }
    }
    Parts { vertices, triangles }
}

/// ASCII STL text for the unit cube; a fixture for loader tests.
pub fn ascii_stl_cube() -> String {
    let parts = boxmesh([0.0; 3], [1.0, 1.0, 1.0]);
    let mut out = String::from("solid cube\n");
    for tri in &parts.triangles {
        let a = parts.vertices[tri[0] as usize];
        let b = parts.vertices[tri[1] as usize];
        let c = parts.vertices[tri[2] as usize];
        let n = (b - a).cross(&(c - a)).normalize();
        out.push_str(&format!("  facet normal {} {} {}\n", n.x, n.y, n.z));
        out.push_str("    outer loop\n");
        for p in [a, b, c] {
            out.push_str(&format!("      vertex {} {} {}\n", p.x, p.y, p.z));
        }
        out.push_str("    endloop\n");
        out.push_str("  endfacet\n");
    }
    out.push_str("endsolid cube\n");
    out
}

fn shoelace(profile: &[(f64, f64)]) -> f64 {
    let n = profile.len();
    let mut sum = 0.0;
    for i in 0..n {
        let (x0, z0) = profile[i];
        let (x1, z1) = profile[(i + 1) % n];
        sum += x0 * z1 - x1 * z0;
    }
    0.5 * sum
}

/// Ear clipping for a simple CCW polygon; returns index triangles.
fn ear_clip(profile: &[(f64, f64)]) -> Vec<[u32; 3]> {
    let mut remaining: Vec<u32> = (0..profile.len() as u32).collect();
    let mut triangles = Vec::with_capacity(profile.len().saturating_sub(2));
    let cross = |o: (f64, f64), a: (f64, f64), b: (f64, f64)| -> f64 {
        (a.0 - o.0) * (b.1 - o.1) - (a.1 - o.1) * (b.0 - o.0)
    };
    let inside = |p: (f64, f64), a: (f64, f64), b: (f64, f64), c: (f64, f64)| -> bool {
        cross(a, b, p) > 0.0 && cross(b, c, p) > 0.0 && cross(c, a, p) > 0.0
    };
    let mut guard = 0usize;
    while remaining.len() > 3 {
        let m = remaining.len();
        let mut clipped = false;
        for i in 0..m {
            let ia = remaining[(i + m - 1) % m];
            let ib = remaining[i];
            let ic = remaining[(i + 1) % m];
            let (a, b, c) = (
                profile[ia as usize],
                profile[ib as usize],
                profile[ic as usize],
            );
            if cross(a, b, c) <= 1e-12 {
                continue; // reflex or collinear corner
            }
            let blocked = remaining
                .iter()
                .filter(|&&j| j != ia && j != ib && j != ic)
                .any(|&j| inside(profile[j as usize], a, b, c));
            if blocked {
                continue;
            }
            triangles.push([ia, ib, ic]);
            remaining.remove(i);
            clipped = true;
            break;
        }
        guard += 1;
        assert!(
            clipped && guard < 10_000,
            "ear clipping failed; profile not a simple CCW polygon"
        );
    }
    triangles.push([remaining[0], remaining[1], remaining[2]]);
    triangles
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::mass_properties;
    use approx::assert_relative_eq;

    #[test]
    fn generators_are_watertight_with_expected_volume() {
        let cases: Vec<(Parts, f64)> = vec![
            (boxmesh([0.0; 3], [2.0, 3.0, 4.0]), 24.0),
            (hollow_box([0.0; 3], [10.0, 10.0, 10.0], 2.0), 1000.0 - 216.0),
            (l_prism(), 3.0),
            (stepped_plate(100.0, 40.0, 10.0, 60.0, 3.0), (60.0 * 10.0 + 40.0 * 7.0) * 40.0),
            (
                grooved_plate(100.0, 40.0, 10.0, 45.0, 55.0, 3.0),
                (100.0 * 10.0 - 10.0 * 3.0) * 40.0,
            ),
        ];
        for (parts, volume) in cases {
            let mesh = parts.into_trimesh();
            assert!(mesh.is_watertight());
            let mp = mass_properties(&mesh, 1.0).unwrap();
            assert_relative_eq!(mp.volume, volume, epsilon = 1e-9);
        }
    }

    #[test]
    fn sphere_volume_approaches_analytic() {
        let mesh = uv_sphere(Point3::new(0.0, 0.0, 0.0), 10.0, 64, 32).into_trimesh();
        assert!(mesh.is_watertight());
        let mp = mass_properties(&mesh, 1.0).unwrap();
        let exact = 4.0 / 3.0 * std::f64::consts::PI * 1000.0;
        assert!((mp.volume - exact).abs() / exact < 0.01);
        assert_relative_eq!(mp.com, Point3::new(0.0, 0.0, 0.0), epsilon = 1e-9);
    }
}
