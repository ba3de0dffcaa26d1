//! Support-configuration generation and the geometric stability test.
//!
//! The XY plane is cut into square cells whose diagonal equals the module
//! spacing, so at most one contact lands in each cell and deployed modules
//! cannot collide. 2- and 3-point configurations are enumerated from the
//! cell representatives, each contact grows into a circular suction
//! footprint, and a configuration passes when the center of mass projects
//! strictly inside the convex hull of the footprints.

use std::collections::BTreeMap;

use nalgebra::{Point2, Point3, Vector2};

use crate::error::{Error, Result};
use crate::filter::{SamplePoint, StageSet};

/// A center of mass closer to the hull boundary than this counts as outside
/// (marginal equilibrium), in mm.
pub const EPS_HULL: f64 = 1e-6;

/// 3P combinations whose contacts are collinear within this tolerance (in
/// degrees off a straight line) are excluded; they give a degenerate moment
/// basis.
pub const COLLINEAR_TOL_DEG: f64 = 1.0;

/// Configuration-generation knobs. `spacing_d` is the module spacing (the
/// grid cell diagonal); 60 mm covers the balloon-hand hardware footprint.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PlannerParams {
    pub spacing_d: f64,
    pub samples_per_circle: usize,
    pub enforce_pairwise_spacing: bool,
    pub enforce_one_per_cell: bool,
}

impl Default for PlannerParams {
    fn default() -> Self {
        PlannerParams {
            spacing_d: 60.0,
            samples_per_circle: 16,
            enforce_pairwise_spacing: true,
            enforce_one_per_cell: true,
        }
    }
}

impl PlannerParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.spacing_d > 0.0) || !self.spacing_d.is_finite() {
            return Err(Error::config(
                "spacing_d",
                format!("must be positive, got {}", self.spacing_d),
            ));
        }
        if self.samples_per_circle < 2 {
            return Err(Error::config("samples_per_circle", "must be at least 2"));
        }
        Ok(())
    }
}

/// Square-cell partition of the candidate points with one representative
/// per non-empty cell.
#[derive(Debug, Clone)]
pub struct GridPartition {
    pub cell_side: f64,
    pub anchor: Point2<f64>,
    /// Cell index -> member indices into the source point list.
    pub cells: BTreeMap<(i64, i64), Vec<usize>>,
    /// One member per non-empty cell (closest to the cell center, ties by
    /// lexicographic position), ordered by cell index.
    pub representatives: Vec<usize>,
}

/// Partitions points into cells of side spacing_d / sqrt(2) anchored at the
/// minimum (x, y) of the point set.
pub fn partition_grid(points: &StageSet, spacing_d: f64) -> GridPartition {
    let cell_side = spacing_d / std::f64::consts::SQRT_2;
    let anchor = points
        .points
        .iter()
        .fold(Point2::new(f64::INFINITY, f64::INFINITY), |acc, p| {
            Point2::new(acc.x.min(p.position.x), acc.y.min(p.position.y))
        });
    let mut cells: BTreeMap<(i64, i64), Vec<usize>> = BTreeMap::new();
    for (i, p) in points.points.iter().enumerate() {
        let cx = ((p.position.x - anchor.x) / cell_side).floor() as i64;
        let cy = ((p.position.y - anchor.y) / cell_side).floor() as i64;
        cells.entry((cx, cy)).or_default().push(i);
    }
    let representatives = cells
        .iter()
        .map(|(&(cx, cy), members)| {
            let center = Point2::new(
                anchor.x + (cx as f64 + 0.5) * cell_side,
                anchor.y + (cy as f64 + 0.5) * cell_side,
            );
            *members
                .iter()
                .min_by(|&&a, &&b| {
                    let pa = &points.points[a].position;
                    let pb = &points.points[b].position;
                    let da = (pa.x - center.x).hypot(pa.y - center.y);
                    let db = (pb.x - center.x).hypot(pb.y - center.y);
                    da.total_cmp(&db)
                        .then(pa.x.total_cmp(&pb.x))
                        .then(pa.y.total_cmp(&pb.y))
                        .then(pa.z.total_cmp(&pb.z))
                })
                .expect("non-empty cell")
        })
        .collect();
    GridPartition {
        cell_side,
        anchor,
        cells,
        representatives,
    }
}

/// An ordered set of 2 or 3 contacts with its footprint hull and stability
/// verdict.
#[derive(Debug, Clone)]
pub struct SupportConfig {
    pub contacts: Vec<SamplePoint>,
    /// mm; suction circle radius used for the hull.
    pub footprint_radius: f64,
    pub hull_vertices: Vec<Point2<f64>>,
    pub com_inside: bool,
    /// Signed distance (mm) of the COM projection to the hull boundary;
    /// positive means inside.
    pub margin: f64,
}

impl SupportConfig {
    pub fn arity(&self) -> usize {
        self.contacts.len()
    }

    /// Support polygon area (mm^2) of the footprint hull.
    pub fn hull_area(&self) -> f64 {
        polygon_area(&self.hull_vertices)
    }

    /// Flat coordinate key for deterministic tie-breaking.
    pub fn lexical_key(&self) -> Vec<f64> {
        self.contacts
            .iter()
            .flat_map(|c| [c.position.x, c.position.y, c.position.z])
            .collect()
    }
}

/// Enumerates all arity-sized combinations of grid representatives that
/// respect the pairwise spacing constraint; collinear 3P sets are dropped.
pub fn enumerate_configs(
    partition: &GridPartition,
    points: &StageSet,
    arity: usize,
    params: &PlannerParams,
) -> Result<Vec<Vec<SamplePoint>>> {
    assert!(arity == 2 || arity == 3, "only 2P and 3P supported");
    let pool: Vec<usize> = if params.enforce_one_per_cell {
        partition.representatives.clone()
    } else {
        (0..points.points.len()).collect()
    };
    if pool.len() < arity {
        return Err(Error::TooFewCandidates {
            needed: arity,
            found: pool.len(),
        });
    }
    let spaced = |a: usize, b: usize| -> bool {
        if !params.enforce_pairwise_spacing {
            return true;
        }
        planar_distance(&points.points[a].position, &points.points[b].position)
            >= params.spacing_d
    };
    let mut out = Vec::new();
    let n = pool.len();
    for i in 0..n {
        for j in i + 1..n {
            if !spaced(pool[i], pool[j]) {
                continue;
            }
            if arity == 2 {
                out.push(vec![
                    points.points[pool[i]].clone(),
                    points.points[pool[j]].clone(),
                ]);
                continue;
            }
            for k in j + 1..n {
                if !spaced(pool[i], pool[k]) || !spaced(pool[j], pool[k]) {
                    continue;
                }
                let tri = [
                    &points.points[pool[i]].position,
                    &points.points[pool[j]].position,
                    &points.points[pool[k]].position,
                ];
                if collinear_within_deg(&tri, COLLINEAR_TOL_DEG) {
                    continue;
                }
                out.push(vec![
                    points.points[pool[i]].clone(),
                    points.points[pool[j]].clone(),
                    points.points[pool[k]].clone(),
                ]);
            }
        }
    }
    Ok(out)
}

fn planar_distance(a: &Point3<f64>, b: &Point3<f64>) -> f64 {
    (a.x - b.x).hypot(a.y - b.y)
}

/// True when the XY projection of the three points is collinear within
/// `tol_deg`: the largest interior angle reaches 180 - tol_deg.
pub fn collinear_within_deg(tri: &[&Point3<f64>; 3], tol_deg: f64) -> bool {
    let mut max_angle: f64 = 0.0;
    for i in 0..3 {
        let o = tri[i];
        let u = Vector2::new(tri[(i + 1) % 3].x - o.x, tri[(i + 1) % 3].y - o.y);
        let v = Vector2::new(tri[(i + 2) % 3].x - o.x, tri[(i + 2) % 3].y - o.y);
        let nu = u.norm();
        let nv = v.norm();
        if nu == 0.0 || nv == 0.0 {
            return true; // coincident points
        }
        let angle = (u.dot(&v) / (nu * nv)).clamp(-1.0, 1.0).acos().to_degrees();
        max_angle = max_angle.max(angle);
    }
    max_angle >= 180.0 - tol_deg
}

/// Convex hull of the suction circles in the XY plane.
///
/// Each contact's circle is sampled `samples_per_circle` times. With 2
/// samples and two contacts this degenerates to the pair of offsets
/// orthogonal to the contact baseline — the four-point offset rectangle.
/// With 2 samples and other arities the offsets run along x.
pub fn footprint_hull(
    contacts: &[SamplePoint],
    radius: f64,
    samples_per_circle: usize,
) -> Vec<Point2<f64>> {
    assert!(samples_per_circle >= 2);
    let mut points = Vec::with_capacity(contacts.len() * samples_per_circle);
    if samples_per_circle == 2 {
        let dir = if contacts.len() == 2 {
            let d = Vector2::new(
                contacts[1].position.x - contacts[0].position.x,
                contacts[1].position.y - contacts[0].position.y,
            );
            let n = Vector2::new(-d.y, d.x);
            if n.norm() > 0.0 {
                n.normalize()
            } else {
                Vector2::x()
            }
        } else {
            Vector2::x()
        };
        for c in contacts {
            let p = Point2::new(c.position.x, c.position.y);
            points.push(p + dir * radius);
            points.push(p - dir * radius);
        }
    } else {
        // Phase-anchor each circle to the configuration's own geometry so
        // the sampled hull moves rigidly with the contacts.
        let centroid = contacts.iter().fold(Vector2::zeros(), |acc, c| {
            acc + Vector2::new(c.position.x, c.position.y)
        }) / contacts.len() as f64;
        for c in contacts {
            let outward = Vector2::new(c.position.x, c.position.y) - centroid;
            let phase = if outward.norm() > 0.0 {
                outward.y.atan2(outward.x)
            } else {
                0.0
            };
            for j in 0..samples_per_circle {
                let angle = phase + std::f64::consts::TAU * j as f64 / samples_per_circle as f64;
                points.push(Point2::new(
                    c.position.x + radius * angle.cos(),
                    c.position.y + radius * angle.sin(),
                ));
            }
        }
    }
    convex_hull(points)
}

/// Monotone-chain convex hull, counterclockwise, collinear points dropped.
pub fn convex_hull(mut points: Vec<Point2<f64>>) -> Vec<Point2<f64>> {
    points.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    points.dedup_by(|a, b| a.x == b.x && a.y == b.y);
    let n = points.len();
    if n <= 2 {
        return points;
    }
    let cross = |o: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>| {
        (a.x - o.x) * (b.y - o.y) - (a.y - o.y) * (b.x - o.x)
    };
    let mut lower: Vec<Point2<f64>> = Vec::with_capacity(n);
    for p in &points {
        while lower.len() >= 2 && cross(&lower[lower.len() - 2], &lower[lower.len() - 1], p) <= 0.0 {
            lower.pop();
        }
        lower.push(*p);
    }
    let mut upper: Vec<Point2<f64>> = Vec::with_capacity(n);
    for p in points.iter().rev() {
        while upper.len() >= 2 && cross(&upper[upper.len() - 2], &upper[upper.len() - 1], p) <= 0.0 {
            upper.pop();
        }
        upper.push(*p);
    }
    lower.pop();
    upper.pop();
    lower.extend(upper);
    lower
}

/// Signed distance of a point to a counterclockwise convex polygon
/// boundary: positive inside, negative outside. Degenerate hulls (points,
/// segments) are always outside.
pub fn signed_distance_to_hull(hull: &[Point2<f64>], p: &Point2<f64>) -> f64 {
    match hull.len() {
        0 => f64::NEG_INFINITY,
        1 => -(p - hull[0]).norm(),
        2 => -distance_to_segment(p, &hull[0], &hull[1]),
        _ => {
            let mut min_line = f64::INFINITY;
            let mut inside = true;
            for i in 0..hull.len() {
                let a = &hull[i];
                let b = &hull[(i + 1) % hull.len()];
                let e = b - a;
                let s = (e.x * (p.y - a.y) - e.y * (p.x - a.x)) / e.norm();
                if s < 0.0 {
                    inside = false;
                }
                min_line = min_line.min(s);
            }
            if inside {
                min_line
            } else {
                let mut d = f64::INFINITY;
                for i in 0..hull.len() {
                    d = d.min(distance_to_segment(p, &hull[i], &hull[(i + 1) % hull.len()]));
                }
                -d
            }
        }
    }
}

fn distance_to_segment(p: &Point2<f64>, a: &Point2<f64>, b: &Point2<f64>) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    if len2 == 0.0 {
        return (p - a).norm();
    }
    let t = ((p - a).dot(&ab) / len2).clamp(0.0, 1.0);
    (p - (a + ab * t)).norm()
}

/// Strict-interior center-of-mass inclusion: returns (inside, margin).
pub fn com_inclusion_test(hull: &[Point2<f64>], com: &Point3<f64>) -> (bool, f64) {
    let margin = signed_distance_to_hull(hull, &Point2::new(com.x, com.y));
    (margin > EPS_HULL, margin)
}

pub fn polygon_area(hull: &[Point2<f64>]) -> f64 {
    if hull.len() < 3 {
        return 0.0;
    }
    let mut sum = 0.0;
    for i in 0..hull.len() {
        let a = &hull[i];
        let b = &hull[(i + 1) % hull.len()];
        sum += a.x * b.y - b.x * a.y;
    }
    0.5 * sum.abs()
}

/// Builds a full `SupportConfig` with hull and stability verdict.
pub fn build_config(
    contacts: Vec<SamplePoint>,
    radius: f64,
    samples_per_circle: usize,
    com: &Point3<f64>,
) -> SupportConfig {
    let hull_vertices = footprint_hull(&contacts, radius, samples_per_circle);
    let (com_inside, margin) = com_inclusion_test(&hull_vertices, com);
    SupportConfig {
        contacts,
        footprint_radius: radius,
        hull_vertices,
        com_inside,
        margin,
    }
}

/// Score components used to order configurations.
#[derive(Debug, Clone, Copy, serde::Serialize)]
pub struct ConfigScore {
    /// Stable through the whole sweep for every screw.
    pub feasible_all: bool,
    /// Worst suction demand (N, >= 0) seen anywhere in the sweep.
    pub worst_suction: f64,
    /// Hull margin of the COM projection (mm).
    pub margin: f64,
    /// Support polygon area (mm^2).
    pub area: f64,
}

#[derive(Debug, Clone)]
pub struct RankedEntry {
    pub config: SupportConfig,
    pub score: ConfigScore,
}

/// Configurations ordered best-first.
#[derive(Debug, Clone, Default)]
pub struct RankedPlan {
    pub entries: Vec<RankedEntry>,
}

/// Feasible-throughout configurations first, then ascending worst suction
/// demand, descending hull margin, descending area; exact ties fall back to
/// the lexicographic contact coordinates.
pub fn rank_configs(items: Vec<(SupportConfig, ConfigScore)>) -> RankedPlan {
    let mut entries: Vec<RankedEntry> = items
        .into_iter()
        .map(|(config, score)| RankedEntry { config, score })
        .collect();
    entries.sort_by(|a, b| {
        b.score
            .feasible_all
            .cmp(&a.score.feasible_all)
            .then(a.score.worst_suction.total_cmp(&b.score.worst_suction))
            .then(b.score.margin.total_cmp(&a.score.margin))
            .then(b.score.area.total_cmp(&a.score.area))
            .then_with(|| {
                let ka = a.config.lexical_key();
                let kb = b.config.lexical_key();
                ka.iter()
                    .zip(&kb)
                    .map(|(x, y)| x.total_cmp(y))
                    .find(|o| o.is_ne())
                    .unwrap_or(ka.len().cmp(&kb.len()))
            })
    });
    RankedPlan { entries }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::filter::Stage;
    use approx::assert_relative_eq;
    use nalgebra::{Unit, Vector3};

    fn sample(x: f64, y: f64, z: f64) -> SamplePoint {
        SamplePoint {
            position: Point3::new(x, y, z),
            normal: Unit::new_normalize(Vector3::z()),
            ray_cell: (0, 0),
            hit_rank: 0,
        }
    }

    fn stage_set(points: Vec<SamplePoint>) -> StageSet {
        StageSet {
            stage: Stage::P4,
            points,
            rejected: Vec::new(),
        }
    }

    #[test]
    fn cell_side_is_diagonal_over_sqrt2() {
        let set = stage_set(vec![sample(0.0, 0.0, 0.0)]);
        let part = partition_grid(&set, 60.0);
        assert_relative_eq!(part.cell_side, 60.0 / std::f64::consts::SQRT_2, epsilon = 1e-12);
        assert_relative_eq!(part.cell_side, 42.426, epsilon = 1e-3);
    }

    #[test]
    fn representative_is_nearest_cell_center() {
        // Cell side ~42.43; both points in cell (0, 0), center ~(21.2, 21.2).
        let set = stage_set(vec![sample(1.0, 1.0, 0.0), sample(20.0, 20.0, 0.0)]);
        let part = partition_grid(&set, 60.0);
        assert_eq!(part.cells.len(), 1);
        assert_eq!(part.representatives, vec![1]);
    }

    #[test]
    fn one_representative_per_cell() {
        let mut pts = Vec::new();
        for i in 0..5 {
            let base = i as f64 * 45.0;
            pts.push(sample(base, 0.0, 0.0));
            pts.push(sample(base + 1.0, 1.0, 0.0));
        }
        let set = stage_set(pts);
        let part = partition_grid(&set, 60.0);
        assert_eq!(part.cells.len(), 5);
        assert_eq!(part.representatives.len(), 5);
        for (cell, members) in &part.cells {
            let rep = part
                .representatives
                .iter()
                .find(|r| members.contains(r))
                .copied();
            assert!(rep.is_some(), "cell {cell:?} has no representative");
        }
    }

    #[test]
    fn spacing_violation_excluded() {
        let set = stage_set(vec![sample(0.0, 0.0, 0.0), sample(50.0, 0.0, 0.0)]);
        let part = partition_grid(&set, 60.0);
        // Two cells, 50 mm apart: below the 60 mm spacing.
        let configs = enumerate_configs(&part, &set, 2, &PlannerParams::default()).unwrap();
        assert!(configs.is_empty());
    }

    #[test]
    fn equilateral_triple_yields_one_config() {
        let h = 100.0 * 3f64.sqrt() / 2.0;
        let set = stage_set(vec![
            sample(0.0, 0.0, 0.0),
            sample(100.0, 0.0, 0.0),
            sample(50.0, h, 0.0),
        ]);
        let part = partition_grid(&set, 60.0);
        let configs = enumerate_configs(&part, &set, 3, &PlannerParams::default()).unwrap();
        assert_eq!(configs.len(), 1);
    }

    #[test]
    fn combinatorial_count_matches() {
        // 10 points on a wide circle, all pairwise >= 60 mm apart.
        let mut pts = Vec::new();
        for i in 0..10 {
            let a = std::f64::consts::TAU * i as f64 / 10.0;
            pts.push(sample(200.0 * a.cos(), 200.0 * a.sin(), 0.0));
        }
        let set = stage_set(pts);
        let part = partition_grid(&set, 60.0);
        assert_eq!(part.representatives.len(), 10);
        let configs = enumerate_configs(&part, &set, 3, &PlannerParams::default()).unwrap();
        assert_eq!(configs.len(), 120); // C(10, 3)
    }

    #[test]
    fn collinear_triples_excluded() {
        let set = stage_set(vec![
            sample(0.0, 0.0, 0.0),
            sample(70.0, 0.2, 0.0),
            sample(140.0, 0.0, 0.0),
        ]);
        let part = partition_grid(&set, 60.0);
        let configs = enumerate_configs(&part, &set, 3, &PlannerParams::default()).unwrap();
        assert!(configs.is_empty());
        // Same spread but bent well out of line passes.
        let set = stage_set(vec![
            sample(0.0, 0.0, 0.0),
            sample(70.0, 60.0, 0.0),
            sample(140.0, 0.0, 0.0),
        ]);
        let part = partition_grid(&set, 60.0);
        assert_eq!(
            enumerate_configs(&part, &set, 3, &PlannerParams::default()).unwrap().len(),
            1
        );
    }

    #[test]
    fn too_few_candidates_errors() {
        let set = stage_set(vec![sample(0.0, 0.0, 0.0)]);
        let part = partition_grid(&set, 60.0);
        assert!(matches!(
            enumerate_configs(&part, &set, 2, &PlannerParams::default()),
            Err(Error::TooFewCandidates { needed: 2, found: 1 })
        ));
    }

    #[test]
    fn single_contact_sixteen_gon() {
        let hull = footprint_hull(&[sample(10.0, 20.0, 0.0)], 8.7, 16);
        assert_eq!(hull.len(), 16);
        for v in &hull {
            assert_relative_eq!((v - Point2::new(10.0, 20.0)).norm(), 8.7, epsilon = 1e-12);
        }
    }

    #[test]
    fn two_sample_2p_hull_reproduces_offset_rectangle() {
        let contacts = [sample(0.0, 0.0, 0.0), sample(100.0, 0.0, 0.0)];
        let hull = footprint_hull(&contacts, 8.7, 2);
        let expect = [
            Point2::new(0.0, -8.7),
            Point2::new(100.0, -8.7),
            Point2::new(100.0, 8.7),
            Point2::new(0.0, 8.7),
        ];
        assert_eq!(hull.len(), 4);
        for e in &expect {
            assert!(
                hull.iter().any(|v| (v - e).norm() == 0.0),
                "missing offset vertex {e:?}"
            );
        }
    }

    #[test]
    fn dense_sampling_agrees_on_area() {
        let h = 120.0 * 3f64.sqrt() / 2.0;
        let contacts = [
            sample(0.0, 0.0, 0.0),
            sample(120.0, 0.0, 0.0),
            sample(60.0, h, 0.0),
        ];
        let coarse = polygon_area(&footprint_hull(&contacts, 8.7, 16));
        let dense = polygon_area(&footprint_hull(&contacts, 8.7, 360));
        assert!((dense - coarse).abs() / dense < 0.005);
    }

    #[test]
    fn com_inclusion_cases() {
        let h = 100.0 * 3f64.sqrt() / 2.0;
        let contacts = vec![
            sample(0.0, 0.0, 0.0),
            sample(100.0, 0.0, 0.0),
            sample(50.0, h, 0.0),
        ];
        let centroid = Point3::new(50.0, h / 3.0, 0.0);
        let config = build_config(contacts, 8.7, 16, &centroid);
        assert!(config.com_inside);
        assert!(config.margin > 0.0);

        // 20 mm outside the 2P offset rectangle.
        let contacts = vec![sample(0.0, 0.0, 0.0), sample(100.0, 0.0, 0.0)];
        let config = build_config(contacts, 8.7, 2, &Point3::new(50.0, 28.7, 0.0));
        assert!(!config.com_inside);
        assert_relative_eq!(config.margin, -20.0, epsilon = 1e-9);

        // Exactly on the hull edge: strict rule says outside.
        let contacts = vec![sample(0.0, 0.0, 0.0), sample(100.0, 0.0, 0.0)];
        let config = build_config(contacts, 8.7, 2, &Point3::new(50.0, 8.7, 0.0));
        assert!(!config.com_inside);
    }

    #[test]
    fn com_test_rigid_motion_invariant() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let contacts: Vec<SamplePoint> = (0..3)
                .map(|_| sample(rng.random_range(-80.0..80.0), rng.random_range(-80.0..80.0), 0.0))
                .collect();
            let com = Point3::new(
                rng.random_range(-100.0..100.0),
                rng.random_range(-100.0..100.0),
                5.0,
            );
            let base = build_config(contacts.clone(), 8.7, 16, &com);

            let angle: f64 = rng.random_range(0.0..std::f64::consts::TAU);
            let (s, c) = angle.sin_cos();
            let shift = Vector2::new(rng.random_range(-50.0..50.0), rng.random_range(-50.0..50.0));
            let xf = |p: &Point3<f64>| {
                Point3::new(c * p.x - s * p.y + shift.x, s * p.x + c * p.y + shift.y, p.z)
            };
            let moved: Vec<SamplePoint> = contacts
                .iter()
                .map(|p| sample(xf(&p.position).x, xf(&p.position).y, 0.0))
                .collect();
            let config = build_config(moved, 8.7, 16, &xf(&com));
            assert_eq!(config.com_inside, base.com_inside);
            assert_relative_eq!(config.margin, base.margin, epsilon = 1e-9);
        }
    }

    #[test]
    fn denser_sampling_never_flips_inside_to_outside() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(9);
        let r = 8.7;
        for _ in 0..200 {
            let contacts: Vec<SamplePoint> = (0..3)
                .map(|_| sample(rng.random_range(-60.0..60.0), rng.random_range(-60.0..60.0), 0.0))
                .collect();
            let com = Point3::new(rng.random_range(-70.0..70.0), rng.random_range(-70.0..70.0), 0.0);
            for (m_lo, m_hi) in [(8usize, 16usize), (16, 64)] {
                let lo = build_config(contacts.clone(), r, m_lo, &com);
                let hi = build_config(contacts.clone(), r, m_hi, &com);
                let sag = r * (1.0 - (std::f64::consts::PI / m_lo as f64).cos());
                if lo.com_inside && lo.margin > sag && !hi.com_inside {
                    panic!(
                        "refinement flipped inside->outside at margin {} (sag {sag})",
                        lo.margin
                    );
                }
            }
        }
    }

    #[test]
    fn emitted_configs_respect_spacing_and_cells() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        let pts: Vec<SamplePoint> = (0..120)
            .map(|_| sample(rng.random_range(0.0..250.0), rng.random_range(0.0..180.0), 0.0))
            .collect();
        let set = stage_set(pts);
        let params = PlannerParams::default();
        let part = partition_grid(&set, params.spacing_d);
        for arity in [2usize, 3] {
            let configs = enumerate_configs(&part, &set, arity, &params).unwrap();
            for contacts in &configs {
                for i in 0..contacts.len() {
                    for j in i + 1..contacts.len() {
                        let d = (contacts[i].position.x - contacts[j].position.x)
                            .hypot(contacts[i].position.y - contacts[j].position.y);
                        assert!(d >= params.spacing_d, "pair at {d} mm");
                    }
                }
                // At most one contact per grid cell.
                let mut cells = std::collections::HashSet::new();
                for c in contacts {
                    let cx = ((c.position.x - part.anchor.x) / part.cell_side).floor() as i64;
                    let cy = ((c.position.y - part.anchor.y) / part.cell_side).floor() as i64;
                    assert!(cells.insert((cx, cy)), "two contacts share a cell");
                }
            }
        }
    }

    #[test]
    fn ranking_orders_and_tiebreaks() {
        let mk = |x: f64, feasible: bool, suction: f64, margin: f64, area: f64| {
            (
                build_config(
                    vec![sample(x, 0.0, 0.0), sample(x + 100.0, 0.0, 0.0)],
                    8.7,
                    16,
                    &Point3::new(x + 50.0, 0.0, 0.0),
                ),
                ConfigScore {
                    feasible_all: feasible,
                    worst_suction: suction,
                    margin,
                    area,
                },
            )
        };
        // Suction ordering.
        let plan = rank_configs(vec![mk(0.0, true, 4.0, 10.0, 1.0), mk(1.0, true, 1.0, 10.0, 1.0)]);
        assert_eq!(plan.entries[0].score.worst_suction, 1.0);
        // Margin ordering at equal suction.
        let plan = rank_configs(vec![mk(0.0, true, 1.0, 10.0, 1.0), mk(1.0, true, 1.0, 30.0, 1.0)]);
        assert_eq!(plan.entries[0].score.margin, 30.0);
        // Identical scores: lexicographic contact order decides.
        let plan = rank_configs(vec![mk(5.0, true, 1.0, 10.0, 1.0), mk(-5.0, true, 1.0, 10.0, 1.0)]);
        assert_eq!(plan.entries[0].config.contacts[0].position.x, -5.0);
        // Infeasible sinks below feasible regardless of score.
        let plan = rank_configs(vec![mk(0.0, false, 0.0, 99.0, 99.0), mk(1.0, true, 5.0, 1.0, 1.0)]);
        assert!(plan.entries[0].score.feasible_all);
    }
}
