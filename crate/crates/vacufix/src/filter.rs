//! Support-point candidate filtering: surface sampling, SVD normal
//! estimation, and the inclination / visibility / below-COM / contact
//! completeness / structural continuity filters producing the candidate
//! sets P0 through P4.
//!
//! Every filter is a pure map over points against immutable mesh state, so
//! per-point work runs on rayon with deterministic output ordering (points
//! stay sorted by ray cell, then hit rank).

use nalgebra::{Point3, Unit, Vector3};
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kdtree::{KdTree, PlanarPointIndex};
use crate::mesh::{TriMesh, DEFAULT_RAY_SKIP};
use crate::bvh::Ray;

/// Slack when comparing inclination angles in degrees, so a normal built to
/// sit exactly on the threshold stays retained.
const ANGLE_EPS_DEG: f64 = 1e-9;

/// Pipeline stages in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, serde::Serialize, serde::Deserialize)]
pub enum Stage {
    P0,
    P1,
    P2,
    Psupport,
    P3,
    P4,
}

impl Stage {
    pub const ALL: [Stage; 6] = [Stage::P0, Stage::P1, Stage::P2, Stage::Psupport, Stage::P3, Stage::P4];

    pub fn name(self) -> &'static str {
        match self {
            Stage::P0 => "P0",
            Stage::P1 => "P1",
            Stage::P2 => "P2",
            Stage::Psupport => "Psupport",
            Stage::P3 => "P3",
            Stage::P4 => "P4",
        }
    }

    pub fn parse(s: &str) -> Option<Stage> {
        Stage::ALL.iter().copied().find(|st| st.name().eq_ignore_ascii_case(s))
    }
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// A candidate contact point.
#[derive(Debug, Clone)]
pub struct SamplePoint {
    /// mm
    pub position: Point3<f64>,
    /// Unit, oriented so z >= 0. Facet normal at sampling time, replaced by
    /// the SVD neighborhood estimate before filtering.
    pub normal: Unit<Vector3<f64>>,
    /// Lattice cell (ix, iy) of the generating ray.
    pub ray_cell: (u32, u32),
    /// Ordinal of the hit along its ray after merging.
    pub hit_rank: u32,
}

/// Why a point was removed, naming the stage that removed it.
#[derive(Debug, Clone, PartialEq)]
pub enum RejectReason {
    Inclination { angle_deg: f64 },
    Occluded,
    AboveCom { z: f64, z_com: f64 },
    IncompleteContact { coverage: f64 },
    Discontinuous { max_dz: f64 },
}

impl RejectReason {
    pub fn stage(&self) -> Stage {
        match self {
            RejectReason::Inclination { .. } => Stage::P1,
            RejectReason::Occluded => Stage::P2,
            RejectReason::AboveCom { .. } => Stage::Psupport,
            RejectReason::IncompleteContact { .. } => Stage::P3,
            RejectReason::Discontinuous { .. } => Stage::P4,
        }
    }

    pub fn label(&self) -> String {
        match self {
            RejectReason::Inclination { angle_deg } => format!("inclination {angle_deg:.2}deg"),
            RejectReason::Occluded => "occluded-from-below".to_string(),
            RejectReason::AboveCom { z, z_com } => format!("z {z:.3} >= com-z {z_com:.3}"),
            RejectReason::IncompleteContact { coverage } => format!("ring-coverage {coverage:.3}"),
            RejectReason::Discontinuous { max_dz } => format!("vertical-jump {max_dz:.3}mm"),
        }
    }
}

/// One stage's survivors plus the points this stage removed.
#[derive(Debug, Clone)]
pub struct StageSet {
    pub stage: Stage,
    pub points: Vec<SamplePoint>,
    pub rejected: Vec<(SamplePoint, RejectReason)>,
}

impl StageSet {
    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn positions(&self) -> Vec<Point3<f64>> {
        self.points.iter().map(|p| p.position).collect()
    }
}

/// All thresholds of the filtering pipeline. Defaults carry the planner's
/// operating constants: 2 mm sampling pitch, k = 50 neighbors, 60 deg
/// inclination limit, 60-ray suction ring of radius 8.7 mm, 0.9 coverage,
/// 2.5 mm continuity jump, 5 mm ring window.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FilterParams {
    pub grid_pitch: f64,
    pub knn_k: usize,
    pub theta_max_deg: f64,
    pub ring_rays: usize,
    pub suction_radius: f64,
    pub coverage_tau: f64,
    pub continuity_delta: f64,
    pub ring_window: f64,
}

impl Default for FilterParams {
    fn default() -> Self {
        FilterParams {
            grid_pitch: 2.0,
            knn_k: 50,
            theta_max_deg: 60.0,
            ring_rays: 60,
            suction_radius: 8.7,
            coverage_tau: 0.9,
            continuity_delta: 2.5,
            ring_window: 5.0,
        }
    }
}

impl FilterParams {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("grid_pitch", self.grid_pitch),
            ("suction_radius", self.suction_radius),
            ("continuity_delta", self.continuity_delta),
            ("ring_window", self.ring_window),
        ];
        for (field, v) in positive {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::config(field, format!("must be positive, got {v}")));
            }
        }
        if !(self.coverage_tau > 0.0 && self.coverage_tau <= 1.0) {
            return Err(Error::config(
                "coverage_tau",
                format!("must be in (0, 1], got {}", self.coverage_tau),
            ));
        }
        if !(self.theta_max_deg > 0.0 && self.theta_max_deg < 90.0) {
            return Err(Error::config(
                "theta_max_deg",
                format!("must be in (0, 90), got {}", self.theta_max_deg),
            ));
        }
        if self.knn_k == 0 {
            return Err(Error::config("knn_k", "must be at least 1"));
        }
        if self.ring_rays == 0 {
            return Err(Error::config("ring_rays", "must be at least 1"));
        }
        Ok(())
    }
}

/// Which set the continuity filter draws neighbors from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NeighborSource {
    Psupport,
    P3,
}

impl Default for NeighborSource {
    fn default() -> Self {
        NeighborSource::Psupport
    }
}

/// Casts +Z rays from a grid_pitch lattice anchored at the bbox minimum and
/// extended one pitch beyond the maximum, recording every surface crossing.
pub fn sample_surface(mesh: &TriMesh, params: &FilterParams) -> Result<StageSet> {
    let bbox = mesh.bbox();
    let extent = bbox.extent();
    if !(extent.x > 0.0 && extent.y > 0.0) {
        return Err(Error::EmptyResult);
    }
    let pitch = params.grid_pitch;
    let nx = (extent.x / pitch).floor() as u32 + 2;
    let ny = (extent.y / pitch).floor() as u32 + 2;
    let z0 = bbox.min.z - 1.0;
    let columns: Vec<u32> = (0..nx).collect();
    let per_column: Vec<Vec<SamplePoint>> = columns
        .par_iter()
        .map(|&ix| {
            let x = bbox.min.x + ix as f64 * pitch;
            let mut pts = Vec::new();
            for iy in 0..ny {
                let y = bbox.min.y + iy as f64 * pitch;
                let ray = Ray::new(Point3::new(x, y, z0), Vector3::z());
                for (rank, hit) in mesh.raycast_all_hits(&ray).iter().enumerate() {
                    pts.push(SamplePoint {
                        position: hit.point,
                        normal: up_oriented(hit.facet_normal),
                        ray_cell: (ix, iy),
                        hit_rank: rank as u32,
                    });
                }
            }
            pts
        })
        .collect();
    let points: Vec<SamplePoint> = per_column.into_iter().flatten().collect();
    if points.is_empty() {
        return Err(Error::EmptyResult);
    }
    Ok(StageSet {
        stage: Stage::P0,
        points,
        rejected: Vec::new(),
    })
}

fn up_oriented(n: Unit<Vector3<f64>>) -> Unit<Vector3<f64>> {
    if n.z < 0.0 {
        Unit::new_unchecked(-n.into_inner())
    } else {
        n
    }
}

/// Replaces each point's normal with the smallest-variance direction of its
/// k-nearest 3D neighborhood (SVD of the centered covariance), sign-flipped
/// so z >= 0.
pub fn estimate_normals(set: &StageSet, params: &FilterParams) -> Result<StageSet> {
    if set.points.len() < 3 {
        return Err(Error::TooFewPoints {
            found: set.points.len(),
        });
    }
    let coords: Vec<[f64; 3]> = set
        .points
        .iter()
        .map(|p| [p.position.x, p.position.y, p.position.z])
        .collect();
    let tree = KdTree::<3>::build(coords.clone())?;
    let points: Vec<SamplePoint> = set
        .points
        .par_iter()
        .map(|p| {
            let center = [p.position.x, p.position.y, p.position.z];
            let neighbors = tree.knn_query(&center, params.knn_k);
            let mut mean = Vector3::zeros();
            for &i in &neighbors {
                mean += Vector3::from(coords[i]);
            }
            mean /= neighbors.len() as f64;
            let mut cov = nalgebra::Matrix3::zeros();
            for &i in &neighbors {
                let d = Vector3::from(coords[i]) - mean;
                cov += d * d.transpose();
            }
            let eig = nalgebra::SymmetricEigen::new(cov);
            let mut smallest = 0;
            for k in 1..3 {
                if eig.eigenvalues[k] < eig.eigenvalues[smallest] {
                    smallest = k;
                }
            }
            let normal = Unit::new_normalize(eig.eigenvectors.column(smallest).into_owned());
            SamplePoint {
                normal: up_oriented(normal),
                ..p.clone()
            }
        })
        .collect();
    Ok(StageSet {
        stage: set.stage,
        points,
        rejected: Vec::new(),
    })
}

fn split_by<F>(set: &StageSet, stage: Stage, judge: F) -> StageSet
where
    F: Fn(&SamplePoint) -> Option<RejectReason> + Sync,
{
    let verdicts: Vec<Option<RejectReason>> = set.points.par_iter().map(&judge).collect();
    let mut points = Vec::with_capacity(set.points.len());
    let mut rejected = Vec::new();
    for (p, verdict) in set.points.iter().zip(verdicts) {
        match verdict {
            None => points.push(p.clone()),
            Some(reason) => rejected.push((p.clone(), reason)),
        }
    }
    StageSet { stage, points, rejected }
}

/// Keeps points whose normal tilts from +Z by at most theta_max (non-strict).
pub fn filter_inclination(set: &StageSet, params: &FilterParams) -> StageSet {
    split_by(set, Stage::P1, |p| {
        let angle_deg = p.normal.z.clamp(-1.0, 1.0).acos().to_degrees();
        (angle_deg > params.theta_max_deg + ANGLE_EPS_DEG)
            .then_some(RejectReason::Inclination { angle_deg })
    })
}

/// Keeps points reachable from below: nothing may lie along -Z beyond the
/// self-intersection guard.
pub fn filter_visibility(set: &StageSet, mesh: &TriMesh) -> StageSet {
    split_by(set, Stage::P2, |p| {
        mesh.raycast_occluded(p.position, -Vector3::z(), DEFAULT_RAY_SKIP)
            .then_some(RejectReason::Occluded)
    })
}

/// Keeps points strictly below the center of mass.
pub fn filter_below_com(set: &StageSet, com: &Point3<f64>) -> StageSet {
    split_by(set, Stage::Psupport, |p| {
        (p.position.z >= com.z).then_some(RejectReason::AboveCom {
            z: p.position.z,
            z_com: com.z,
        })
    })
}

/// Fraction of a suction ring that lands on nearby surface: ring_rays
/// vertical rays on the suction_radius circle, launched ring_window below
/// the point; a ray is a member of the hit set iff its first intersection
/// stays within the +-ring_window band around the point height.
pub fn ring_coverage(mesh: &TriMesh, position: &Point3<f64>, params: &FilterParams) -> f64 {
    let n = params.ring_rays;
    let mut hits = 0usize;
    for j in 0..n {
        let angle = std::f64::consts::TAU * j as f64 / n as f64;
        let x = position.x + params.suction_radius * angle.cos();
        let y = position.y + params.suction_radius * angle.sin();
        let origin = Point3::new(x, y, position.z - params.ring_window);
        let ray = Ray::new(origin, Vector3::z());
        if let Some(hit) = mesh.raycast_first_hit(&ray, 0.0) {
            if hit.point.z <= position.z + params.ring_window + 1e-9 {
                hits += 1;
            }
        }
    }
    hits as f64 / n as f64
}

/// Keeps points whose ring coverage reaches coverage_tau (non-strict).
pub fn filter_completeness(set: &StageSet, mesh: &TriMesh, params: &FilterParams) -> StageSet {
    split_by(set, Stage::P3, |p| {
        let coverage = ring_coverage(mesh, &p.position, params);
        (coverage < params.coverage_tau).then_some(RejectReason::IncompleteContact { coverage })
    })
}

/// Keeps points whose every neighbor within suction_radius (planar, drawn
/// from `neighbor_source`) stays within continuity_delta vertically.
pub fn filter_continuity(
    set: &StageSet,
    neighbor_source: &StageSet,
    params: &FilterParams,
) -> Result<StageSet> {
    let positions = neighbor_source.positions();
    let index = PlanarPointIndex::build(&positions)?;
    Ok(split_by(set, Stage::P4, |p| {
        let neighbors = index.radius_query([p.position.x, p.position.y], params.suction_radius);
        let mut max_dz = 0.0f64;
        for i in neighbors {
            max_dz = max_dz.max((positions[i].z - p.position.z).abs());
        }
        (max_dz > params.continuity_delta).then_some(RejectReason::Discontinuous { max_dz })
    }))
}

/// Output of `run_pipeline`: the executed stages in order plus the first
/// empty stage, if any went empty.
#[derive(Debug, Clone)]
pub struct PipelineRun {
    pub stages: Vec<StageSet>,
    pub first_empty: Option<Stage>,
}

impl PipelineRun {
    pub fn stage(&self, stage: Stage) -> Option<&StageSet> {
        self.stages.iter().find(|s| s.stage == stage)
    }

    pub fn last(&self) -> &StageSet {
        self.stages.last().expect("pipeline ran at least one stage")
    }

    pub fn counts(&self) -> Vec<(Stage, usize)> {
        self.stages.iter().map(|s| (s.stage, s.len())).collect()
    }
}

/// Runs sampling, normal estimation, and every filter through `last`,
/// in pipeline order.
pub fn run_pipeline_through(
    mesh: &TriMesh,
    com: &Point3<f64>,
    params: &FilterParams,
    neighbor_source: NeighborSource,
    last: Stage,
) -> Result<PipelineRun> {
    params.validate()?;
    let mut stages: Vec<StageSet> = Vec::with_capacity(6);
    let p0 = estimate_normals(&sample_surface(mesh, params)?, params)?;
    stages.push(p0);
    for stage in [Stage::P1, Stage::P2, Stage::Psupport, Stage::P3, Stage::P4] {
        if stages.last().unwrap().stage == last {
            break;
        }
        let prev = stages.last().unwrap();
        let next = match stage {
            Stage::P1 => filter_inclination(prev, params),
            Stage::P2 => filter_visibility(prev, mesh),
            Stage::Psupport => filter_below_com(prev, com),
            Stage::P3 => filter_completeness(prev, mesh, params),
            Stage::P4 => {
                let source = match neighbor_source {
                    NeighborSource::Psupport => self_or(&stages, Stage::Psupport),
                    NeighborSource::P3 => self_or(&stages, Stage::P3),
                };
                // An empty neighbor source means P4 is empty too.
                if source.is_empty() {
                    StageSet {
                        stage: Stage::P4,
                        points: Vec::new(),
                        rejected: Vec::new(),
                    }
                } else {
                    filter_continuity(prev, source, params)?
                }
            }
            Stage::P0 => unreachable!(),
        };
        stages.push(next);
    }
    let first_empty = stages.iter().find(|s| s.is_empty()).map(|s| s.stage);
    Ok(PipelineRun { stages, first_empty })
}

fn self_or(stages: &[StageSet], stage: Stage) -> &StageSet {
    stages
        .iter()
        .find(|s| s.stage == stage)
        .expect("earlier stage already executed")
}

/// Full pipeline through P4.
pub fn run_pipeline(
    mesh: &TriMesh,
    com: &Point3<f64>,
    params: &FilterParams,
    neighbor_source: NeighborSource,
) -> Result<PipelineRun> {
    run_pipeline_through(mesh, com, params, neighbor_source, Stage::P4)
}
