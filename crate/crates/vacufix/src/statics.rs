//! Static equilibrium of the supported object under gravity and a
//! screwdriver press load.
//!
//! The contact forces solve the 6 x n wrench system whose columns stack
//! each contact normal over its moment contribution about the center of
//! mass. Moment arms are converted to meters so the force and moment rows
//! carry newtons and newton-meters. The assembled right-hand side is the
//! external wrench (gravity plus press); a support solution must cancel
//! it, so the solver computes the minimum-norm least-squares solution of
//! A F = -b. Positive forces push, negative forces are suction demand.

use nalgebra::{DMatrix, DVector, Point3, Unit, Vector3};

use crate::error::{Error, Result};
use crate::filter::SamplePoint;
use crate::planner::collinear_within_deg;

pub const DEFAULT_GRAVITY: f64 = 9.81;

/// Suction capacity of a single balloon contact (N).
#[derive(Debug, Clone, Copy, serde::Serialize, serde::Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuctionLimits {
    pub f_max: f64,
}

impl Default for SuctionLimits {
    fn default() -> Self {
        SuctionLimits { f_max: 5.7 }
    }
}

impl SuctionLimits {
    pub fn validate(&self) -> Result<()> {
        if !(self.f_max > 0.0) {
            return Err(Error::config("f_max", format!("must be positive, got {}", self.f_max)));
        }
        Ok(())
    }
}

/// A screw with its press direction and nominal press force.
#[derive(Debug, Clone)]
pub struct ScrewSpec {
    pub id: String,
    /// mm
    pub position: Point3<f64>,
    /// Unit press direction; straight down for screws lying in the
    /// horizontal plane.
    pub axis: Unit<Vector3<f64>>,
    /// N; nominal press used where no explicit level is given.
    pub press_force: f64,
}

impl ScrewSpec {
    pub fn new(id: impl Into<String>, position: Point3<f64>) -> Self {
        ScrewSpec {
            id: id.into(),
            position,
            axis: Unit::new_unchecked(-Vector3::z()),
            press_force: 0.0,
        }
    }

    pub fn with_axis(mut self, axis: Vector3<f64>) -> Self {
        self.axis = Unit::new_normalize(axis);
        self
    }

    pub fn with_press(mut self, press: f64) -> Self {
        self.press_force = press;
        self
    }
}

/// One equilibrium instance: n contacts, the object, one screw, one press
/// level.
#[derive(Debug, Clone)]
pub struct EquilibriumProblem {
    /// mm
    pub contacts: Vec<Point3<f64>>,
    pub normals: Vec<Unit<Vector3<f64>>>,
    /// mm
    pub com: Point3<f64>,
    /// kg
    pub mass: f64,
    /// m/s^2
    pub gravity: f64,
    pub screw: ScrewSpec,
    /// N; press level for this instance.
    pub press: f64,
    /// Moment-normalization length for the residual (mm); usually the mesh
    /// bbox diagonal.
    pub char_len_mm: f64,
    /// Drop the press moment from the right-hand side, keeping only the
    /// printed force components.
    pub strict_paper_moments: bool,
}

impl EquilibriumProblem {
    pub fn new(
        contacts: Vec<Point3<f64>>,
        normals: Vec<Unit<Vector3<f64>>>,
        com: Point3<f64>,
        mass: f64,
        screw: ScrewSpec,
        press: f64,
    ) -> Result<Self> {
        if contacts.len() != normals.len() || !(contacts.len() == 2 || contacts.len() == 3) {
            return Err(Error::DegenerateGeometry(format!(
                "need 2 or 3 contacts with matching normals, got {}",
                contacts.len()
            )));
        }
        if normals.iter().any(|n| n.z <= 0.0) {
            return Err(Error::DegenerateGeometry(
                "contact normals must have positive z".into(),
            ));
        }
        if !(press >= 0.0) {
            return Err(Error::config("press", format!("must be non-negative, got {press}")));
        }
        let char_len_mm = default_char_len(&contacts, &com, &screw.position);
        Ok(EquilibriumProblem {
            contacts,
            normals,
            com,
            mass,
            gravity: DEFAULT_GRAVITY,
            screw,
            press,
            char_len_mm,
            strict_paper_moments: false,
        })
    }

    pub fn with_press(&self, press: f64) -> Self {
        EquilibriumProblem {
            press,
            ..self.clone()
        }
    }

    fn load_n(&self) -> f64 {
        self.mass * self.gravity + self.press
    }
}

fn default_char_len(contacts: &[Point3<f64>], com: &Point3<f64>, screw: &Point3<f64>) -> f64 {
    let mut min = com.coords;
    let mut max = com.coords;
    for p in contacts.iter().chain(std::iter::once(screw)) {
        min = min.inf(&p.coords);
        max = max.sup(&p.coords);
    }
    (max - min).norm().max(1.0)
}

/// Builds the 6 x n system. Column j stacks n_j over (r_j x n_j) with the
/// moment arm r_j = p_j - com in meters. The right-hand side is the
/// external wrench: force (0, 0, -mg) + press * axis, moment
/// (p_screw - com) x (press * axis), both about the center of mass.
pub fn assemble_system(problem: &EquilibriumProblem) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = problem.contacts.len();
    if n == 3 {
        let tri = [&problem.contacts[0], &problem.contacts[1], &problem.contacts[2]];
        if collinear_within_deg(&tri, crate::planner::COLLINEAR_TOL_DEG) {
            return Err(Error::DegenerateGeometry(
                "3P contacts are collinear; moment rows are rank-deficient".into(),
            ));
        }
    }
    let mut a = DMatrix::zeros(6, n);
    for (j, (p, normal)) in problem.contacts.iter().zip(&problem.normals).enumerate() {
        let r_m = (p - problem.com) / 1000.0;
        let moment = r_m.cross(normal);
        for k in 0..3 {
            a[(k, j)] = normal[k];
            a[(k + 3, j)] = moment[k];
        }
    }
    let press_vec = problem.screw.axis.as_ref() * problem.press;
    let force = Vector3::new(0.0, 0.0, -problem.mass * problem.gravity) + press_vec;
    let moment = if problem.strict_paper_moments {
        Vector3::zeros()
    } else {
        let arm_m = (problem.screw.position - problem.com) / 1000.0;
        arm_m.cross(&press_vec)
    };
    let mut b = DVector::zeros(6);
    for k in 0..3 {
        b[k] = force[k];
        b[k + 3] = moment[k];
    }
    Ok((a, b))
}

/// Per-contact force solution for one screw and press level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct EquilibriumResult {
    /// N, signed: negative entries are suction demand.
    pub forces: Vec<f64>,
    /// Commensurated wrench mismatch (N): moment residuals are expressed as
    /// N*mm and divided by the characteristic length.
    pub residual: f64,
    /// Residual tolerance this result was classified against.
    pub residual_tol: f64,
    /// Balloon capacity used for classification.
    pub f_max: f64,
    /// Every force >= -f_max and residual within tolerance.
    pub feasible: bool,
    /// Index of the smallest (most suction-demanding) force.
    pub limiting_contact: usize,
}

impl EquilibriumResult {
    /// Suction demand in N (>= 0): how much pull the worst contact needs.
    pub fn suction_demand(&self) -> f64 {
        (-self.forces.iter().copied().fold(f64::INFINITY, f64::min)).max(0.0)
    }
}

/// Minimum-norm least-squares solve of A F = -b with the assembled
/// external wrench b. Infeasibility is a classification, not an error.
pub fn solve_equilibrium(
    a: &DMatrix<f64>,
    b: &DVector<f64>,
    problem: &EquilibriumProblem,
    limits: &SuctionLimits,
) -> EquilibriumResult {
    let rhs = -b;
    let svd = a.clone().svd(true, true);
    let sigma_max = svd.singular_values.iter().copied().fold(0.0f64, f64::max);
    let eps = (1e-12 * sigma_max).max(f64::MIN_POSITIVE);
    let forces_vec = svd.solve(&rhs, eps).expect("svd solve with u and v_t computed");
    let residual_vec = a * &forces_vec - &rhs;
    let moment_scale = 1000.0 / problem.char_len_mm;
    let mut acc = 0.0;
    for k in 0..3 {
        acc += residual_vec[k] * residual_vec[k];
        let m = residual_vec[k + 3] * moment_scale;
        acc += m * m;
    }
    let residual = acc.sqrt();
    let residual_tol = 1e-6 * problem.load_n().abs();
    let forces: Vec<f64> = forces_vec.iter().copied().collect();
    let limiting_contact = forces
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .map(|(i, _)| i)
        .unwrap_or(0);
    let min_force = forces[limiting_contact];
    let feasible = residual <= residual_tol && min_force >= -limits.f_max;
    EquilibriumResult {
        forces,
        residual,
        residual_tol,
        f_max: limits.f_max,
        feasible,
        limiting_contact,
    }
}

/// Assembles and solves in one step.
pub fn solve_problem(problem: &EquilibriumProblem, limits: &SuctionLimits) -> Result<EquilibriumResult> {
    let (a, b) = assemble_system(problem)?;
    Ok(solve_equilibrium(&a, &b, problem, limits))
}

/// True iff every force clears the suction limit and the residual stayed
/// within the solve tolerance.
pub fn check_suction_feasibility(result: &EquilibriumResult, limits: &SuctionLimits) -> bool {
    result.residual <= result.residual_tol
        && result.forces.iter().all(|&f| f >= -limits.f_max)
}

/// Quasi-static press sweep for one contact set and screw.
#[derive(Debug, Clone, serde::Serialize)]
pub struct SweepResult {
    pub press_levels: Vec<f64>,
    pub results: Vec<EquilibriumResult>,
    /// Smallest press level at which feasibility fails; absent when stable
    /// through the whole range.
    pub critical_press: Option<f64>,
}

impl SweepResult {
    /// Worst suction demand over the sweep (N, >= 0).
    pub fn worst_suction(&self) -> f64 {
        self.results.iter().map(|r| r.suction_demand()).fold(0.0, f64::max)
    }

    pub fn stable_throughout(&self) -> bool {
        self.critical_press.is_none()
    }
}

/// Solves the equilibrium at every press level from f_start to f_end.
pub fn sweep_press_force(
    problem: &EquilibriumProblem,
    f_start: f64,
    f_end: f64,
    step: f64,
    limits: &SuctionLimits,
) -> Result<SweepResult> {
    if !(step > 0.0) {
        return Err(Error::config("sweep_step", format!("must be positive, got {step}")));
    }
    if f_start > f_end {
        return Err(Error::config(
            "sweep_start",
            format!("must not exceed sweep_end ({f_start} > {f_end})"),
        ));
    }
    let (a, _) = assemble_system(problem)?; // geometry fixed across the sweep
    let mut press_levels = Vec::new();
    let mut level = f_start;
    while level <= f_end + 1e-9 {
        press_levels.push(level.min(f_end));
        level += step;
    }
    let mut results = Vec::with_capacity(press_levels.len());
    let mut critical_press = None;
    for &press in &press_levels {
        let instance = problem.with_press(press);
        let (_, b) = assemble_system(&instance)?;
        let result = solve_equilibrium(&a, &b, &instance, limits);
        if critical_press.is_none() && !result.feasible {
            critical_press = Some(press);
        }
        results.push(result);
    }
    Ok(SweepResult {
        press_levels,
        results,
        critical_press,
    })
}

/// Shared object data for building equilibrium problems from contact sets.
#[derive(Debug, Clone)]
pub struct StaticsSetup {
    pub com: Point3<f64>,
    pub mass: f64,
    pub gravity: f64,
    /// Replace every contact normal with +Z (the suction forces act
    /// vertically); otherwise the estimated surface normals are used.
    pub vertical_normals: bool,
    pub strict_paper_moments: bool,
    pub char_len_mm: f64,
    pub limits: SuctionLimits,
}

impl StaticsSetup {
    pub fn problem(
        &self,
        contacts: &[SamplePoint],
        screw: &ScrewSpec,
        press: f64,
    ) -> Result<EquilibriumProblem> {
        let positions: Vec<Point3<f64>> = contacts.iter().map(|c| c.position).collect();
        let normals: Vec<Unit<Vector3<f64>>> = contacts
            .iter()
            .map(|c| {
                if self.vertical_normals {
                    Unit::new_unchecked(Vector3::z())
                } else {
                    c.normal
                }
            })
            .collect();
        let mut problem =
            EquilibriumProblem::new(positions, normals, self.com, self.mass, screw.clone(), press)?;
        problem.gravity = self.gravity;
        problem.char_len_mm = self.char_len_mm;
        problem.strict_paper_moments = self.strict_paper_moments;
        Ok(problem)
    }
}

/// Signed per-balloon forces for one support configuration and screw.
#[derive(Debug, Clone, serde::Serialize)]
pub struct TableEntry {
    pub forces: Vec<f64>,
    /// Flags the entries that demand suction (negative force).
    pub suction: Vec<bool>,
    pub feasible: bool,
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct ForceTableRow {
    pub screw_id: String,
    pub two_point: Option<TableEntry>,
    pub three_point: Option<TableEntry>,
}

/// Per-screw force report for a chosen 2P and 3P configuration at one
/// press level.
#[derive(Debug, Clone, serde::Serialize)]
pub struct ForceTable {
    pub press: f64,
    pub rows: Vec<ForceTableRow>,
}

pub fn screw_force_table(
    setup: &StaticsSetup,
    config_2p: Option<&[SamplePoint]>,
    config_3p: Option<&[SamplePoint]>,
    screws: &[ScrewSpec],
    press: f64,
) -> Result<ForceTable> {
    let mut rows = Vec::with_capacity(screws.len());
    for screw in screws {
        let cell = |contacts: Option<&[SamplePoint]>| -> Result<Option<TableEntry>> {
            let Some(contacts) = contacts else {
                return Ok(None);
            };
            let problem = setup.problem(contacts, screw, press)?;
            let result = solve_problem(&problem, &setup.limits)?;
            Ok(Some(TableEntry {
                suction: result.forces.iter().map(|&f| f < 0.0).collect(),
                feasible: result.feasible,
                forces: result.forces,
            }))
        };
        rows.push(ForceTableRow {
            screw_id: screw.id.clone(),
            two_point: cell(config_2p)?,
            three_point: cell(config_3p)?,
        });
    }
    Ok(ForceTable { press, rows })
}
