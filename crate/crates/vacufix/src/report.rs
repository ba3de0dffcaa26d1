//! Plan reports and artifact files.
//!
//! Reports are byte-stable: every float is rounded to 6 significant digits
//! before serialization and all orderings are deterministic, so the same
//! config and mesh always produce identical bytes.

use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::filter::{PipelineRun, StageSet};
use crate::statics::ForceTable;

/// Rounds to `digits` significant digits.
pub fn round_sig(v: f64, digits: i32) -> f64 {
    if v == 0.0 || !v.is_finite() {
        return v;
    }
    let magnitude = v.abs().log10().floor() as i32;
    let factor = 10f64.powi(digits - 1 - magnitude);
    (v * factor).round() / factor
}

/// Fixed report formatting: shortest decimal form of the 6-significant-digit
/// rounding.
pub fn fmt_sig(v: f64) -> String {
    format!("{}", round_sig(v, 6))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MeshSummary {
    pub path: String,
    pub triangles: usize,
    pub degenerate_dropped: usize,
    pub watertight: bool,
    pub bbox_min: [f64; 3],
    pub bbox_max: [f64; 3],
    /// mm^3; absent when the center of mass was overridden.
    pub volume_mm3: Option<f64>,
    pub mass_kg: f64,
    pub com_mm: [f64; 3],
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StageCount {
    pub stage: String,
    pub count: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScrewVerdict {
    pub screw_id: String,
    pub feasible_throughout: bool,
    /// N; first press level where feasibility failed.
    pub critical_press_n: Option<f64>,
    /// N; worst suction demand over the sweep.
    pub worst_suction_n: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ConfigReport {
    pub id: String,
    pub rank: usize,
    pub arity: usize,
    pub contacts_mm: Vec<[f64; 3]>,
    pub contact_normals: Vec<[f64; 3]>,
    pub hull_mm: Vec<[f64; 2]>,
    pub margin_mm: f64,
    pub area_mm2: f64,
    pub worst_suction_n: f64,
    pub feasible_all_screws: bool,
    pub per_screw: Vec<ScrewVerdict>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ArtifactIndex {
    pub report: String,
    pub table: String,
    pub sweeps: String,
    pub stage_dumps_csv: Vec<String>,
    pub stage_dumps_ply: Vec<String>,
    pub rejections: String,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlanReport {
    pub tool_version: String,
    pub config_hash: String,
    pub mesh: MeshSummary,
    pub stage_counts: Vec<StageCount>,
    pub first_empty_stage: Option<String>,
    /// Configurations that passed the hull test, best first.
    pub configs: Vec<ConfigReport>,
    /// Enumerated configurations rejected by the hull test.
    pub hull_rejected: usize,
    pub feasible_configs: usize,
    pub artifacts: ArtifactIndex,
}

impl PlanReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<PlanReport> {
        serde_json::from_str(text).map_err(|e| Error::Config {
            field: "report".into(),
            message: format!("unparsable report: {e}"),
        })
    }
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path.display().to_string(), e))
}

/// Stage dump: one row per surviving point.
pub fn write_stage_csv(path: &Path, set: &StageSet) -> Result<()> {
    let mut out = String::from("x,y,z,nx,ny,nz,stage,reason\n");
    for p in &set.points {
        out.push_str(&format!(
            "{},{},{},{},{},{},{},\n",
            fmt_sig(p.position.x),
            fmt_sig(p.position.y),
            fmt_sig(p.position.z),
            fmt_sig(p.normal.x),
            fmt_sig(p.normal.y),
            fmt_sig(p.normal.z),
            set.stage.name(),
        ));
    }
    write_text(path, &out)
}

/// Every rejected point across the pipeline with the reason and the stage
/// that removed it.
pub fn write_rejections_csv(path: &Path, run: &PipelineRun) -> Result<()> {
    let mut out = String::from("x,y,z,nx,ny,nz,stage,reason\n");
    for set in &run.stages {
        for (p, reason) in &set.rejected {
            out.push_str(&format!(
                "{},{},{},{},{},{},{},{}\n",
                fmt_sig(p.position.x),
                fmt_sig(p.position.y),
                fmt_sig(p.position.z),
                fmt_sig(p.normal.x),
                fmt_sig(p.normal.y),
                fmt_sig(p.normal.z),
                set.stage.name(),
                reason.label(),
            ));
        }
    }
    write_text(path, &out)
}

/// Binary little-endian PLY point cloud with positions and normals.
pub fn write_stage_ply(path: &Path, set: &StageSet) -> Result<()> {
    let mut out: Vec<u8> = Vec::with_capacity(128 + set.points.len() * 24);
    let header = format!(
        "ply\nformat binary_little_endian 1.0\nelement vertex {}\nproperty float x\nproperty float y\nproperty float z\nproperty float nx\nproperty float ny\nproperty float nz\nend_header\n",
        set.points.len()
    );
    out.extend_from_slice(header.as_bytes());
    for p in &set.points {
        for v in [
            p.position.x,
            p.position.y,
            p.position.z,
            p.normal.x,
            p.normal.y,
            p.normal.z,
        ] {
            out.write_all(&(v as f32).to_le_bytes()).expect("vec write");
        }
    }
    fs::write(path, out).map_err(|e| Error::io(path.display().to_string(), e))
}

/// One sweep sample for the CSV emitter.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub config_id: String,
    pub screw_id: String,
    pub press_n: f64,
    pub balloon_index: usize,
    pub force_n: f64,
    pub feasible: bool,
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut out = String::from("config_id,screw_id,press_N,balloon_index,force_N,feasible\n");
    for r in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            r.config_id,
            r.screw_id,
            fmt_sig(r.press_n),
            r.balloon_index,
            fmt_sig(r.force_n),
            r.feasible,
        ));
    }
    write_text(path, &out)
}

/// Table-layout JSON: one row per screw, 2P and 3P force columns.
pub fn table_to_json(table: &ForceTable) -> String {
    #[derive(Serialize)]
    struct Cell {
        forces_n: Vec<f64>,
        suction: Vec<bool>,
        feasible: bool,
    }
    #[derive(Serialize)]
    struct Row {
        screw: String,
        two_point: Option<Cell>,
        three_point: Option<Cell>,
    }
    #[derive(Serialize)]
    struct Doc {
        press_n: f64,
        rows: Vec<Row>,
    }
    let doc = Doc {
        press_n: round_sig(table.press, 6),
        rows: table
            .rows
            .iter()
            .map(|r| Row {
                screw: r.screw_id.clone(),
                two_point: r.two_point.as_ref().map(|e| Cell {
                    forces_n: e.forces.iter().map(|f| round_sig(*f, 6)).collect(),
                    suction: e.suction.clone(),
                    feasible: e.feasible,
                }),
                three_point: r.three_point.as_ref().map(|e| Cell {
                    forces_n: e.forces.iter().map(|f| round_sig(*f, 6)).collect(),
                    suction: e.suction.clone(),
                    feasible: e.feasible,
                }),
            })
            .collect(),
    };
    serde_json::to_string_pretty(&doc).expect("table serializes") + "\n"
}

/// Creates the output directory if needed and returns the joined path.
pub fn artifact_path(out_dir: &Path, name: &str) -> Result<PathBuf> {
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir.display().to_string(), e))?;
    Ok(out_dir.join(name))
}
