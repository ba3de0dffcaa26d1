//! Declarative planner configuration.
//!
//! One TOML file carries every threshold of the pipeline; the defaults are
//! the planner's operating constants, so a config that only names the mesh
//! and screws runs with the standard parameter set. Unknown keys are
//! rejected.

use std::path::{Path, PathBuf};

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::filter::{FilterParams, NeighborSource};
use crate::planner::PlannerParams;
use crate::statics::{ScrewSpec, SuctionLimits};

/// Uniform density default: 1e-6 kg/mm^3 (water-like plastic).
pub const DEFAULT_DENSITY: f64 = 1e-6;

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlannerConfig {
    /// STL path, relative to the config file's directory.
    pub mesh: PathBuf,
    /// Artifact directory, relative to the config file's directory.
    #[serde(default = "default_output_dir")]
    pub output_dir: PathBuf,
    /// kg/mm^3; drives mass = density * volume of the watertight mesh.
    #[serde(default = "default_density")]
    pub density: f64,
    /// kg; overrides the density-derived mass.
    #[serde(default)]
    pub mass: Option<f64>,
    /// mm; overrides mesh integration (required for non-watertight meshes).
    #[serde(default)]
    pub com: Option<[f64; 3]>,
    /// Continuity-filter neighbor set.
    #[serde(default)]
    pub neighbor_source: NeighborSource,
    #[serde(default)]
    pub filter: FilterParams,
    #[serde(default)]
    pub planner: PlannerParams,
    #[serde(default)]
    pub statics: StaticsParams,
    pub screws: Vec<ScrewConfig>,
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("out")
}

fn default_density() -> f64 {
    DEFAULT_DENSITY
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StaticsParams {
    /// N; suction capacity of one balloon.
    pub f_max: f64,
    /// m/s^2
    pub gravity: f64,
    /// N; press-force sweep range and step.
    pub sweep_start: f64,
    pub sweep_end: f64,
    pub sweep_step: f64,
    /// N; press level of the per-screw force table (defaults to the sweep
    /// end: the worst case during operation).
    pub table_press: f64,
    /// Use +Z for every contact normal instead of the estimated surface
    /// normals.
    pub vertical_normals: bool,
    /// Zero the press moment in the right-hand side (the printed b-vector).
    pub strict_paper_moments: bool,
}

impl Default for StaticsParams {
    fn default() -> Self {
        StaticsParams {
            f_max: 5.7,
            gravity: 9.81,
            sweep_start: 0.0,
            sweep_end: 18.0,
            sweep_step: 0.5,
            table_press: 18.0,
            vertical_normals: false,
            strict_paper_moments: false,
        }
    }
}

impl StaticsParams {
    pub fn limits(&self) -> SuctionLimits {
        SuctionLimits { f_max: self.f_max }
    }

    pub fn validate(&self) -> Result<()> {
        self.limits().validate()?;
        if !(self.gravity > 0.0) {
            return Err(Error::config("gravity", format!("must be positive, got {}", self.gravity)));
        }
        if !(self.sweep_step > 0.0) {
            return Err(Error::config(
                "sweep_step",
                format!("must be positive, got {}", self.sweep_step),
            ));
        }
        if self.sweep_start < 0.0 {
            return Err(Error::config(
                "sweep_start",
                format!("must be non-negative, got {}", self.sweep_start),
            ));
        }
        if self.sweep_start > self.sweep_end {
            return Err(Error::config(
                "sweep_end",
                format!(
                    "must be at least sweep_start, got {} < {}",
                    self.sweep_end, self.sweep_start
                ),
            ));
        }
        if self.table_press < 0.0 {
            return Err(Error::config(
                "table_press",
                format!("must be non-negative, got {}", self.table_press),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScrewConfig {
    pub id: String,
    /// mm
    pub position: [f64; 3],
    /// Press direction; defaults to straight down.
    #[serde(default = "default_axis")]
    pub axis: [f64; 3],
    /// N; nominal press for this screw.
    #[serde(default)]
    pub press: f64,
}

fn default_axis() -> [f64; 3] {
    [0.0, 0.0, -1.0]
}

impl ScrewConfig {
    pub fn to_spec(&self) -> ScrewSpec {
        ScrewSpec::new(self.id.clone(), Point3::from(self.position))
            .with_axis(Vector3::from(self.axis))
            .with_press(self.press)
    }
}

/// A parsed config plus where it came from and its content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: PlannerConfig,
    /// Directory of the config file; relative paths resolve against it.
    pub base_dir: PathBuf,
    /// Hex SHA-256 of the config file bytes.
    pub hash: String,
}

impl LoadedConfig {
    pub fn mesh_path(&self) -> PathBuf {
        self.base_dir.join(&self.config.mesh)
    }

    pub fn output_dir(&self) -> PathBuf {
        self.base_dir.join(&self.config.output_dir)
    }
}

impl PlannerConfig {
    /// Reads, parses, and validates a config file.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let bytes = std::fs::read(path).map_err(|source| Error::UnreadableFile {
            path: path.display().to_string(),
            source,
        })?;
        let hash = hex_digest(&bytes);
        let text = String::from_utf8(bytes).map_err(|e| Error::Config {
            field: "config".into(),
            message: format!("not UTF-8: {e}"),
        })?;
        let config: PlannerConfig = toml::from_str(&text).map_err(|e| Error::Config {
            field: "config".into(),
            message: e.to_string(),
        })?;
        let base_dir = path.parent().unwrap_or(Path::new(".")).to_path_buf();
        let loaded = LoadedConfig {
            config,
            base_dir,
            hash,
        };
        loaded.config.validate()?;
        if !loaded.mesh_path().exists() {
            return Err(Error::config(
                "mesh",
                format!("file not found: {}", loaded.mesh_path().display()),
            ));
        }
        Ok(loaded)
    }

    pub fn validate(&self) -> Result<()> {
        self.filter.validate()?;
        self.planner.validate()?;
        self.statics.validate()?;
        if !(self.density > 0.0) {
            return Err(Error::config(
                "density",
                format!("must be positive, got {}", self.density),
            ));
        }
        if let Some(mass) = self.mass {
            if !(mass > 0.0) {
                return Err(Error::config("mass", format!("must be positive, got {mass}")));
            }
        }
        if self.screws.is_empty() {
            return Err(Error::config("screws", "at least one screw is required"));
        }
        let mut seen = std::collections::HashSet::new();
        for screw in &self.screws {
            if !seen.insert(screw.id.as_str()) {
                return Err(Error::config(
                    "screws",
                    format!("duplicate screw id `{}`", screw.id),
                ));
            }
            let axis = Vector3::from(screw.axis);
            if axis.norm() < 1e-12 {
                return Err(Error::config(
                    "screws",
                    format!("screw `{}` axis must be non-zero", screw.id),
                ));
            }
            if screw.press < 0.0 {
                return Err(Error::config(
                    "screws",
                    format!("screw `{}` press must be non-negative", screw.id),
                ));
            }
        }
        Ok(())
    }
}

fn hex_digest(bytes: &[u8]) -> String {
    let mut hasher = Sha256::new();
    hasher.update(bytes);
    let digest = hasher.finalize();
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}
