//! End-to-end planning runs and report-backed queries.
//!
//! `run_plan` executes the full pipeline (filters, configuration
//! enumeration, hull test, per-screw press sweeps, ranking) and writes the
//! artifact set; `analyze` and `sweep` reload a written report and answer
//! single-configuration questions.

use std::path::PathBuf;

use nalgebra::{Point3, Unit, Vector3};
use rayon::prelude::*;

use crate::config::LoadedConfig;
use crate::error::{Error, Result};
use crate::filter::{
    run_pipeline, run_pipeline_through, PipelineRun, SamplePoint, Stage, StageSet,
};
use crate::mesh::{mass_properties, LoadOptions, TriMesh};
use crate::planner::{
    build_config, enumerate_configs, partition_grid, rank_configs, ConfigScore, SupportConfig,
};
use crate::report::{
    artifact_path, round_sig, table_to_json, write_rejections_csv, write_stage_csv,
    write_stage_ply, write_sweep_csv, write_text, ArtifactIndex, ConfigReport, MeshSummary,
    PlanReport, ScrewVerdict, StageCount, SweepRow,
};
use crate::statics::{
    screw_force_table, solve_problem, sweep_press_force, EquilibriumResult, ScrewSpec,
    StaticsSetup, SweepResult,
};

/// The object as resolved from config: mesh plus mass properties.
#[derive(Debug)]
pub struct ObjectProps {
    pub mesh: TriMesh,
    /// mm^3; absent when both mass and com were overridden.
    pub volume: Option<f64>,
    pub mass: f64,
    pub com: Point3<f64>,
}

pub fn load_object(loaded: &LoadedConfig) -> Result<ObjectProps> {
    let mesh = TriMesh::load_stl(&loaded.mesh_path(), &LoadOptions::default())?;
    let c = &loaded.config;
    let (volume, mass, com) = match (c.mass, c.com) {
        (Some(mass), Some(com)) => (None, mass, Point3::from(com)),
        _ => {
            let mp = mass_properties(&mesh, c.density)?;
            (
                Some(mp.volume),
                c.mass.unwrap_or(mp.mass),
                c.com.map(Point3::from).unwrap_or(mp.com),
            )
        }
    };
    Ok(ObjectProps {
        mesh,
        volume,
        mass,
        com,
    })
}

fn statics_setup(loaded: &LoadedConfig, props: &ObjectProps) -> StaticsSetup {
    let s = &loaded.config.statics;
    StaticsSetup {
        com: props.com,
        mass: props.mass,
        gravity: s.gravity,
        vertical_normals: s.vertical_normals,
        strict_paper_moments: s.strict_paper_moments,
        char_len_mm: props.mesh.bbox().diagonal().max(1.0),
        limits: s.limits(),
    }
}

/// Everything `plan` produced, with the written report.
#[derive(Debug)]
pub struct PlanOutcome {
    pub report: PlanReport,
    /// At least one configuration stayed feasible through the sweep for
    /// every screw.
    pub feasible: bool,
    pub out_dir: PathBuf,
}

struct ScoredConfig {
    config: SupportConfig,
    sweeps: Vec<SweepResult>,
}

pub fn run_plan(loaded: &LoadedConfig) -> Result<PlanOutcome> {
    let c = &loaded.config;
    let props = load_object(loaded)?;
    let run = run_pipeline(&props.mesh, &props.com, &c.filter, c.neighbor_source)?;
    let p4 = run.stage(Stage::P4).expect("full pipeline emits P4");

    // Candidate configurations from the spacing-constrained grid.
    let partition = partition_grid(p4, c.planner.spacing_d);
    let mut contact_sets: Vec<Vec<SamplePoint>> = Vec::new();
    for arity in [2usize, 3] {
        match enumerate_configs(&partition, p4, arity, &c.planner) {
            Ok(sets) => contact_sets.extend(sets),
            Err(Error::TooFewCandidates { .. }) => {}
            Err(e) => return Err(e),
        }
    }

    // Hull gate.
    let mut hull_rejected = 0usize;
    let mut passed: Vec<SupportConfig> = Vec::new();
    for contacts in contact_sets {
        let config = build_config(
            contacts,
            c.filter.suction_radius,
            c.planner.samples_per_circle,
            &props.com,
        );
        if config.com_inside {
            passed.push(config);
        } else {
            hull_rejected += 1;
        }
    }

    // Press sweeps per configuration and screw.
    let setup = statics_setup(loaded, &props);
    let screws: Vec<ScrewSpec> = c.screws.iter().map(|s| s.to_spec()).collect();
    let scored: Vec<ScoredConfig> = passed
        .into_par_iter()
        .map(|config| -> Result<ScoredConfig> {
            let mut sweeps = Vec::with_capacity(screws.len());
            for screw in &screws {
                let problem = setup.problem(&config.contacts, screw, 0.0)?;
                sweeps.push(sweep_press_force(
                    &problem,
                    c.statics.sweep_start,
                    c.statics.sweep_end,
                    c.statics.sweep_step,
                    &setup.limits,
                )?);
            }
            Ok(ScoredConfig { config, sweeps })
        })
        .collect::<Result<Vec<_>>>()?;

    let ranked = rank_configs(
        scored
            .iter()
            .map(|s| {
                let score = ConfigScore {
                    feasible_all: s.sweeps.iter().all(|sw| sw.stable_throughout()),
                    worst_suction: s.sweeps.iter().map(|sw| sw.worst_suction()).fold(0.0, f64::max),
                    margin: s.config.margin,
                    area: s.config.hull_area(),
                };
                (s.config.clone(), score)
            })
            .collect(),
    );

    // Re-associate sweeps with the ranked order via the lexical key.
    let sweeps_by_key: Vec<(Vec<f64>, &ScoredConfig)> =
        scored.iter().map(|s| (s.config.lexical_key(), s)).collect();
    let find_scored = |config: &SupportConfig| -> &ScoredConfig {
        let key = config.lexical_key();
        sweeps_by_key
            .iter()
            .find(|(k, _)| *k == key)
            .map(|(_, s)| *s)
            .expect("ranked config came from scored set")
    };

    let out_dir = loaded.output_dir();
    let mut sweep_rows: Vec<SweepRow> = Vec::new();
    let mut config_reports: Vec<ConfigReport> = Vec::new();
    for (rank, entry) in ranked.entries.iter().enumerate() {
        let scored = find_scored(&entry.config);
        let id = format!("{}P-{:04}", entry.config.arity(), rank);
        let mut per_screw = Vec::with_capacity(screws.len());
        for (screw, sweep) in screws.iter().zip(&scored.sweeps) {
            per_screw.push(ScrewVerdict {
                screw_id: screw.id.clone(),
                feasible_throughout: sweep.stable_throughout(),
                critical_press_n: sweep.critical_press.map(|p| round_sig(p, 6)),
                worst_suction_n: round_sig(sweep.worst_suction(), 6),
            });
            for (level, result) in sweep.press_levels.iter().zip(&sweep.results) {
                for (balloon_index, force) in result.forces.iter().enumerate() {
                    sweep_rows.push(SweepRow {
                        config_id: id.clone(),
                        screw_id: screw.id.clone(),
                        press_n: *level,
                        balloon_index,
                        force_n: *force,
                        feasible: result.feasible,
                    });
                }
            }
        }
        config_reports.push(ConfigReport {
            id,
            rank,
            arity: entry.config.arity(),
            contacts_mm: entry
                .config
                .contacts
                .iter()
                .map(|p| round3(&p.position.coords.into()))
                .collect(),
            contact_normals: entry
                .config
                .contacts
                .iter()
                .map(|p| round3(&[p.normal.x, p.normal.y, p.normal.z]))
                .collect(),
            hull_mm: entry
                .config
                .hull_vertices
                .iter()
                .map(|v| [round_sig(v.x, 6), round_sig(v.y, 6)])
                .collect(),
            margin_mm: round_sig(entry.config.margin, 6),
            area_mm2: round_sig(entry.score.area, 6),
            worst_suction_n: round_sig(entry.score.worst_suction, 6),
            feasible_all_screws: entry.score.feasible_all,
            per_screw,
        });
    }

    // Per-screw force table for the best 2P and best 3P configurations.
    let best_of = |arity: usize| -> Option<&SupportConfig> {
        ranked
            .entries
            .iter()
            .find(|e| e.config.arity() == arity)
            .map(|e| &e.config)
    };
    let table = screw_force_table(
        &setup,
        best_of(2).map(|c| c.contacts.as_slice()),
        best_of(3).map(|c| c.contacts.as_slice()),
        &screws,
        c.statics.table_press,
    )?;

    // Artifacts.
    let mut stage_dumps_csv = Vec::new();
    let mut stage_dumps_ply = Vec::new();
    for set in &run.stages {
        let csv_name = format!("stage_{}.csv", set.stage.name().to_lowercase());
        let ply_name = format!("stage_{}.ply", set.stage.name().to_lowercase());
        write_stage_csv(&artifact_path(&out_dir, &csv_name)?, set)?;
        write_stage_ply(&artifact_path(&out_dir, &ply_name)?, set)?;
        stage_dumps_csv.push(csv_name);
        stage_dumps_ply.push(ply_name);
    }
    write_rejections_csv(&artifact_path(&out_dir, "rejections.csv")?, &run)?;
    write_sweep_csv(&artifact_path(&out_dir, "sweeps.csv")?, &sweep_rows)?;
    write_text(&artifact_path(&out_dir, "table.json")?, &table_to_json(&table))?;

    let feasible_configs = config_reports.iter().filter(|r| r.feasible_all_screws).count();
    let report = PlanReport {
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config_hash: loaded.hash.clone(),
        mesh: mesh_summary(loaded, &props),
        stage_counts: run
            .counts()
            .iter()
            .map(|(stage, count)| StageCount {
                stage: stage.name().to_string(),
                count: *count,
            })
            .collect(),
        first_empty_stage: run.first_empty.map(|s| s.name().to_string()),
        configs: config_reports,
        hull_rejected,
        feasible_configs,
        artifacts: ArtifactIndex {
            report: "report.json".into(),
            table: "table.json".into(),
            sweeps: "sweeps.csv".into(),
            stage_dumps_csv,
            stage_dumps_ply,
            rejections: "rejections.csv".into(),
        },
    };
    write_text(&artifact_path(&out_dir, "report.json")?, &report.to_json())?;

    Ok(PlanOutcome {
        feasible: feasible_configs > 0,
        report,
        out_dir,
    })
}

fn round3(v: &[f64; 3]) -> [f64; 3] {
    [round_sig(v[0], 6), round_sig(v[1], 6), round_sig(v[2], 6)]
}

fn mesh_summary(loaded: &LoadedConfig, props: &ObjectProps) -> MeshSummary {
    let bbox = props.mesh.bbox();
    MeshSummary {
        path: loaded.config.mesh.display().to_string(),
        triangles: props.mesh.triangles.len(),
        degenerate_dropped: props.mesh.degenerate_dropped(),
        watertight: props.mesh.is_watertight(),
        bbox_min: round3(&bbox.min.coords.into()),
        bbox_max: round3(&bbox.max.coords.into()),
        volume_mm3: props.volume.map(|v| round_sig(v, 6)),
        mass_kg: round_sig(props.mass, 6),
        com_mm: round3(&props.com.coords.into()),
    }
}

/// Runs the pipeline through `stage` only and dumps that stage.
pub fn run_filter_stage(loaded: &LoadedConfig, stage: Stage) -> Result<(usize, PathBuf, PipelineRun)> {
    let c = &loaded.config;
    let props = load_object(loaded)?;
    let run = run_pipeline_through(&props.mesh, &props.com, &c.filter, c.neighbor_source, stage)?;
    let set = run.stage(stage).expect("requested stage executed");
    let out_dir = loaded.output_dir();
    let name = format!("stage_{}.csv", stage.name().to_lowercase());
    let path = artifact_path(&out_dir, &name)?;
    write_stage_csv(&path, set)?;
    write_stage_ply(
        &artifact_path(&out_dir, &format!("stage_{}.ply", stage.name().to_lowercase()))?,
        set,
    )?;
    Ok((set.len(), path, run))
}

pub fn read_report(loaded: &LoadedConfig) -> Result<PlanReport> {
    let path = loaded.output_dir().join("report.json");
    let text = std::fs::read_to_string(&path).map_err(|source| Error::UnreadableFile {
        path: path.display().to_string(),
        source,
    })?;
    PlanReport::from_json(&text)
}

fn contacts_from_report(config: &ConfigReport) -> Vec<SamplePoint> {
    config
        .contacts_mm
        .iter()
        .zip(&config.contact_normals)
        .enumerate()
        .map(|(i, (p, n))| SamplePoint {
            position: Point3::from(*p),
            normal: Unit::new_normalize(Vector3::from(*n)),
            ray_cell: (i as u32, 0),
            hit_rank: 0,
        })
        .collect()
}

fn setup_from_report(loaded: &LoadedConfig, report: &PlanReport) -> StaticsSetup {
    let s = &loaded.config.statics;
    let bbox_diag = (Vector3::from(report.mesh.bbox_max) - Vector3::from(report.mesh.bbox_min)).norm();
    StaticsSetup {
        com: Point3::from(report.mesh.com_mm),
        mass: report.mesh.mass_kg,
        gravity: s.gravity,
        vertical_normals: s.vertical_normals,
        strict_paper_moments: s.strict_paper_moments,
        char_len_mm: bbox_diag.max(1.0),
        limits: s.limits(),
    }
}

fn find_config<'a>(report: &'a PlanReport, config_id: &str) -> Result<&'a ConfigReport> {
    report
        .configs
        .iter()
        .find(|c| c.id == config_id)
        .ok_or_else(|| Error::UnknownId(config_id.to_string()))
}

fn find_screw(loaded: &LoadedConfig, screw_id: &str) -> Result<ScrewSpec> {
    loaded
        .config
        .screws
        .iter()
        .find(|s| s.id == screw_id)
        .map(|s| s.to_spec())
        .ok_or_else(|| Error::UnknownId(screw_id.to_string()))
}

/// One solve for a planned configuration at a given press level.
pub fn analyze_config(
    loaded: &LoadedConfig,
    config_id: &str,
    screw_id: &str,
    press: f64,
) -> Result<EquilibriumResult> {
    let report = read_report(loaded)?;
    let config = find_config(&report, config_id)?;
    let screw = find_screw(loaded, screw_id)?;
    let setup = setup_from_report(loaded, &report);
    let contacts = contacts_from_report(config);
    let problem = setup.problem(&contacts, &screw, press)?;
    solve_problem(&problem, &setup.limits)
}

/// Full press sweep for a planned configuration; returns the sweep and the
/// CSV path it was written to.
pub fn sweep_config(
    loaded: &LoadedConfig,
    config_id: &str,
    screw_id: &str,
) -> Result<(SweepResult, PathBuf)> {
    let report = read_report(loaded)?;
    let config = find_config(&report, config_id)?;
    let screw = find_screw(loaded, screw_id)?;
    let setup = setup_from_report(loaded, &report);
    let contacts = contacts_from_report(config);
    let problem = setup.problem(&contacts, &screw, 0.0)?;
    let s = &loaded.config.statics;
    let sweep = sweep_press_force(&problem, s.sweep_start, s.sweep_end, s.sweep_step, &setup.limits)?;
    let mut rows = Vec::new();
    for (level, result) in sweep.press_levels.iter().zip(&sweep.results) {
        for (balloon_index, force) in result.forces.iter().enumerate() {
            rows.push(SweepRow {
                config_id: config_id.to_string(),
                screw_id: screw_id.to_string(),
                press_n: *level,
                balloon_index,
                force_n: *force,
                feasible: result.feasible,
            });
        }
    }
    let name = format!("sweep_{config_id}_{screw_id}.csv");
    let path = artifact_path(&loaded.output_dir(), &name)?;
    write_sweep_csv(&path, &rows)?;
    Ok((sweep, path))
}

/// Dumps useful stage sets for external viewers after a plan run; also used
/// directly by tests.
pub fn stage_sets(run: &PipelineRun) -> Vec<&StageSet> {
    run.stages.iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::PlannerConfig;
    use std::path::Path;

    fn plate_scenario(dir: &Path) -> PathBuf {
        crate::meshgen::plate(200.0, 160.0, 20.0)
            .save_stl(&dir.join("plate.stl"))
            .unwrap();
        let config = r#"
mesh = "plate.stl"
output_dir = "out"
density = 1.0e-6

[statics]
vertical_normals = true

[[screws]]
id = "0"
position = [100.0, 80.0, 20.0]

[[screws]]
id = "1"
position = [150.0, 110.0, 20.0]
"#;
        let path = dir.join("plan.toml");
        std::fs::write(&path, config).unwrap();
        path
    }

    #[test]
    fn plate_plan_produces_feasible_configs_and_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let path = plate_scenario(dir.path());
        let loaded = PlannerConfig::load(&path).unwrap();
        let outcome = run_plan(&loaded).unwrap();
        assert!(outcome.feasible, "plate scenario must yield a feasible config");
        assert!(outcome.report.configs.iter().any(|c| c.arity == 3 && c.feasible_all_screws));
        // Stage counts are monotone.
        let counts: Vec<usize> = outcome.report.stage_counts.iter().map(|s| s.count).collect();
        for w in counts.windows(2) {
            assert!(w[1] <= w[0]);
        }
        // Every artifact named in the report exists and parses.
        let out = outcome.out_dir;
        let report_text = std::fs::read_to_string(out.join(&outcome.report.artifacts.report)).unwrap();
        PlanReport::from_json(&report_text).unwrap();
        let table_text = std::fs::read_to_string(out.join(&outcome.report.artifacts.table)).unwrap();
        serde_json::from_str::<serde_json::Value>(&table_text).unwrap();
        for name in outcome
            .report
            .artifacts
            .stage_dumps_csv
            .iter()
            .chain([&outcome.report.artifacts.sweeps, &outcome.report.artifacts.rejections])
        {
            assert!(out.join(name).exists(), "missing artifact {name}");
        }
        // Stage dump row count equals the reported stage count.
        let p0_rows = std::fs::read_to_string(out.join("stage_p0.csv"))
            .unwrap()
            .lines()
            .count()
            - 1;
        assert_eq!(p0_rows, outcome.report.stage_counts[0].count);
    }

    #[test]
    fn analyze_and_sweep_from_report() {
        let dir = tempfile::tempdir().unwrap();
        let path = plate_scenario(dir.path());
        let loaded = PlannerConfig::load(&path).unwrap();
        let outcome = run_plan(&loaded).unwrap();
        let best = &outcome.report.configs[0];
        let result = analyze_config(&loaded, &best.id, "0", 6.0).unwrap();
        assert_eq!(result.forces.len(), best.arity);
        // Force balance at the analyze level.
        let total: f64 = result.forces.iter().sum();
        let expected = outcome.report.mesh.mass_kg * 9.81 + 6.0;
        assert!((total - expected).abs() < 1e-6);

        let (sweep, csv) = sweep_config(&loaded, &best.id, "0").unwrap();
        assert_eq!(sweep.press_levels.len(), 37);
        let rows = std::fs::read_to_string(csv).unwrap().lines().count() - 1;
        assert_eq!(rows, 37 * best.arity);

        assert!(matches!(
            analyze_config(&loaded, "nope", "0", 0.0),
            Err(Error::UnknownId(_))
        ));
        assert!(matches!(
            analyze_config(&loaded, &best.id, "nope", 0.0),
            Err(Error::UnknownId(_))
        ));
    }

    #[test]
    fn filter_stage_dump_counts() {
        let dir = tempfile::tempdir().unwrap();
        let path = plate_scenario(dir.path());
        let loaded = PlannerConfig::load(&path).unwrap();
        let (count, csv, run) = run_filter_stage(&loaded, Stage::P1).unwrap();
        assert_eq!(run.stages.len(), 2);
        let rows = std::fs::read_to_string(csv).unwrap().lines().count() - 1;
        assert_eq!(rows, count);
        // Lattice oracle: the plate's P1 keeps top and bottom faces.
        let expected = 2 * 101 * 81;
        assert_eq!(count, expected);
    }

    #[test]
    fn plan_is_deterministic() {
        let dir = tempfile::tempdir().unwrap();
        let path = plate_scenario(dir.path());
        let loaded = PlannerConfig::load(&path).unwrap();
        run_plan(&loaded).unwrap();
        let first = std::fs::read(dir.path().join("out/report.json")).unwrap();
        let first_sweeps = std::fs::read(dir.path().join("out/sweeps.csv")).unwrap();
        run_plan(&loaded).unwrap();
        let second = std::fs::read(dir.path().join("out/report.json")).unwrap();
        let second_sweeps = std::fs::read(dir.path().join("out/sweeps.csv")).unwrap();
        assert_eq!(first, second, "report.json must be byte-identical");
        assert_eq!(first_sweeps, second_sweeps, "sweeps.csv must be byte-identical");
    }
}
