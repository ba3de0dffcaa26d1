//! Command-line planner for vacuum balloon-hand fixturing.
//!
//! Verbs: `plan` (full pipeline + artifacts), `filter` (run through one
//! stage and dump it), `analyze` (one equilibrium solve), `sweep` (press
//! sweep for one configuration and screw).
//!
//! Exit codes: 0 success (plan: at least one feasible configuration),
//! 2 plan found no feasible configuration, 1 any error.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use nalgebra::{Point3, Unit, Vector3};

use vacufix::config::{LoadedConfig, PlannerConfig};
use vacufix::error::Error;
use vacufix::filter::{SamplePoint, Stage};
use vacufix::plan::{analyze_config, load_object, run_filter_stage, run_plan, sweep_config};
use vacufix::statics::{solve_problem, EquilibriumProblem, EquilibriumResult, ScrewSpec};

#[derive(Parser)]
#[command(name = "vacufix", version, about = "Stability-aware vacuum fixture planning")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the full pipeline and write the report, table, sweeps, and
    /// stage dumps.
    Plan {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run the candidate filters through one stage and dump it.
    Filter {
        #[arg(long)]
        config: PathBuf,
        /// P0, P1, P2, Psupport, P3, or P4.
        #[arg(long)]
        stage: String,
    },
    /// Solve one equilibrium: either a planned configuration by id or an
    /// inline contact set.
    Analyze {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        config_id: Option<String>,
        #[arg(long)]
        screw_id: Option<String>,
        /// N
        #[arg(long, default_value_t = 0.0, allow_negative_numbers = true)]
        press: f64,
        /// Inline contacts "x,y,z;x,y,z[;x,y,z]" (mm); uses the config's
        /// object mass and center of mass.
        #[arg(long)]
        contacts: Option<String>,
        /// Inline screw position "x,y,z" (mm); defaults to the center of
        /// mass (zero press moment) when no screw id is given.
        #[arg(long)]
        screw_pos: Option<String>,
    },
    /// Press-force sweep for one planned configuration and screw.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        config_id: String,
        #[arg(long)]
        screw_id: String,
    },
}

fn main() -> ExitCode {
    if let Ok(threads) = std::env::var("VACUFIX_THREADS") {
        if let Ok(n) = threads.parse::<usize>() {
            let _ = rayon::ThreadPoolBuilder::new().num_threads(n.max(1)).build_global();
        }
    }
    let cli = Cli::parse();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn run(cli: Cli) -> Result<ExitCode, Error> {
    match cli.command {
        Command::Plan { config } => {
            let loaded = PlannerConfig::load(&config)?;
            let outcome = run_plan(&loaded)?;
            for sc in &outcome.report.stage_counts {
                println!("stage {} count {}", sc.stage, sc.count);
            }
            if let Some(stage) = &outcome.report.first_empty_stage {
                println!("first-empty-stage {stage}");
            }
            println!(
                "configs {} feasible {} hull-rejected {}",
                outcome.report.configs.len(),
                outcome.report.feasible_configs,
                outcome.report.hull_rejected
            );
            if let Some(best) = outcome.report.configs.first() {
                println!(
                    "best {} margin {}mm worst-suction {}N",
                    best.id, best.margin_mm, best.worst_suction_n
                );
            }
            println!("report {}", outcome.out_dir.join("report.json").display());
            Ok(if outcome.feasible {
                ExitCode::from(0)
            } else {
                println!("no feasible configuration");
                ExitCode::from(2)
            })
        }
        Command::Filter { config, stage } => {
            let loaded = PlannerConfig::load(&config)?;
            let stage = Stage::parse(&stage)
                .ok_or_else(|| Error::config("stage", format!("unknown stage `{stage}`")))?;
            let (count, path, _run) = run_filter_stage(&loaded, stage)?;
            println!("stage {} count {} dump {}", stage.name(), count, path.display());
            Ok(ExitCode::from(0))
        }
        Command::Analyze {
            config,
            config_id,
            screw_id,
            press,
            contacts,
            screw_pos,
        } => {
            if press < 0.0 {
                return Err(Error::config("press", format!("must be non-negative, got {press}")));
            }
            let loaded = PlannerConfig::load(&config)?;
            let result = match (&contacts, &config_id) {
                (Some(spec), _) => analyze_inline(&loaded, spec, screw_id.as_deref(), screw_pos.as_deref(), press)?,
                (None, Some(id)) => {
                    let screw_id = screw_id.as_ref().ok_or_else(|| {
                        Error::config("screw_id", "required when analyzing a planned configuration")
                    })?;
                    analyze_config(&loaded, id, screw_id, press)?
                }
                (None, None) => {
                    return Err(Error::config(
                        "config_id",
                        "give either --config-id or inline --contacts",
                    ))
                }
            };
            print_result(&result, press);
            Ok(ExitCode::from(0))
        }
        Command::Sweep {
            config,
            config_id,
            screw_id,
        } => {
            let loaded = PlannerConfig::load(&config)?;
            let (sweep, csv) = sweep_config(&loaded, &config_id, &screw_id)?;
            match sweep.critical_press {
                Some(p) => println!("critical press {p} N"),
                None => println!(
                    "stable through {} N",
                    sweep.press_levels.last().copied().unwrap_or(0.0)
                ),
            }
            println!("sweep {}", csv.display());
            Ok(ExitCode::from(0))
        }
    }
}

fn analyze_inline(
    loaded: &LoadedConfig,
    contacts_spec: &str,
    screw_id: Option<&str>,
    screw_pos: Option<&str>,
    press: f64,
) -> Result<EquilibriumResult, Error> {
    let props = load_object(loaded)?;
    let contacts: Vec<SamplePoint> = parse_points(contacts_spec)?
        .into_iter()
        .enumerate()
        .map(|(i, position)| SamplePoint {
            position,
            normal: Unit::new_unchecked(Vector3::z()),
            ray_cell: (i as u32, 0),
            hit_rank: 0,
        })
        .collect();
    let screw = match (screw_id, screw_pos) {
        (Some(id), _) => loaded
            .config
            .screws
            .iter()
            .find(|s| s.id == id)
            .map(|s| s.to_spec())
            .ok_or_else(|| Error::UnknownId(id.to_string()))?,
        (None, Some(pos)) => {
            let p = parse_points(pos)?;
            let p = p
                .first()
                .copied()
                .ok_or_else(|| Error::config("screw_pos", "expected x,y,z"))?;
            ScrewSpec::new("inline", p)
        }
        (None, None) => ScrewSpec::new("com", props.com),
    };
    let s = &loaded.config.statics;
    let mut problem = EquilibriumProblem::new(
        contacts.iter().map(|c| c.position).collect(),
        contacts.iter().map(|c| c.normal).collect(),
        props.com,
        props.mass,
        screw,
        press,
    )?;
    problem.gravity = s.gravity;
    problem.strict_paper_moments = s.strict_paper_moments;
    problem.char_len_mm = props.mesh.bbox().diagonal().max(1.0);
    solve_problem(&problem, &s.limits())
}

fn parse_points(spec: &str) -> Result<Vec<Point3<f64>>, Error> {
    spec.split(';')
        .filter(|chunk| !chunk.trim().is_empty())
        .map(|chunk| {
            let coords: Vec<f64> = chunk
                .split(',')
                .map(|t| t.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| Error::config("contacts", format!("bad coordinate in `{chunk}`: {e}")))?;
            if coords.len() != 3 {
                return Err(Error::config(
                    "contacts",
                    format!("expected x,y,z per point, got `{chunk}`"),
                ));
            }
            Ok(Point3::new(coords[0], coords[1], coords[2]))
        })
        .collect()
}

fn print_result(result: &EquilibriumResult, press: f64) {
    let doc = serde_json::json!({
        "press_n": press,
        "forces_n": result.forces,
        "residual": result.residual,
        "feasible": result.feasible,
        "limiting_contact": result.limiting_contact,
        "suction_demand_n": result.suction_demand(),
    });
    println!("{}", serde_json::to_string_pretty(&doc).expect("json"));
}
