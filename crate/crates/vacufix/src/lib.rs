//! Planning library for modular vacuum balloon-hand fixtures.
//!
//! Given a triangle mesh of an object and its screw locations, the pipeline
//! finds where suction modules should support the object so it stays
//! statically stable while a screwdriver presses on each screw:
//!
//! 1. [`filter`] samples the surface with vertical rays and filters the
//!    candidates by inclination, visibility from below, height relative to
//!    the center of mass, suction-ring contact completeness, and vertical
//!    structural continuity (sets P0 through P4).
//! 2. [`planner`] partitions the plane into spacing cells, enumerates
//!    two- and three-point support configurations, and applies the
//!    convex-hull center-of-mass inclusion test with circular footprints.
//! 3. [`statics`] solves the per-screw static equilibrium system, classifies
//!    suction feasibility against the balloon limit, and sweeps press force
//!    to find each configuration's critical load.
//! 4. [`plan`] wires the stages together and emits reports, tables, sweep
//!    curves, and stage dumps; [`config`] holds every threshold.
//!
//! Geometry is in millimeters, forces in newtons, masses in kilograms.

pub mod bvh;
pub mod config;
pub mod error;
pub mod filter;
pub mod kdtree;
pub mod mesh;
pub mod meshgen;
pub mod plan;
pub mod planner;
pub mod report;
pub mod statics;
pub mod stl;

pub use error::{Error, Result};
