//! 2D finite-element phase-field solver for brittle fatigue with an adaptive
//! cycle-jump acceleration engine.
//!
//! The crate is organized along the pipeline of a fatigue computation:
//!
//! - [`mesh`]: structured quadrilateral meshes for the preset geometries
//!   (CT specimen, pull strip, perforated plate, plain rectangle)
//! - [`model`]: constitutive content (degradation, AT1/AT2 dissipation,
//!   energy splits, fatigue history and degradation)
//! - [`sparse`]: skyline LDL^T direct solver with RCM ordering
//! - [`fem`]: bilinear quad elements, assembly of the displacement and
//!   damage sub-problems, Newton solves
//! - [`cycle`]: load-cycle discretization and the staggered cycle solver
//! - [`crack`]: crack metrology (discrete, interpolated and smeared lengths)
//! - [`acj`]: the adaptive cycle-jump engine plus FCJ/ECJ baselines
//! - [`profile1d`]: 1D localization profiles, the irreversible envelope and
//!   the correction-factor calibration harness
//! - [`report`]: run configuration, trace persistence, comparison metrics

pub mod acj;
pub mod crack;
pub mod cycle;
pub mod error;
pub mod fem;
pub mod mesh;
pub mod model;
pub mod profile1d;
pub mod report;
pub mod sparse;

pub use error::Error;
//TEMP pub use mesh::{GeometryPreset, Mesh};
//TEMP2 pub use model::{Dissipation, FatigueParams, Material, Plane, Split};
//TEMP3 pub use cycle::{CycleRecord, LoadProgram, SystemState};
//TEMP4 pub use acj::{AcjSettings, JumpDecision, JumpOutcome, Stage};
//TEMP5 pub use crack::{CorrectionTable, CrackMeasure, SmearedConfig};
