//! Direction finding with partly calibrated distributed arrays from a single
//! composite snapshot.
//!
//! The pipeline is: stack the per-subarray snapshots into `X`
//! ([`array_model`]), separate the sources blindly with JADE ([`jade`]),
//! read the inter-subarray phase offsets off the separated rows and estimate
//! each direction ([`estimators`]). [`orthogonality`] holds the statistics
//! that say when separation can work, and [`harness`] runs seeded
//! Monte-Carlo experiments.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // negated comparisons reject NaN

pub mod array_model;
pub mod error;
pub mod estimators;
pub mod harness;
pub mod jade;
pub mod linalg;
pub mod orthogonality;

pub use array_model::{
    build_geometry, synthesize, ArrayGeometry, GeometrySpec, Layout, MeasurementMatrix, SourceScenario,
    SourceSignalMatrix,
};
pub use error::{Error, Result};
pub use estimators::{bss_mf, bss_nls, estimate_phase_offsets, match_sources, DoaEstimate, Grid, NlsOptions, PhaseOffsetEstimate};
pub use harness::{monte_carlo, orthogonality_experiment, EstimatorKind, MonteCarloReport, SweepAxis, TrialConfig};
pub use jade::{jade_separate, JointDiagOptions, SeparationResult};
