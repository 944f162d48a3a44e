//! Simultaneous density and fiber-angle topology optimization for orthotropic
//! plane-stress structures.
//!
//! The crate is `no_std` (it needs `alloc`). It covers the full numerical
//! pipeline: the orthotropic constitutive law and its angle derivatives, a
//! structured Q4 finite element model with a banded direct solver, the
//! compliance objective, clustered P-norm stress constraints in the principal
//! material directions with adjoint sensitivities, the sensitivity filter,
//! the method of moving asymptotes and the outer optimization loop.
//!
//! File formats, configuration and the command-line driver live in the
//! `orthotopo` crate.

#![no_std]
#![warn(missing_debug_implementations, rust_2018_idioms)]
#![allow(clippy::needless_range_loop, clippy::neg_cmp_op_on_partial_ord)]

extern crate alloc;

mod banded;
pub mod compliance;
mod error;
pub mod fem;
pub mod filter;
pub mod gradcheck;
pub mod material;
pub mod math;
pub mod mesh;
pub mod mma;
pub mod optimize;
pub mod stress;

pub use banded::BandedCholesky;
pub use compliance::{compliance_and_gradients, ObjectiveResult};
pub use error::{Error, Result};
pub use fem::{FeModel, SolvedState, StressField};
pub use filter::FilterKernel;
pub use material::OrthotropicMaterial;
pub use math::Matrix3;
pub use mesh::{BoundaryConditions, DesignState, StructuredMesh};
pub use mma::{MmaSettings, MmaState};
pub use optimize::{
    run_optimization, IterationRecord, OptimizationResult, OptimizationSettings, Problem,
    StressSettings, TerminationStatus,
};
pub use stress::{ClusterSet, ConstraintBlock, Direction};

/// Density floor used inside the stiffness interpolation only.
pub const RHO_FLOOR: f64 = 1e-4;
