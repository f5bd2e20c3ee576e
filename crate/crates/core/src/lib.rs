//! Numerical workbench for null controllability of the 2D Stokes and Navier-Stokes
//! systems by controls with one vanishing component.
//!
//! Module map:
//! - [`grid`], [`weights`]: mesh, regions, the auxiliary function `eta`, time profiles
//!   and the Carleman weight families in log-space
//! - [`stokes`]: MAC implicit Euler forward / adjoint solvers and projection
//! - [`control`]: penalized dual (HUM-type) control computation
//! - [`audit`]: empirical audit of the Carleman / observability inequalities
//! - [`nonlinear`]: Picard linearization for Navier-Stokes and threshold estimation
//! - [`experiment`]: configuration-driven runner behind the `nullctl` binary
//!
//! Every numerical type is generic over [`Real`]; the `*64` aliases below fix `f64`.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod audit;
pub mod banded;
pub mod cg;
pub mod control;
pub mod error;
pub mod experiment;
pub mod field;
pub mod grid;
pub mod io;
pub mod manufactured;
pub mod nonlinear;
pub mod random;
pub mod scalar;
pub mod stokes;
pub mod weights;

pub use error::{Error, Result};
pub use scalar::Real;

pub type Grid64 = grid::Grid<f64>;
pub type GridConfig64 = grid::GridConfig<f64>;
pub type Region64 = grid::Region<f64>;
pub type VelocityField64 = field::VelocityField<f64>;
pub type PressureField64 = field::PressureField<f64>;
pub type StateTrajectory64 = stokes::StateTrajectory<f64>;
pub type StokesSolver64 = stokes::StokesSolver<f64>;
pub type WeightSet64 = weights::WeightSet<f64>;
pub type EtaField64 = weights::EtaField<f64>;
pub type TimeProfile64 = weights::TimeProfile<f64>;
pub type ControlField64 = control::ControlField<f64>;
pub type RunResult64 = control::RunResult<f64>;
pub type AuditReport64 = audit::AuditReport<f64>;
pub type PicardHistory64 = nonlinear::PicardHistory<f64>;
