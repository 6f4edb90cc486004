//! Active thermal cloaking as a PDE-constrained optimal control problem.
//!
//! The crate assembles P1 finite-element operators for the heat equation on a
//! square domain with an obstacle, solves the steady one-shot optimality
//! system and the transient problem (Crank–Nicolson with a preconditioned
//! gradient iteration), and builds POD-Galerkin reduced models for fast
//! parametric re-solves.

// Negated comparisons reject NaN along with out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod dense;
pub mod error;
pub mod export;
pub mod fem;
pub mod mesh;
pub mod metrics;
pub mod params;
pub mod problem;
pub mod rom;
pub mod scenarios;
pub mod sparse;
pub mod steady;
pub mod transient;

pub use error::{CloakError, Result};
pub use fem::FemOperators;
pub use params::{ControlWeights, ParamBox, ScenarioParams};
pub use problem::Problem;
pub use steady::{solve_steady, SteadySolution};
pub use transient::{solve_transient_ocp, DirectionRule, SolverOptions, TimeGrid, Trajectory};
