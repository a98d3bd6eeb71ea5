//! Finite-difference and semi-Lagrangian solvers for backward HJB equations.

mod grid;
mod hamiltonian;
mod implicit;
mod maximize;
mod poly;
mod solve1d;
mod solve2d;
mod surface;

use thiserror::Error;

pub use grid::{AffineEdge, Grid1D, NodeLayout};
pub use hamiltonian::{
    BandSide, BoundaryHamiltonian, CoefficientBounds, HamEval, Hamiltonian, HeatHamiltonian, LinearPart,
    PolicyHamiltonian, ReducedLeaderHamiltonian, Stencil, ZeroHamiltonian,
};
pub use implicit::{solve_hjb_1d_implicit, ImplicitOptions};
pub use maximize::{default_z_box, project_interval, sup_a, sup_quadratic_cost, sup_z, ZSup};
pub use solve1d::{solve_hjb_1d, BoundaryCondition, Field, SolveOptions};
pub use solve2d::{solve_hjb_2d_masked, ControlCoeffs, ControlledDynamics2d, Grid2D, Surface2D};
pub use surface::{SolveStats, ValueSurface};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PdeError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("time step {dt} exceeds the stability limit {limit}")]
    CflViolation { dt: f64, limit: f64 },
    #[error("non-finite value at t={t}, x={x}")]
    NonFinite { t: f64, x: f64 },
    #[error("policy iteration did not settle within {iterations} iterations at t={t}")]
    PolicyIteration { t: f64, iterations: usize },
    #[error("domain has only {active} active nodes at the start level t={t}")]
    MaskCollapsed { t: f64, active: usize },
}
