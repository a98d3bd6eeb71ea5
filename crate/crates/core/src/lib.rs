//! Leader-follower stochastic differential game with linear state dynamics
//! and quadratic effort costs: closed-form equilibria for the open-loop,
//! feedback and memoryless structures, and a numerical closed-loop solver
//! built on a reduced HJB equation with a state-dependent target constraint.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod cli;
pub mod closed_form;
pub mod io;
pub mod model;
pub mod pde;
pub mod simulate;
pub mod target;
