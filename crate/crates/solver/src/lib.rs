//! Newton iteration and sparse linear solvers.

mod linear;
pub mod multifrontal;
mod newton;

pub use linear::{ilu0, Backend, Ilu0, LinearSolver};
pub use newton::{newton_solve, NewtonConfig, NewtonReport, NonlinearSystem};
