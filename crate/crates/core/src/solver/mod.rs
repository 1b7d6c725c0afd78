//! Interior-point solver for smooth convex programs with a linear objective.

mod barrier;
mod newton;
mod program;

pub use barrier::{find_feasible, solve, solve_with, BarrierOptions, Feasibility, SolveReport, SolveStatus, MIN_SLACK};
pub use program::{Atom, Constraint, QuadForm, SmoothConvexProgram, PSD_TOL};
