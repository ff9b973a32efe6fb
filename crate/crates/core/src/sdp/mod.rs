//! Small dense semidefinite programming: affine LMI programs, equality
//! elimination and a barrier interior-point solver.

pub mod eliminate;
pub mod program;
pub mod solver;

pub use eliminate::{eliminate_equalities, AffineLift, EliminatedProgram};
pub use program::{
    LinearEq, LmiConstraint, LmiProgram, MatExpr, MatVar, VarShape, DEFAULT_STRICTNESS,
};
pub use solver::{sdp_solve, sdp_solve_with, SdpSolution, SdpStatus, SolverOptions};
