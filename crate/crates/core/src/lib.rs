//! Clearance-maximizing model predictive steering control.
//!
//! A kinematic bicycle model with first-order steering lag is driven along a
//! reference path by a nonlinear MPC. Besides tracking, the controller
//! rewards lateral clearance to nearby road agents through an auxiliary
//! safety variable, while a softened tube keeps it within the drivable
//! corridor. [`sim`] closes the loop around the controller.

pub mod clearance;
pub mod dynamics;
pub mod problem;
pub mod reference;
pub mod sim;
pub mod solver;
pub mod tube;

pub use clearance::{
    f_lon, f_s, f_s_derivative, select_most_constraining, ClearanceInputs, ObjectClass, ObjectTrack,
    SafetyConfig, SideClearance,
};
pub use dynamics::{rk4_step, rk4_step_with_jacobians, ControlInput, HorizonConfig, ModelParams, VehicleState};
pub use problem::{CostWeights, DecisionVariables, Limits, MpcProblem};
pub use reference::{discretize_reference, lateral_error, Path, ReferencePoint, ReferenceTrajectory};
pub use solver::{solve, warm_start_shift, MpcSolution, Outcome, Solver, SolverConfig, SolverStatus};
pub use tube::{build_tube, Side, TubeBounds};
