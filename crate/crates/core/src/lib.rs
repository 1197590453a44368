//! Optimal insurance indemnity for an expected-utility insured when the
//! insurer caps the variance of its risk exposure.
//!
//! The pipeline is: discretize the loss ([`loss_model`]), solve the
//! unconstrained deductible and test the variance bound ([`arrow`]), bracket
//! the expected indemnity ([`bounds`]), then solve the interior contract
//! ([`solver`]). [`oracle`] certifies results by brute force and provides the
//! stochastic-order checks used by [`statics`].

// `!(x > 0.0)` style guards are deliberate: they reject NaN as well
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod arrow;
pub mod bounds;
pub mod error;
pub mod exec;
pub mod loss_model;
pub mod oracle;
pub mod problem;
pub mod root;
pub mod scenario;
pub mod solver;
pub mod statics;
pub mod utility;

pub use arrow::{arrow_deductible, is_variance_slack, phi, ArrowSolution};
pub use bounds::{compute_bracket, two_point_solution, IndemnityBracket};
pub use error::{Error, Result};
pub use exec::Exec;
pub use loss_model::{Family, GridMeasure, LossModel, DEFAULT_GRID_N};
pub use oracle::{brute_solve, brute_solve_with, convex_order_leq, less_downside_risk, stop_loss_order_leq, OracleConfig, upcross_count, CrossingProfile, DiscreteDist, OracleResult};
pub use problem::ContractProblem;
pub use scenario::{Compare, Scenario, Sweep, SweepParameter, Tolerances};
pub use solver::{indemnity_pointwise, MOMENT_TOL, KktReport, Diagnostics, residuals, solve, solve_with, Branch, ContractSolution, Param, Regime, SolverConfig};
pub use statics::{compare_variance, compare_wealth, Check, Comparison, ComparisonReport};
pub use utility::UtilityModel;
