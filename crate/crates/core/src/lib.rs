//! Morning-commute equilibria for a bi-modal corridor with a highway
//! bottleneck feeding two curbside bottlenecks: ride-hailing drop-off (RV)
//! and the private-vehicle main road (PV), coupled by queue spillover.
//!
//! Time is in hours relative to the preferred arrival time; rates are per hour.

// `!(x > 0.0)` style guards reject NaN along with the failing range.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod classify;
pub mod curve;
pub mod late;
pub mod metrics;
pub mod oracle;
pub mod params;
pub mod pricing;
pub mod propagate;
pub mod solver;
pub mod sweep;

pub use classify::{
    classify, classify_utilization, initial_phase_regime, Regime, ScenarioId, UtilizationClass,
};
pub use curve::{DepartureProfile, PiecewiseCurve, StepFunction};
pub use late::{solve_l7, solve_late, LateError, LateScenario, LateSolution};
pub use metrics::{
    compare_uni_bi, metrics, metrics_priced, metrics_simulated, pricing_gain, verify_equilibrium,
    verify_optimum, Equilibrium, MetricsReport, Tolerances, VerificationReport,
};
pub use oracle::{experienced_cost, simulate, OracleError, SimulationResult};
pub use params::{build_parameters, fixed_cost_rv, Mode, ModelParams, RawParams, Spillover, ValidationError};
pub use pricing::{
    fee_at, optimal_pricing, optimal_pricing_late, social_optimum_cost, PricingError, PricingScheme,
};
pub use propagate::{propagate, Curves, Propagation};
pub use solver::{
    solve, solve_overlapping, solve_separated, solve_single_mode, solve_unchecked, EquilibriumSolution,
    SolveError,
};
