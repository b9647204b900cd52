//! Stability regions for EV charging on a line distribution feeder.
//!
//! The crate compares two load-flow models of a radial line with `N`
//! charging stations: the nonlinear Distflow recursion and its linearized
//! counterpart. For each model it computes the maximal uniform arrival rate
//! at which the voltage-drop constraint can still be met, the scaled limit
//! of that rate as `N` grows, and validates both against a continuous-time
//! Markov chain simulation of the charging queues.
//!
//! All public vectors use the relabeled orientation: index `0` is the
//! station farthest from the substation, index `N - 1` the one adjacent to
//! it. See [`powerflow::PowerAllocation::from_physical_order`] for the
//! conversion.

// NaN-rejecting guards are written as negated comparisons on purpose.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod allocator;
pub mod error;
pub mod powerflow;
pub mod simulator;
pub mod specfun;
pub mod stability;

pub use allocator::{alpha_fair_distflow, alpha_fair_lindist, allocate, FairnessSpec, QueueState};
pub use error::{Error, Result};
pub use powerflow::{
    distflow_double_sum, distflow_from_root, distflow_gradient, distflow_sensitivity, distflow_voltages,
    feasible, lindist_squared_voltages, Feasibility, FlowModel, LinDistProfile, NetworkConfig, PowerAllocation,
    VoltageProfile,
};
pub use simulator::{simulate, stability_probe, Classification, ProbeOptions, ProbeResult, SimConfig, SimReport};
pub use stability::{
    continuum_voltage, convergence_report, lambda_dist, lambda_dist_critical, lambda_lin, lambda_lin_critical,
    newton_solve_a, ratio_p, ConvergenceReport, NewtonOptions, NewtonTrace,
};
