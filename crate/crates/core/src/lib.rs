//! Simulation and recurrence classification of time-inhomogeneous random walks
//! built as the difference of two compound Poisson processes whose rates
//! `1/2 +- phi(x, t)` depend on the current position and time.
//!
//! * [`fields`]: drift fields, rate fields and mean-1 jump laws.
//! * [`simulator`]: exact event-driven paths, compensators, second-moment check.
//! * [`classifier`]: the `c / (4x)` drift criterion, the reduction to a
//!   birth-death chain and two chain criteria.
//! * [`experiments`]: Monte Carlo return statistics and occupancy balance.

pub mod classifier;
pub mod error;
pub mod experiments;
pub mod fields;
pub mod rng;
pub mod simulator;

pub use classifier::{
    bd_series_criterion, classify_bilateral, classify_mv_critical, classify_theorem1, discretize_to_bd, ratio_test,
    BDChain, ChainCriterion, Classification, Method, MvCriticalReport, Verdict,
};
pub use error::{Error, Result};
pub use experiments::{
    balance_residual, estimate_occupancy, run_recurrence_experiment, ExperimentReport, ExperimentRun,
    OccupancyEstimate, RecurrenceExperiment,
};
pub use fields::{eval_phi, eval_rates, sample_jump, DriftFamily, DriftField, DriftTable, JumpLaw, RateField};
pub use simulator::{
    compensator_ensemble, compensator_literal, simulate_walk, wald_second_moment_check, CompensatorReport, Event, Mark,
    Trajectory, WalkModel,
};

/// Crate version, embedded in every output record.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
