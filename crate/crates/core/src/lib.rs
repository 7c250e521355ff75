//! Optimal terminal wealth and replicating strategies for the equity holder
//! of a participating life-insurance contract.

// `!(a < b)` is how NaN gets rejected in range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod concavify;
pub mod contract;
pub mod dynamics;
pub mod error;
pub mod market;
pub mod normal;
pub mod preferences;
pub mod profile;
pub mod quad;
mod serde_f64;
pub mod solver;
pub mod verify;

pub use concavify::{
    classify, tangency_point, upsilon, Branch, CaseClass, Classification, Thresholds,
};
pub use contract::{ContractKind, ContractParams};
pub use dynamics::{
    simulate_paths, strategy_at, strategy_at_fd, wealth_at, Replicator, SimulationReport,
    StateSnapshot,
};
pub use error::{Error, Result};
pub use market::{MarketParams, StatePriceLaw};
pub use preferences::{Crra, MortalityMix, PreferenceSpec, Utility};
pub use profile::{PowerForm, SegmentKind, WealthProfile};
pub use solver::{lambda2, solve, ConstraintSpec, Diagnostics, LambdaProfile, Problem, Solution};
pub use verify::{
    brute_force_argmax, competitor_suite, dominance_point, evaluation_grid,
    expected_utility_quadrature, lagrangian, mc_expected_utility, oracle_gap, tamper_breakpoints,
    CompetitorResult, Estimate, OracleReport, VerifyConfig,
};
