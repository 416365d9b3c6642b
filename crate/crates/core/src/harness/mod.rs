//! Oracles, shipped cases, scenario sampling, and the run entry points used
//! by the CLI.

pub mod brute;
pub mod gen;
pub mod shipped;

mod oracles;
mod runner;
mod sampling;

pub use oracles::{oracle_joint, oracle_robust_enum, JointSolution};
pub use runner::{run_check, run_oracle, run_sample, run_solve, CheckLine, ENUMERATION_CAP};
pub use sampling::{sample_and_compare, SampleOutcome};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("cross-check mismatch in {what}: {lhs} vs {rhs} (relative gap {gap:.3e})")]
    CrossCheck {
        what: String,
        lhs: f64,
        rhs: f64,
        gap: f64,
    },
    #[error("{coords} uncertain coordinates exceed the enumeration cap {cap}")]
    EnumerationCap { coords: usize, cap: usize },
    #[error("robust run required before sampling (no tie-line schedule)")]
    MissingRobustSchedule,
}
