//! Verification oracles and batch experiment driver.

pub mod suite;
pub mod verify;

pub use suite::{run_suite, ExperimentSpec, GraphFamily, Report, RunRecord, Suite};
pub use verify::{brute_force_all_mis, verify_mis, MisWitness};
