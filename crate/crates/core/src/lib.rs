//! Maximal independent set in a simulated congested clique.
//!
//! The crate provides a graph substrate, a round-synchronous clique engine
//! with bandwidth auditing, the sequential random-order greedy MIS as an
//! oracle, the distributed greedy simulation, a Luby finisher, and an
//! experiment harness.

pub mod clique_mis;
pub mod engine;
pub mod graph;
pub mod greedy;
pub mod harness;
pub mod luby;

pub use clique_mis::{run_algorithm2, Algo2Config, Algo2Error, Algo2Outcome, Algo2Stats, DegreeThreshold};
pub use engine::{Clique, EngineConfig, SimClock, SimError};
pub use graph::{gnp_random, random_regular, Graph, GraphError, VertexId, VertexSubset};
pub use greedy::{greedy_mis, uniform_order, GreedyTrace, VertexOrder};
pub use harness::verify::{verify_mis, MisWitness};
