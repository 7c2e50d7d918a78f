//! Multi-stage stochastic multi-item, multi-echelon capacitated lot sizing
//! with setup carry-over.
//!
//! The crate covers problem data ([`instance`]), scenario trees
//! ([`scenario`]), the compact, implicit, partial and per-path MILP models
//! ([`model`]), an exact built-in MILP solver ([`solver`]), progressive
//! hedging ([`progressive_hedging`]), plan evaluation and reporting
//! ([`evaluation`]) and a benchmark-suite generator ([`instance_gen`]).

pub mod evaluation;
pub mod instance;
pub mod instance_gen;
pub mod model;
pub mod parallel;
pub mod progressive_hedging;
pub mod scenario;
pub mod solver;

pub use instance::{Instance, InstanceError};
pub use model::{MilpModel, SetupPlan, VariableRef};
pub use parallel::Execution;
pub use scenario::{PartialTree, ScenarioTree};
pub use solver::{SolveResult, SolveStatus, SolverConfig};
