//! Verification of two-level self-adaptive systems.
//!
//! A system pairs a behaviour machine with a structure machine whose states
//! constrain the behaviour through formulas over observables. The crate
//! builds the flat transition system, computes the weak and strong
//! adaptability relations by fixpoint refinement, and decides the same
//! properties with a CTL model checker so the two methods can be compared.

pub mod adapt;
pub mod bundled;
pub mod corpus;
pub mod ctl;
pub mod exec;
pub mod flat;
pub mod formula;
pub mod ingest;
pub mod model;
pub mod syntax;

pub use exec::Exec;
pub use model::{BStateId, SBSystem, SStateId, STransId};
