//! Deterministic multi-agent coverage simulation with adversarial
//! communication and a first-order theory-of-mind trust defense.
//!
//! * [`env`]: grid-world coverage environment.
//! * [`policy`]: exact value oracle, greedy/softmax cooperative policies and
//!   self-interested behaviors.
//! * [`comms`]: topology, message broadcast and falsification strategies.
//! * [`trust`]: consistency checks, tallies, belief updates and gating.
//! * [`metrics`]: confusion counts, F1 and episode summaries.
//! * [`scenario`]: configuration files, seeded batches and CSV/JSON output.

pub mod comms;
pub mod env;
pub mod exec;
pub mod metrics;
pub mod policy;
pub mod rng;
pub mod scenario;
pub mod trust;

pub use exec::Execution;
