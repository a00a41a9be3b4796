//! Round-accurate simulation of distributed metric facility location on the
//! complete bipartite facility/client network under the CONGEST model.
//!
//! The pipeline computes characteristic radii, partitions facilities into
//! radius classes, builds the witness-distributed overlay graph, computes a
//! 2-ruling set of it by a random walk over sampling probabilities (using
//! hashing-based dissemination of duplicated adjacency messages), and opens
//! facilities from the ruling set. Sequential oracles (Mettu–Plaxton greedy,
//! exhaustive optimum) anchor every distributed result.

pub mod congest;
pub mod exact;
pub mod experiment;
pub mod facloc;
pub mod instance;
pub mod mdd;
pub mod par;
pub mod rational;
pub mod rulingset;

pub use instance::{Instance, InstanceError, RadiusProfile, Solution};
pub use par::Parallelism;
pub use rational::Rational;
