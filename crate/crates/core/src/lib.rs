//! Passive, interruptible exact sampling for finite Markov chains.
//!
//! The crate watches `n` synchronized copies of an `n`-state chain through a
//! read-only [`EnsembleSource`] and returns an arborescence distributed
//! exactly according to the chain's tree distribution. The root of that tree
//! is an exact draw from the stationary distribution.
//!
//! Alongside the samplers live the exact oracles used to check them:
//! arborescence enumeration, matrix-tree determinants, a direct stationary
//! linear solve, and chi-square machinery for the statistical harness.
//!
//! States are 0-based inside the Rust API. Every serialized form (chain spec
//! files, canonical tree strings, JSON outputs) uses 1-based labels.

pub mod arborescence;
pub mod chain;
pub mod chain_file;
pub mod ensemble;
mod error;
pub mod rng;
pub mod sampler;
pub mod stats;
pub mod verify;

pub use arborescence::{
    canonical_decode, canonical_encode, enumerate_arborescences, matrix_tree_root_weight,
    tree_distribution, tree_theorem_stationary, tree_weight, Arborescence, TreeDistribution,
    WeightedTree, DEFAULT_ENUMERATION_CAP,
};
pub use chain::{
    averaged_matrix, stationary_solve, step, validate, validate_rows, Distribution,
    TransitionMatrix, ValidationReport, DEFAULT_ROW_TOLERANCE,
};
pub use ensemble::{lift_two_state, make_ensemble_source, EnsembleSource, SimulatedEnsemble};
pub use error::{Error, Result};
pub use rng::RngStream;
pub use sampler::{
    detect_general, detect_restricted, replicate, run_general, run_restricted, BlockWindow,
    EventTrace, InitPolicy, OffsetVector, Replication, SampleResult, SamplerConfig, SamplerMode,
};
