//! Hybrid Bayesian network inference: exact clique-tree propagation for
//! discrete networks and sample-based propagation of density-tree potentials
//! for networks mixing discrete and continuous variables.

pub mod approx;
pub mod clique_tree;
pub mod density_tree;
pub mod error;
pub mod evaluation;
pub mod exact;
pub mod gmm;
pub mod network;
pub mod rng;
pub mod sampler;

pub use clique_tree::{build_clique_tree, CliqueTree};
pub use error::{Error, Result};
pub use exact::{brute_force_joint, shafer_shenoy_propagate, TableFactor};
pub use network::{Cpd, CpdBody, Domain, Evidence, HybridNetwork, Value, VarId, Variable};
