//! Level-weighted Markov chains on succinctly represented binary trees.
//!
//! A subtree `S` of the perfect binary tree of height `n` carries the law
//! `π(u) ∝ 2^(n − depth u)`. A simple level-balanced chain (parent 1/2, each
//! child 1/4) has `π` as its stationary distribution and mixes in time
//! polynomial in `n`. The normalizing factors of the pruned trees
//! `S_0, …, S_n` determine `|S|` exactly, which yields an additive-error
//! size estimator.
//!
//! Modules:
//! - [`tree`], [`cnf`], [`descriptor`]: instances and exact enumeration
//! - [`chain`], [`rng`]: the kernel, burn-in rule and simulation
//! - [`exact`]: exact rational oracles (stationarity, mixing, conductance)
//! - [`estimate`]: the estimators and baselines

pub mod addr;
pub mod chain;
pub mod cnf;
pub mod descriptor;
pub mod error;
pub mod estimate;
pub mod exact;
pub mod rng;
pub mod tree;

pub use addr::NodeAddr;
pub use error::{Error, Result};
pub use rng::RandomStream;
pub use tree::{ExplicitTree, SuccinctTree};
