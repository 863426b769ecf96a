use thiserror::Error;

use crate::addr::NodeAddr;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("address {addr} has depth {depth}, beyond the level budget {budget}")]
    OutOfRange {
        addr: NodeAddr,
        depth: u32,
        budget: u32,
    },

    #[error("address {0} is not a node of the tree")]
    NotInTree(NodeAddr),

    #[error("{what} exceeded the cap of {cap} (stopped at {partial})")]
    CapExceeded {
        what: &'static str,
        cap: u64,
        partial: u64,
    },

    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },

    #[error("{0}")]
    Io(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("invalid tree: {0}")]
    InvalidTree(String),

    #[error("invalid profile: {0}")]
    InvalidProfile(String),

    #[error("inconsistent profile: level count r_{level} = {value} is negative")]
    InconsistentProfile { level: usize, value: String },

    #[error("degenerate input: {0}")]
    Degenerate(String),

    #[error("estimator produced no root hits in any batch; increase the sample size")]
    NoRootSamples,
}
