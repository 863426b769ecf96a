//! Addresses of nodes in the perfect binary tree.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Deepest level an address can encode.
pub const MAX_DEPTH: u32 = 126;

/// A root-to-node path in the perfect binary tree (`0` = left, `1` = right).
///
/// Stored as a heap index: the root is `1`, and the children of `k` are
/// `2k` and `2k + 1`. The path bits are the binary digits of the index after
/// its leading one, so ordering addresses by index orders them by depth and
/// then left to right.
#[derive(Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeAddr(u128);

impl NodeAddr {
    pub const ROOT: NodeAddr = NodeAddr(1);

    pub fn root() -> Self {
        Self::ROOT
    }

    /// Builds an address from its heap index (`1` is the root).
    pub fn from_heap_index(index: u128) -> Result<Self> {
        if index == 0 || 127 - index.leading_zeros() > MAX_DEPTH {
            return Err(Error::InvalidParameter(format!(
                "heap index {index} does not encode an address"
            )));
        }
        Ok(NodeAddr(index))
    }

    pub fn from_bits<I: IntoIterator<Item = bool>>(bits: I) -> Result<Self> {
        let mut addr = Self::ROOT;
        for bit in bits {
            if addr.depth() == MAX_DEPTH {
                return Err(Error::InvalidParameter(format!(
                    "paths deeper than {MAX_DEPTH} are not supported"
                )));
            }
            addr = addr.child(bit as u8);
        }
        Ok(addr)
    }

    pub fn heap_index(self) -> u128 {
        self.0
    }

    pub fn depth(self) -> u32 {
        127 - self.0.leading_zeros()
    }

    pub fn is_root(self) -> bool {
        self.0 == 1
    }

    pub fn parent(self) -> Option<NodeAddr> {
        (!self.is_root()).then(|| NodeAddr(self.0 >> 1))
    }

    /// Child in direction `bit` (0 or 1). The caller keeps depth below [`MAX_DEPTH`].
    pub fn child(self, bit: u8) -> NodeAddr {
        debug_assert!(bit < 2 && self.depth() < MAX_DEPTH);
        NodeAddr((self.0 << 1) | bit as u128)
    }

    /// Bit `j` of the path, counted from the root. Requires `j < depth`.
    pub fn bit(self, j: u32) -> bool {
        let depth = self.depth();
        debug_assert!(j < depth);
        (self.0 >> (depth - 1 - j)) & 1 == 1
    }

    pub fn bits(self) -> impl Iterator<Item = bool> {
        (0..self.depth()).map(move |j| self.bit(j))
    }

    /// The ancestor of this node at depth `d` (itself when `d == depth`).
    pub fn ancestor_at(self, d: u32) -> NodeAddr {
        debug_assert!(d <= self.depth());
        NodeAddr(self.0 >> (self.depth() - d))
    }
}

impl fmt::Display for NodeAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for bit in self.bits() {
            f.write_str(if bit { "1" } else { "0" })?;
        }
        Ok(())
    }
}

impl fmt::Debug for NodeAddr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "NodeAddr(\"{self}\")")
    }
}

impl FromStr for NodeAddr {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bits = s
            .chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                other => Err(Error::InvalidParameter(format!(
                    "address {s:?} contains {other:?}; only 0 and 1 are allowed"
                ))),
            })
            .collect::<Result<Vec<_>>>()?;
        NodeAddr::from_bits(bits)
    }
}

impl Serialize for NodeAddr {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for NodeAddr {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}
