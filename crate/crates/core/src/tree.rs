//! Succinctly represented subtrees of the perfect binary tree.
//!
//! An instance is a level budget `n` plus a membership predicate over
//! addresses of depth at most `n`. Valid instances contain the root and are
//! prefix-closed; the generators here guarantee both, and
//! [`validate_prefix_closed`] checks arbitrary predicates.

use std::collections::BTreeSet;
use std::fmt;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::addr::{NodeAddr, MAX_DEPTH};
use crate::error::{Error, Result};

pub trait SuccinctTree: Send + Sync {
    /// Deepest level the predicate is defined on.
    fn level_budget(&self) -> u32;

    /// Raw membership predicate. Only called with `depth(addr) <= level_budget()`.
    fn member(&self, addr: NodeAddr) -> bool;

    fn label(&self) -> String;

    /// Checked membership query.
    fn contains(&self, addr: NodeAddr) -> Result<bool> {
        check_depth(addr, self.level_budget())?;
        Ok(self.member(addr))
    }

    /// Whether the child of `addr` in direction `bit` exists in the tree.
    /// Assumes `addr` is itself a member.
    fn has_child(&self, addr: NodeAddr, bit: u8) -> bool {
        addr.depth() < self.level_budget() && self.member(addr.child(bit))
    }

    fn children_in_tree(&self, addr: NodeAddr) -> Result<Vec<NodeAddr>> {
        if !self.contains(addr)? {
            return Err(Error::NotInTree(addr));
        }
        Ok((0..2)
            .filter(|&b| self.has_child(addr, b))
            .map(|b| addr.child(b))
            .collect())
    }
}

fn check_depth(addr: NodeAddr, budget: u32) -> Result<()> {
    if addr.depth() > budget {
        return Err(Error::OutOfRange {
            addr,
            depth: addr.depth(),
            budget,
        });
    }
    Ok(())
}

fn check_budget(n: u32) -> Result<()> {
    if n > MAX_DEPTH {
        return Err(Error::InvalidParameter(format!(
            "level budget {n} exceeds the supported maximum {MAX_DEPTH}"
        )));
    }
    Ok(())
}

impl<T: SuccinctTree + ?Sized> SuccinctTree for &T {
    fn level_budget(&self) -> u32 {
        (**self).level_budget()
    }
    fn member(&self, addr: NodeAddr) -> bool {
        (**self).member(addr)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

impl<T: SuccinctTree + ?Sized> SuccinctTree for Box<T> {
    fn level_budget(&self) -> u32 {
        (**self).level_budget()
    }
    fn member(&self, addr: NodeAddr) -> bool {
        (**self).member(addr)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

impl<T: SuccinctTree + ?Sized> SuccinctTree for Arc<T> {
    fn level_budget(&self) -> u32 {
        (**self).level_budget()
    }
    fn member(&self, addr: NodeAddr) -> bool {
        (**self).member(addr)
    }
    fn label(&self) -> String {
        (**self).label()
    }
}

/// The perfect binary tree of height `n`.
#[derive(Debug, Clone, Copy)]
pub struct FullTree {
    n: u32,
}

impl FullTree {
    pub fn new(n: u32) -> Result<Self> {
        check_budget(n)?;
        Ok(Self { n })
    }
}

impl SuccinctTree for FullTree {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, _addr: NodeAddr) -> bool {
        true
    }
    fn label(&self) -> String {
        format!("full:{}", self.n)
    }
}

/// The leftmost root-to-leaf path: `n + 1` nodes.
#[derive(Debug, Clone, Copy)]
pub struct PathTree {
    n: u32,
}

impl PathTree {
    pub fn new(n: u32) -> Result<Self> {
        check_budget(n)?;
        Ok(Self { n })
    }
}

impl SuccinctTree for PathTree {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, addr: NodeAddr) -> bool {
        addr.bits().all(|b| !b)
    }
    fn label(&self) -> String {
        format!("path:{}", self.n)
    }
}

/// The leftmost path plus the right sibling hanging off every internal path
/// node: `2n + 1` nodes.
#[derive(Debug, Clone, Copy)]
pub struct CombTree {
    n: u32,
}

impl CombTree {
    pub fn new(n: u32) -> Result<Self> {
        check_budget(n)?;
        Ok(Self { n })
    }
}

impl SuccinctTree for CombTree {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, addr: NodeAddr) -> bool {
        // Every bit but the last must be 0.
        match addr.parent() {
            None => true,
            Some(p) => p.bits().all(|b| !b),
        }
    }
    fn label(&self) -> String {
        format!("comb:{}", self.n)
    }
}

/// Only the root, with an arbitrary level budget.
#[derive(Debug, Clone, Copy)]
pub struct RootOnly {
    n: u32,
}

impl RootOnly {
    pub fn new(n: u32) -> Result<Self> {
        check_budget(n)?;
        Ok(Self { n })
    }
}

impl SuccinctTree for RootOnly {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, addr: NodeAddr) -> bool {
        addr.is_root()
    }
    fn label(&self) -> String {
        format!("root:{}", self.n)
    }
}

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 finalizer.
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Keyed pseudo-random value in `[0, 1)` for an address.
///
/// `h = mix64(seed + GOLDEN)`, then `h = mix64(h ^ lo)` and `h = mix64(h ^ hi)`
/// where `lo`/`hi` are the low and high 64 bits of the heap index; the value is
/// the top 53 bits of `h` scaled by `2^-53`.
pub fn address_prf(seed: u64, addr: NodeAddr) -> f64 {
    let index = addr.heap_index();
    let mut h = mix64(seed.wrapping_add(GOLDEN));
    h = mix64(h ^ index as u64);
    h = mix64(h ^ (index >> 64) as u64);
    (h >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Reproducible random tree: a non-root address is a member iff every
/// non-root prefix `b` of it (itself included) has `address_prf(seed, b) < q`.
#[derive(Debug, Clone, Copy)]
pub struct HashTree {
    seed: u64,
    n: u32,
    q: f64,
}

pub fn hash_random_tree(seed: u64, n: u32, q: f64) -> Result<HashTree> {
    check_budget(n)?;
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::InvalidParameter(format!("q = {q} is not a probability")));
    }
    Ok(HashTree { seed, n, q })
}

impl HashTree {
    pub fn seed(&self) -> u64 {
        self.seed
    }
    pub fn q(&self) -> f64 {
        self.q
    }
}

impl SuccinctTree for HashTree {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, addr: NodeAddr) -> bool {
        (1..=addr.depth()).all(|d| address_prf(self.seed, addr.ancestor_at(d)) < self.q)
    }
    fn has_child(&self, addr: NodeAddr, bit: u8) -> bool {
        // Ancestors of a member already pass, so only the child itself is new.
        addr.depth() < self.n && address_prf(self.seed, addr.child(bit)) < self.q
    }
    fn label(&self) -> String {
        format!("hash:{}:{}:{}", self.n, self.q, self.seed)
    }
}

/// Arbitrary predicate; no invariants are enforced. Handy for crafting
/// invalid instances.
pub struct PredicateTree<F> {
    n: u32,
    label: String,
    predicate: F,
}

impl<F: Fn(NodeAddr) -> bool + Send + Sync> PredicateTree<F> {
    pub fn new(n: u32, label: impl Into<String>, predicate: F) -> Self {
        Self {
            n,
            label: label.into(),
            predicate,
        }
    }
}

impl<F: Fn(NodeAddr) -> bool + Send + Sync> SuccinctTree for PredicateTree<F> {
    fn level_budget(&self) -> u32 {
        self.n
    }
    fn member(&self, addr: NodeAddr) -> bool {
        (self.predicate)(addr)
    }
    fn label(&self) -> String {
        self.label.clone()
    }
}

/// A tree restricted to depth at most `budget`.
#[derive(Debug, Clone)]
pub struct Pruned<T> {
    inner: T,
    budget: u32,
}

impl<T: SuccinctTree> Pruned<T> {
    pub fn inner(&self) -> &T {
        &self.inner
    }
}

/// Restricts `tree` to the nodes of depth at most `i`.
pub fn prune<T: SuccinctTree>(tree: T, i: u32) -> Result<Pruned<T>> {
    if i > tree.level_budget() {
        return Err(Error::InvalidParameter(format!(
            "cannot prune to depth {i}: level budget is {}",
            tree.level_budget()
        )));
    }
    Ok(Pruned {
        inner: tree,
        budget: i,
    })
}

impl<T: SuccinctTree> SuccinctTree for Pruned<T> {
    fn level_budget(&self) -> u32 {
        self.budget
    }
    fn member(&self, addr: NodeAddr) -> bool {
        self.inner.member(addr)
    }
    fn has_child(&self, addr: NodeAddr, bit: u8) -> bool {
        addr.depth() < self.budget && self.inner.has_child(addr, bit)
    }
    fn label(&self) -> String {
        format!("{}|<={}", self.inner.label(), self.budget)
    }
}

/// A finite materialized tree: root-containing, prefix-closed, depth-bounded.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ExplicitTree {
    level_budget: u32,
    /// Sorted by heap index, so the root is first.
    nodes: Vec<NodeAddr>,
}

impl ExplicitTree {
    pub fn new(level_budget: u32, nodes: impl IntoIterator<Item = NodeAddr>) -> Result<Self> {
        check_budget(level_budget)?;
        let set: BTreeSet<NodeAddr> = nodes.into_iter().collect();
        if !set.contains(&NodeAddr::ROOT) {
            return Err(Error::InvalidTree("the root is missing".into()));
        }
        for &node in &set {
            if node.depth() > level_budget {
                return Err(Error::InvalidTree(format!(
                    "node {node} is deeper than the budget {level_budget}"
                )));
            }
            if let Some(p) = node.parent() {
                if !set.contains(&p) {
                    return Err(Error::InvalidTree(format!(
                        "node {node} is present but its parent is not"
                    )));
                }
            }
        }
        Ok(Self {
            level_budget,
            nodes: set.into_iter().collect(),
        })
    }

    pub fn level_budget(&self) -> u32 {
        self.level_budget
    }

    pub fn nodes(&self) -> &[NodeAddr] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn index_of(&self, addr: NodeAddr) -> Option<usize> {
        self.nodes.binary_search(&addr).ok()
    }

    /// Depth of the deepest node.
    pub fn height(&self) -> u32 {
        self.nodes.last().map_or(0, |a| a.depth())
    }

    /// Number of nodes at each depth `0..=level_budget`.
    pub fn level_counts(&self) -> Vec<u64> {
        let mut counts = vec![0u64; self.level_budget as usize + 1];
        for node in &self.nodes {
            counts[node.depth() as usize] += 1;
        }
        counts
    }

    /// Same node set under a different level budget.
    pub fn with_budget(&self, level_budget: u32) -> Result<Self> {
        Self::new(level_budget, self.nodes.iter().copied())
    }
}

impl SuccinctTree for ExplicitTree {
    fn level_budget(&self) -> u32 {
        self.level_budget
    }
    fn member(&self, addr: NodeAddr) -> bool {
        self.index_of(addr).is_some()
    }
    fn label(&self) -> String {
        format!("explicit:{}:{}", self.level_budget, self.nodes.len())
    }
}

impl fmt::Display for ExplicitTree {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let names: Vec<String> = self.nodes.iter().map(|a| format!("\"{a}\"")).collect();
        write!(f, "{{{}}}", names.join(", "))
    }
}

/// Depth-first walk over the members, stopping once more than `cap` nodes are seen.
fn walk<T: SuccinctTree + ?Sized>(
    tree: &T,
    cap: u64,
    mut visit: impl FnMut(NodeAddr),
) -> Result<u64> {
    if cap == 0 {
        return Err(Error::InvalidParameter("cap must be at least 1".into()));
    }
    let mut stack = vec![NodeAddr::ROOT];
    let mut count = 0u64;
    while let Some(addr) = stack.pop() {
        count += 1;
        if count > cap {
            return Err(Error::CapExceeded {
                what: "node enumeration",
                cap,
                partial: count - 1,
            });
        }
        visit(addr);
        for bit in (0..2).rev() {
            if tree.has_child(addr, bit) {
                stack.push(addr.child(bit));
            }
        }
    }
    Ok(count)
}

/// Exact `|V(S)|` by depth-first enumeration.
pub fn exact_count<T: SuccinctTree + ?Sized>(tree: &T, cap: u64) -> Result<u64> {
    walk(tree, cap, |_| {})
}

pub fn enumerate<T: SuccinctTree + ?Sized>(tree: &T, cap: u64) -> Result<ExplicitTree> {
    let mut nodes = Vec::new();
    walk(tree, cap, |a| nodes.push(a))?;
    nodes.sort_unstable();
    Ok(ExplicitTree {
        level_budget: tree.level_budget(),
        nodes,
    })
}

/// Looks for a member whose parent is not a member.
///
/// Exhaustive when the perfect tree has at most `budget` addresses, otherwise
/// `budget` random addresses (fixed internal seed) are probed. Returns the
/// first violating address.
pub fn validate_prefix_closed<T: SuccinctTree + ?Sized>(
    tree: &T,
    budget: u64,
) -> Option<NodeAddr> {
    let n = tree.level_budget();
    let violates = |a: NodeAddr| tree.member(a) && a.parent().is_some_and(|p| !tree.member(p));
    let total = if n < 63 { Some((1u64 << (n + 1)) - 1) } else { None };
    match total {
        Some(total) if total <= budget => (2..=total as u128)
            .map(|k| NodeAddr::from_heap_index(k).expect("index in range"))
            .find(|&a| violates(a)),
        _ => {
            let mut rng = ChaCha8Rng::seed_from_u64(0x5eed_c105_ed00_0001);
            (0..budget).find_map(|_| {
                let depth = rng.random_range(1..=n);
                let path: u128 = rng.random::<u128>() & ((1u128 << depth) - 1);
                let a = NodeAddr::from_heap_index((1u128 << depth) | path).expect("depth in range");
                violates(a).then_some(a)
            })
        }
    }
}
