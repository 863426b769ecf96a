//! The level-balanced transition kernel and its simulation.
//!
//! From a node, the kernel moves to the parent with probability 1/2 and to
//! each in-tree child with probability 1/4, staying put with the remainder.
//! The lazy variant halves every move and adds 1/2 to the self-loop.
//!
//! Transitions are driven by uniform *slots*: the lazy kernel draws a 3-bit
//! slot (0–3 stay, 4–5 parent, 6 left child, 7 right child), the plain kernel
//! a 2-bit slot (0–1 parent, 2 left child, 3 right child). A slot pointing at
//! a missing neighbor means "stay". Every probability is a multiple of 1/8,
//! so this is exact.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Zero};
use serde::Serialize;

use crate::addr::NodeAddr;
use crate::error::{Error, Result};
use crate::rng::{SlotSource, StreamRng};
use crate::tree::{ExplicitTree, SuccinctTree};

/// Outgoing transition probabilities of one node. Zero-probability moves are omitted.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalKernel {
    pub source: NodeAddr,
    pub moves: Vec<(NodeAddr, BigRational)>,
}

impl LocalKernel {
    pub fn probability_of(&self, target: NodeAddr) -> BigRational {
        self.moves
            .iter()
            .find(|(t, _)| *t == target)
            .map_or_else(BigRational::zero, |(_, p)| p.clone())
    }

    pub fn total(&self) -> BigRational {
        self.moves.iter().map(|(_, p)| p.clone()).sum()
    }
}

fn ratio(num: i64, den: i64) -> BigRational {
    BigRational::new(BigInt::from(num), BigInt::from(den))
}

pub fn local_kernel<T: SuccinctTree + ?Sized>(
    tree: &T,
    addr: NodeAddr,
    lazy: bool,
) -> Result<LocalKernel> {
    let children = tree.children_in_tree(addr)?;
    // In eighths, so the lazy case stays integral.
    let scale = if lazy { 1 } else { 2 };
    let mut moves = Vec::with_capacity(4);
    let mut stay = 8i64;
    if let Some(parent) = addr.parent() {
        moves.push((parent, 2 * scale));
        stay -= 2 * scale;
    }
    for child in children {
        moves.push((child, scale));
        stay -= scale;
    }
    let mut out = Vec::with_capacity(4);
    if stay > 0 {
        out.push((addr, ratio(stay, 8)));
    }
    out.extend(moves.into_iter().map(|(t, w)| (t, ratio(w, 8))));
    Ok(LocalKernel {
        source: addr,
        moves: out,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChainParams {
    pub lazy: bool,
    pub burn_in_constant: f64,
    pub tv_epsilon: f64,
}

impl Default for ChainParams {
    fn default() -> Self {
        Self {
            lazy: true,
            burn_in_constant: 2.0,
            tv_epsilon: 0.01,
        }
    }
}

impl ChainParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.burn_in_constant > 0.0 && self.burn_in_constant.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "burn-in constant must be positive, got {}",
                self.burn_in_constant
            )));
        }
        check_probability("tv_epsilon", self.tv_epsilon)
    }
}

pub(crate) fn check_probability(name: &str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("{name} must lie in (0, 1), got {value}")))
    }
}

/// Burn-in from the conductance bound: `⌈C · (4(n+1))² · (ln(n+1) + ln(1/ε))⌉`.
pub fn burn_in_steps(n: u32, tv_epsilon: f64, c: f64) -> Result<u64> {
    check_probability("tv_epsilon", tv_epsilon)?;
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::InvalidParameter(format!("burn-in constant must be positive, got {c}")));
    }
    let inv_conductance = 4.0 * (n as f64 + 1.0);
    let log_term = (n as f64 + 1.0).ln() + (1.0 / tv_epsilon).ln();
    Ok((c * inv_conductance * inv_conductance * log_term).ceil() as u64)
}

/// A state space the chain can be simulated on.
pub trait Walker {
    type State: Copy + Eq;

    fn start(&self) -> Self::State;
    fn is_root(&self, state: Self::State) -> bool;
    fn lazy(&self) -> bool;
    /// Applies one transition selected by `slot` (see the module docs).
    fn advance(&self, state: Self::State, slot: u32) -> Self::State;

    fn slot_bits(&self) -> u32 {
        if self.lazy() {
            3
        } else {
            2
        }
    }

    fn run<R: SlotSource>(&self, steps: u64, rng: &mut R) -> Self::State {
        let bits = self.slot_bits();
        let mut state = self.start();
        for _ in 0..steps {
            state = self.advance(state, rng.slot(bits));
        }
        state
    }

    /// Number of `restarts` independent runs of `steps` steps that end at the root.
    fn root_hits<R: SlotSource>(&self, restarts: u64, steps: u64, rng: &mut R) -> u64 {
        (0..restarts)
            .filter(|_| self.is_root(self.run(steps, rng)))
            .count() as u64
    }
}

/// Simulates directly on a succinct tree, probing child membership on demand.
pub struct SuccinctWalker<'a, T: ?Sized> {
    tree: &'a T,
    lazy: bool,
}

impl<'a, T: SuccinctTree + ?Sized> SuccinctWalker<'a, T> {
    pub fn new(tree: &'a T, lazy: bool) -> Self {
        Self { tree, lazy }
    }
}

impl<T: SuccinctTree + ?Sized> Walker for SuccinctWalker<'_, T> {
    type State = NodeAddr;

    fn start(&self) -> NodeAddr {
        NodeAddr::ROOT
    }
    fn is_root(&self, state: NodeAddr) -> bool {
        state.is_root()
    }
    fn lazy(&self) -> bool {
        self.lazy
    }

    #[inline]
    fn advance(&self, state: NodeAddr, slot: u32) -> NodeAddr {
        let slot = if self.lazy { slot } else { slot + 4 };
        match slot {
            4 | 5 => state.parent().unwrap_or(state),
            6 | 7 => {
                let bit = (slot - 6) as u8;
                if self.tree.has_child(state, bit) {
                    state.child(bit)
                } else {
                    state
                }
            }
            _ => state,
        }
    }
}

/// Simulates on a materialized tree through a precomputed slot table.
#[derive(Debug, Clone)]
pub struct IndexedWalker {
    lazy: bool,
    /// `table[state * 8 + slot]` is the successor; the plain kernel uses slots 4..8.
    table: Vec<u32>,
    /// Two steps at once: `pairs[state << 2b | c << b | a]` applies slot `a`, then `c`,
    /// where `b` is the slot width.
    pairs: Vec<u32>,
}

impl IndexedWalker {
    pub fn new(tree: &ExplicitTree, lazy: bool) -> Self {
        let nodes = tree.nodes();
        let mut table = Vec::with_capacity(nodes.len() * 8);
        for (i, &node) in nodes.iter().enumerate() {
            let me = i as u32;
            let parent = node
                .parent()
                .and_then(|p| tree.index_of(p))
                .map_or(me, |p| p as u32);
            let child = |bit| {
                if node.depth() < tree.level_budget() {
                    tree.index_of(node.child(bit)).map_or(me, |c| c as u32)
                } else {
                    me
                }
            };
            table.extend_from_slice(&[me, me, me, me, parent, parent, child(0), child(1)]);
        }
        let mut walker = Self {
            lazy,
            table,
            pairs: Vec::new(),
        };
        let width = 1 << walker.slot_bits();
        let mut pairs = Vec::with_capacity(nodes.len() * width * width);
        for state in 0..nodes.len() as u32 {
            for c in 0..width as u32 {
                pairs.extend((0..width as u32).map(|a| walker.advance(walker.advance(state, a), c)));
            }
        }
        walker.pairs = pairs;
        walker
    }

    pub fn len(&self) -> usize {
        self.table.len() / 8
    }

    pub fn is_empty(&self) -> bool {
        self.table.is_empty()
    }

    /// Root hits among `K` restarts advanced in lockstep. Each lane takes
    /// `2b` bits of a word per double step, lanes in order; a trailing odd
    /// step reads `b` bits per lane.
    #[inline]
    fn lane_group<const K: usize, R: SlotSource>(&self, steps: u64, rng: &mut R) -> u64 {
        let bits = self.slot_bits();
        let pair_bits = 2 * bits;
        let mask = (1u64 << pair_bits) - 1;
        let per_word = (64 / (pair_bits * LANES as u32)) as u64;
        let mut states = [0u32; K];
        let mut pairs_left = steps / 2;
        while pairs_left > 0 {
            let chunk = per_word.min(pairs_left);
            let mut word = rng.word();
            for _ in 0..chunk {
                for (l, s) in states.iter_mut().enumerate() {
                    let slots = (word >> (pair_bits * l as u32) & mask) as usize;
                    *s = self.pairs[(*s as usize) << pair_bits | slots];
                }
                word >>= pair_bits * LANES as u32;
            }
            pairs_left -= chunk;
        }
        if steps % 2 == 1 {
            let word = rng.word();
            for (l, s) in states.iter_mut().enumerate() {
                *s = self.advance(*s, (word >> (bits * l as u32) & ((1 << bits) - 1)) as u32);
            }
        }
        states.iter().filter(|&&s| s == 0).count() as u64
    }
}

const LANES: usize = 8;

impl Walker for IndexedWalker {
    type State = u32;

    fn start(&self) -> u32 {
        0
    }
    fn is_root(&self, state: u32) -> bool {
        state == 0
    }
    fn lazy(&self) -> bool {
        self.lazy
    }

    #[inline]
    fn advance(&self, state: u32, slot: u32) -> u32 {
        let slot = if self.lazy { slot } else { slot + 4 };
        self.table[(state as usize) << 3 | slot as usize]
    }

    /// Runs restarts in interleaved groups of 8 so table lookups overlap.
    /// Each 64-bit word drives several consecutive steps of the whole group.
    fn root_hits<R: SlotSource>(&self, restarts: u64, steps: u64, rng: &mut R) -> u64 {
        let mut hits = 0;
        let mut remaining = restarts;
        while remaining >= LANES as u64 {
            hits += self.lane_group::<LANES, R>(steps, rng);
            remaining -= LANES as u64;
        }
        for _ in 0..remaining {
            hits += self.lane_group::<1, R>(steps, rng);
        }
        hits
    }
}

/// One transition of the chain on `tree` from `state`.
pub fn step<T: SuccinctTree + ?Sized, R: SlotSource>(
    tree: &T,
    state: NodeAddr,
    lazy: bool,
    rng: &mut R,
) -> Result<NodeAddr> {
    if !tree.contains(state)? {
        return Err(Error::NotInTree(state));
    }
    let walker = SuccinctWalker::new(tree, lazy);
    Ok(walker.advance(state, rng.slot(walker.slot_bits())))
}

/// Runs `steps` transitions from the root and returns the final node.
pub fn run_chain<T: SuccinctTree + ?Sized, R: SlotSource>(
    tree: &T,
    steps: u64,
    lazy: bool,
    rng: &mut R,
) -> NodeAddr {
    SuccinctWalker::new(tree, lazy).run(steps, rng)
}

/// Like [`run_chain`] but records every visited state, the start included.
pub fn trajectory<T: SuccinctTree + ?Sized, R: SlotSource>(
    tree: &T,
    steps: u64,
    lazy: bool,
    rng: &mut R,
) -> Vec<NodeAddr> {
    let walker = SuccinctWalker::new(tree, lazy);
    let bits = walker.slot_bits();
    let mut state = walker.start();
    let mut out = Vec::with_capacity(steps as usize + 1);
    out.push(state);
    for _ in 0..steps {
        state = walker.advance(state, rng.slot(bits));
        out.push(state);
    }
    out
}

/// `m` independent restarts from the root, each burned in for
/// [`burn_in_steps`]`(n, params.tv_epsilon, params.burn_in_constant)`.
pub fn sample_stationary<T: SuccinctTree + ?Sized>(
    tree: &T,
    m: usize,
    params: &ChainParams,
    rng: &mut StreamRng,
) -> Result<Vec<NodeAddr>> {
    params.validate()?;
    if m == 0 {
        return Err(Error::InvalidParameter("m must be at least 1".into()));
    }
    let steps = burn_in_steps(tree.level_budget(), params.tv_epsilon, params.burn_in_constant)?;
    let walker = SuccinctWalker::new(tree, params.lazy);
    Ok((0..m).map(|_| walker.run(steps, rng)).collect())
}

/// Kernel row sums to one; used by tests and the validate command.
pub fn kernel_is_stochastic(kernel: &LocalKernel) -> bool {
    kernel.total() == BigRational::one()
        && kernel.moves.iter().all(|(_, p)| *p >= BigRational::zero())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{FixedSlots, RandomStream};
    use crate::tree::{enumerate, hash_random_tree, FullTree, PathTree, RootOnly};
    use proptest::prelude::*;

    fn a(s: &str) -> NodeAddr {
        s.parse().unwrap()
    }

    #[test]
    fn kernel_examples() {
        let full = FullTree::new(3).unwrap();
        let k = local_kernel(&full, a("0"), false).unwrap();
        assert_eq!(k.probability_of(a("")), ratio(1, 2));
        assert_eq!(k.probability_of(a("00")), ratio(1, 4));
        assert_eq!(k.probability_of(a("01")), ratio(1, 4));
        assert_eq!(k.probability_of(a("0")), ratio(0, 1));

        let k = local_kernel(&full, a(""), false).unwrap();
        assert_eq!(k.probability_of(a("0")), ratio(1, 4));
        assert_eq!(k.probability_of(a("")), ratio(1, 2));

        let k = local_kernel(&full, a("000"), true).unwrap();
        assert_eq!(k.probability_of(a("00")), ratio(1, 4));
        assert_eq!(k.probability_of(a("000")), ratio(3, 4));
        assert!(kernel_is_stochastic(&k));

        assert!(local_kernel(&PathTree::new(2).unwrap(), a("1"), true).is_err());
    }

    #[test]
    fn burn_in_examples() {
        assert_eq!(burn_in_steps(4, 0.01, 1.0).unwrap(), 2486);
        assert_eq!(burn_in_steps(0, 0.5, 1.0).unwrap(), 12);
        let one = 400.0 * (5f64.ln() + 100f64.ln());
        assert_eq!(burn_in_steps(4, 0.01, 2.0).unwrap(), (2.0 * one).ceil() as u64);
        assert!(burn_in_steps(4, 0.0, 1.0).is_err());
        assert!(burn_in_steps(4, 0.1, 0.0).is_err());
    }

    #[test]
    fn step_examples() {
        let root_only = RootOnly::new(3).unwrap();
        let mut rng = RandomStream::new(5).rng();
        for _ in 0..20 {
            assert_eq!(step(&root_only, NodeAddr::ROOT, true, &mut rng).unwrap(), NodeAddr::ROOT);
        }
        let full = FullTree::new(1).unwrap();
        let mut forced = FixedSlots::new([6, 7, 0]);
        assert_eq!(step(&full, a(""), true, &mut forced).unwrap(), a("0"));
        assert_eq!(step(&full, a(""), true, &mut forced).unwrap(), a("1"));
        assert_eq!(step(&full, a(""), true, &mut forced).unwrap(), a(""));
        assert!(step(&full, a("00"), true, &mut forced).is_err());

        let twice = |seed| {
            let mut rng = RandomStream::new(seed).rng();
            let s1 = step(&full, a(""), true, &mut rng).unwrap();
            (s1, step(&full, s1, true, &mut rng).unwrap())
        };
        assert_eq!(twice(11), twice(11));
    }

    #[test]
    fn run_chain_examples() {
        let full = FullTree::new(4).unwrap();
        let mut rng = RandomStream::new(1).rng();
        assert_eq!(run_chain(&full, 0, true, &mut rng), NodeAddr::ROOT);
        assert_eq!(run_chain(&RootOnly::new(5).unwrap(), 1000, true, &mut rng), NodeAddr::ROOT);
    }

    #[test]
    fn sample_m1_is_run_chain() {
        let full = FullTree::new(3).unwrap();
        let params = ChainParams::default();
        let s = RandomStream::new(3);
        let sampled = sample_stationary(&full, 1, &params, &mut s.rng()).unwrap();
        let steps = burn_in_steps(3, params.tv_epsilon, params.burn_in_constant).unwrap();
        assert_eq!(sampled, vec![run_chain(&full, steps, true, &mut s.rng())]);
        let roots = sample_stationary(&RootOnly::new(3).unwrap(), 5, &params, &mut s.rng()).unwrap();
        assert_eq!(roots, vec![NodeAddr::ROOT; 5]);
        assert!(sample_stationary(&full, 0, &params, &mut s.rng()).is_err());
    }

    proptest! {
        #[test]
        fn kernels_are_stochastic_and_local(seed: u64, n in 0u32..7, q in 0.0f64..=1.0, lazy: bool) {
            let t = hash_random_tree(seed, n, q).unwrap();
            for node in enumerate(&t, 1 << 10).unwrap().nodes() {
                let k = local_kernel(&t, *node, lazy).unwrap();
                prop_assert!(kernel_is_stochastic(&k));
                if lazy {
                    prop_assert!(k.probability_of(*node) >= ratio(1, 2));
                }
                for (target, _) in &k.moves {
                    prop_assert!(target.depth().abs_diff(node.depth()) <= 1);
                    prop_assert!(t.member(*target));
                }
            }
        }

        #[test]
        fn indexed_and_succinct_walkers_agree(seed: u64, n in 0u32..8, q in 0.3f64..=1.0, lazy: bool, steps in 0u64..300) {
            let t = hash_random_tree(seed, n, q).unwrap();
            let explicit = enumerate(&t, 1 << 10).unwrap();
            let indexed = IndexedWalker::new(&explicit, lazy);
            let succinct = SuccinctWalker::new(&t, lazy);
            let stream = RandomStream::new(seed ^ 1);
            let a = indexed.run(steps, &mut stream.rng());
            let b = succinct.run(steps, &mut stream.rng());
            prop_assert_eq!(explicit.nodes()[a as usize], b);
        }

        #[test]
        fn lockstep_root_hits_match_single_steps(
            seed: u64, n in 0u32..7, lazy: bool, restarts in 1u64..20, steps in 0u64..40,
        ) {
            let t = hash_random_tree(seed, n, 0.7).unwrap();
            let explicit = enumerate(&t, 1 << 10).unwrap();
            let w = IndexedWalker::new(&explicit, lazy);
            let stream = RandomStream::new(seed);
            let fast = w.root_hits(restarts, steps, &mut stream.rng());

            // Reference: decode the same word layout one step at a time.
            let bits = w.slot_bits();
            let slot_of = |word: u64, i: u32| (word >> (bits * i) & ((1 << bits) - 1)) as u32;
            let mut rng = stream.rng();
            let mut hits = 0;
            let mut left = restarts;
            while left > 0 {
                let k = if left >= LANES as u64 { LANES } else { 1 };
                let mut states = vec![0u32; k];
                let per_word = 64 / (2 * bits * LANES as u32);
                let mut pairs = steps / 2;
                while pairs > 0 {
                    let word = rng.word();
                    for p in 0..(per_word as u64).min(pairs) as u32 {
                        for (l, s) in states.iter_mut().enumerate() {
                            let base = 2 * (p * LANES as u32 + l as u32);
                            *s = w.advance(w.advance(*s, slot_of(word, base)), slot_of(word, base + 1));
                        }
                    }
                    pairs -= (per_word as u64).min(pairs);
                }
                if steps % 2 == 1 {
                    let word = rng.word();
                    for (l, s) in states.iter_mut().enumerate() {
                        *s = w.advance(*s, slot_of(word, l as u32));
                    }
                }
                hits += states.iter().filter(|&&s| s == 0).count() as u64;
                left -= k as u64;
            }
            prop_assert_eq!(fast, hits);
        }
    }
}
