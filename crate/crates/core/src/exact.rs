//! Exact rational oracles on small materialized trees.

use std::collections::BTreeMap;

use num_bigint::{BigInt, BigUint};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::addr::NodeAddr;
use crate::chain::local_kernel;
use crate::error::{Error, Result};
use crate::tree::{enumerate, prune, ExplicitTree, SuccinctTree};

pub const DEFAULT_MATRIX_CAP: usize = 4096;
pub const DEFAULT_CONDUCTANCE_CAP: usize = 18;

/// The level-weighted stationary law: `π(u) = 2^(n − depth u) / alpha_inverse`.
#[derive(Debug, Clone, PartialEq)]
pub struct StationaryProfile {
    pub alpha_inverse: BigUint,
    pub level_budget: u32,
    pub probs: BTreeMap<NodeAddr, BigRational>,
}

impl StationaryProfile {
    pub fn prob(&self, addr: NodeAddr) -> BigRational {
        self.probs.get(&addr).cloned().unwrap_or_else(BigRational::zero)
    }

    pub fn root_prob(&self) -> BigRational {
        self.prob(NodeAddr::ROOT)
    }

    /// `alpha = 1 / alpha_inverse`.
    pub fn alpha(&self) -> BigRational {
        BigRational::new(BigInt::one(), BigInt::from(self.alpha_inverse.clone()))
    }
}

pub fn stationary_exact(tree: &ExplicitTree) -> StationaryProfile {
    let n = tree.level_budget();
    let weight = |a: NodeAddr| BigUint::one() << (n - a.depth());
    let alpha_inverse: BigUint = tree.nodes().iter().map(|&a| weight(a)).sum();
    let denom = BigInt::from(alpha_inverse.clone());
    let probs = tree
        .nodes()
        .iter()
        .map(|&a| (a, BigRational::new(BigInt::from(weight(a)), denom.clone())))
        .collect();
    StationaryProfile {
        alpha_inverse,
        level_budget: n,
        probs,
    }
}

/// Enumerated transition matrix, stored as sparse rows.
#[derive(Debug, Clone, PartialEq)]
pub struct ExplicitChain {
    pub states: Vec<NodeAddr>,
    /// `rows[i]` lists `(j, P[i][j])` for nonzero entries, sorted by `j`.
    pub rows: Vec<Vec<(usize, BigRational)>>,
    pub lazy: bool,
}

impl ExplicitChain {
    pub fn len(&self) -> usize {
        self.states.len()
    }

    pub fn is_empty(&self) -> bool {
        self.states.is_empty()
    }

    pub fn index_of(&self, addr: NodeAddr) -> Option<usize> {
        self.states.binary_search(&addr).ok()
    }

    pub fn entry(&self, i: usize, j: usize) -> BigRational {
        self.rows[i]
            .binary_search_by_key(&j, |(k, _)| *k)
            .map_or_else(|_| BigRational::zero(), |pos| self.rows[i][pos].1.clone())
    }

    pub fn rows_stochastic(&self) -> bool {
        self.rows.iter().all(|row| {
            row.iter().all(|(_, p)| !p.is_negative())
                && row.iter().map(|(_, p)| p.clone()).sum::<BigRational>() == BigRational::one()
        })
    }

    /// Matrix scaled to integers by the lcm `d` of all denominators: `(d, rows)`.
    fn integer_rows(&self) -> (BigInt, Vec<Vec<(usize, BigInt)>>) {
        let d = self
            .rows
            .iter()
            .flatten()
            .fold(BigInt::one(), |acc, (_, p)| acc.lcm(p.denom()));
        let rows = self
            .rows
            .iter()
            .map(|row| {
                row.iter()
                    .map(|(j, p)| (*j, p.numer() * (&d / p.denom())))
                    .collect()
            })
            .collect();
        (d, rows)
    }
}

pub fn transition_matrix(tree: &ExplicitTree, lazy: bool, cap: usize) -> Result<ExplicitChain> {
    if tree.len() > cap {
        return Err(Error::CapExceeded {
            what: "transition matrix states",
            cap: cap as u64,
            partial: tree.len() as u64,
        });
    }
    let rows = tree
        .nodes()
        .iter()
        .map(|&node| {
            let kernel = local_kernel(tree, node, lazy)?;
            let mut row: Vec<(usize, BigRational)> = kernel
                .moves
                .into_iter()
                .map(|(t, p)| (tree.index_of(t).expect("kernel targets are members"), p))
                .collect();
            row.sort_by_key(|(j, _)| *j);
            Ok(row)
        })
        .collect::<Result<_>>()?;
    Ok(ExplicitChain {
        states: tree.nodes().to_vec(),
        rows,
        lazy,
    })
}

fn profile_vector(chain: &ExplicitChain, profile: &StationaryProfile) -> Option<Vec<BigRational>> {
    if chain.states.len() != profile.probs.len() {
        return None;
    }
    chain
        .states
        .iter()
        .map(|a| profile.probs.get(a).cloned())
        .collect()
}

/// Exact check of `π P = π`.
pub fn verify_stationary(chain: &ExplicitChain, profile: &StationaryProfile) -> bool {
    let Some(pi) = profile_vector(chain, profile) else {
        return false;
    };
    let mut image = vec![BigRational::zero(); chain.len()];
    for (i, row) in chain.rows.iter().enumerate() {
        for (j, p) in row {
            image[*j] += &pi[i] * p;
        }
    }
    image == pi
}

/// Exact check of `π(u) P(u,v) = π(v) P(v,u)` for every pair with a nonzero entry.
pub fn verify_detailed_balance(chain: &ExplicitChain, profile: &StationaryProfile) -> bool {
    let Some(pi) = profile_vector(chain, profile) else {
        return false;
    };
    chain.rows.iter().enumerate().all(|(i, row)| {
        row.iter()
            .filter(|(j, _)| *j != i)
            .all(|(j, p)| &pi[i] * p == &pi[*j] * chain.entry(*j, i))
    })
}

pub type Distribution = BTreeMap<NodeAddr, BigRational>;

/// Integer form of `δ_start P^t`: numerators over the common denominator `d^t`.
struct Evolution {
    scale: BigInt,
    rows: Vec<Vec<(usize, BigInt)>>,
    numerators: Vec<BigInt>,
    denominator: BigInt,
}

impl Evolution {
    fn new(chain: &ExplicitChain, start: usize) -> Self {
        let (scale, rows) = chain.integer_rows();
        let mut numerators = vec![BigInt::zero(); chain.len()];
        numerators[start] = BigInt::one();
        Self {
            scale,
            rows,
            numerators,
            denominator: BigInt::one(),
        }
    }

    fn advance(&mut self) {
        let mut next = vec![BigInt::zero(); self.numerators.len()];
        for (i, row) in self.rows.iter().enumerate() {
            let x = &self.numerators[i];
            if x.is_zero() {
                continue;
            }
            for (j, w) in row {
                next[*j] += x * w;
            }
        }
        self.numerators = next;
        self.denominator *= &self.scale;
    }

    fn distribution(&self, states: &[NodeAddr]) -> Distribution {
        states
            .iter()
            .zip(&self.numerators)
            .map(|(a, x)| (*a, BigRational::new(x.clone(), self.denominator.clone())))
            .collect()
    }

    /// `2 · TV · denominator · pi_denominator`, an exact integer.
    fn scaled_tv(&self, pi_numerators: &[BigInt], pi_denominator: &BigInt) -> BigInt {
        self.numerators
            .iter()
            .zip(pi_numerators)
            .map(|(x, p)| (x * pi_denominator - p * &self.denominator).abs())
            .sum()
    }
}

fn start_index(chain: &ExplicitChain, start: NodeAddr) -> Result<usize> {
    chain.index_of(start).ok_or(Error::NotInTree(start))
}

pub fn distribution_at_time(chain: &ExplicitChain, start: NodeAddr, t: u64) -> Result<Distribution> {
    let mut evo = Evolution::new(chain, start_index(chain, start)?);
    for _ in 0..t {
        evo.advance();
    }
    Ok(evo.distribution(&chain.states))
}

/// Total variation: half the L1 distance. Missing keys count as zero mass.
pub fn tv_distance(p: &Distribution, q: &Distribution) -> BigRational {
    let zero = BigRational::zero();
    let mut total = BigRational::zero();
    for (k, pv) in p {
        total += (pv - q.get(k).unwrap_or(&zero)).abs();
    }
    for (k, qv) in q {
        if !p.contains_key(k) {
            total += qv.abs();
        }
    }
    total / BigRational::from_integer(BigInt::from(2))
}

fn common_denominator(values: &[BigRational]) -> (Vec<BigInt>, BigInt) {
    let d = values.iter().fold(BigInt::one(), |acc, v| acc.lcm(v.denom()));
    let nums = values.iter().map(|v| v.numer() * (&d / v.denom())).collect();
    (nums, d)
}

/// Least `t` with `TV(δ_root P^t, π) ≤ eps`, searched forward from `t = 0`.
/// Fails if no such `t ≤ max_steps` exists.
pub fn mixing_time_exact(
    chain: &ExplicitChain,
    profile: &StationaryProfile,
    eps: &BigRational,
    max_steps: u64,
) -> Result<u64> {
    if !(eps.is_positive() && *eps < BigRational::one()) {
        return Err(Error::InvalidParameter(format!("eps must lie in (0, 1), got {eps}")));
    }
    let pi = profile_vector(chain, profile)
        .ok_or_else(|| Error::InvalidProfile("profile and chain have different states".into()))?;
    let (pi_nums, pi_den) = common_denominator(&pi);
    let mut evo = Evolution::new(chain, start_index(chain, NodeAddr::ROOT)?);
    // scaled_tv ≤ 2·eps·den·pi_den  ⇔  eps.denom·scaled_tv ≤ 2·eps.numer·den·pi_den
    let within = |evo: &Evolution| {
        eps.denom() * evo.scaled_tv(&pi_nums, &pi_den)
            <= BigInt::from(2) * eps.numer() * &evo.denominator * &pi_den
    };
    for t in 0..=max_steps {
        if within(&evo) {
            return Ok(t);
        }
        evo.advance();
    }
    Err(Error::CapExceeded {
        what: "mixing-time search steps",
        cap: max_steps,
        partial: max_steps,
    })
}

/// Exact TV distance to stationarity from the root, for `t = 0..=t_max`.
pub fn tv_profile(
    chain: &ExplicitChain,
    profile: &StationaryProfile,
    t_max: u64,
) -> Result<Vec<BigRational>> {
    let pi = profile_vector(chain, profile)
        .ok_or_else(|| Error::InvalidProfile("profile and chain have different states".into()))?;
    let (pi_nums, pi_den) = common_denominator(&pi);
    let mut evo = Evolution::new(chain, start_index(chain, NodeAddr::ROOT)?);
    let mut out = Vec::with_capacity(t_max as usize + 1);
    for t in 0..=t_max {
        let scaled = evo.scaled_tv(&pi_nums, &pi_den);
        out.push(BigRational::new(
            scaled,
            BigInt::from(2) * &evo.denominator * &pi_den,
        ));
        if t < t_max {
            evo.advance();
        }
    }
    Ok(out)
}

/// Exhaustive conductance: the minimum of `Σ_{i∈Y, j∉Y} π_i P_ij / π(Y)` over
/// all `Y` with `0 < π(Y) ≤ 1/2`.
///
/// Subsets are visited in Gray-code order so each step updates the cut and
/// the mass incrementally; all arithmetic is on exact integers.
pub fn conductance_exact(
    chain: &ExplicitChain,
    profile: &StationaryProfile,
    cap: usize,
) -> Result<BigRational> {
    let k = chain.len();
    if k > cap || k > 62 {
        return Err(Error::CapExceeded {
            what: "conductance states",
            cap: cap.min(62) as u64,
            partial: k as u64,
        });
    }
    if k < 2 {
        return Err(Error::Degenerate(
            "a single-state chain has no subset with 0 < π(Y) ≤ 1/2".into(),
        ));
    }
    let pi = profile_vector(chain, profile)
        .ok_or_else(|| Error::InvalidProfile("profile and chain have different states".into()))?;
    let (pi_nums, _) = common_denominator(&pi);
    let (p_scale, p_rows) = chain.integer_rows();
    let to_i128 = |v: &BigInt| {
        v.to_i128()
            .ok_or_else(|| Error::Degenerate("weights too large for exhaustive search".into()))
    };
    let mass: Vec<i128> = pi_nums.iter().map(to_i128).collect::<Result<_>>()?;
    let total: i128 = mass.iter().sum();
    // flow[i] = [(j, π_i P_ij)] scaled, off-diagonal only; inflow likewise by target.
    let mut out_edges: Vec<Vec<(usize, i128)>> = vec![Vec::new(); k];
    let mut in_edges: Vec<Vec<(usize, i128)>> = vec![Vec::new(); k];
    for (i, row) in p_rows.iter().enumerate() {
        for (j, w) in row {
            if *j != i {
                let flow = mass[i] * to_i128(w)?;
                out_edges[i].push((*j, flow));
                in_edges[*j].push((i, flow));
            }
        }
    }

    let mut members: u64 = 0;
    let mut cut: i128 = 0;
    let mut y_mass: i128 = 0;
    // best = best_cut / best_mass (in scaled units); None until a qualifying Y appears.
    let mut best: Option<(i128, i128)> = None;
    for step in 1u64..(1u64 << k) {
        let v = step.trailing_zeros() as usize;
        let bit = 1u64 << v;
        let entering = members & bit == 0;
        let sign = if entering { 1 } else { -1 };
        // Edges v→j with j outside Y, and i→v with i inside Y.
        let out: i128 = out_edges[v]
            .iter()
            .filter(|(j, _)| members & (1 << j) == 0)
            .map(|(_, f)| f)
            .sum();
        let inn: i128 = in_edges[v]
            .iter()
            .filter(|(i, _)| members & (1 << i) != 0)
            .map(|(_, f)| f)
            .sum();
        if entering {
            cut += out - inn;
        } else {
            cut += inn - out;
        }
        y_mass += sign * mass[v];
        members ^= bit;
        if y_mass > 0 && 2 * y_mass <= total {
            let better = match best {
                None => true,
                Some((bc, bm)) => cut * bm < bc * y_mass,
            };
            if better {
                best = Some((cut, y_mass));
            }
        }
    }
    let (best_cut, best_mass) = best.ok_or_else(|| {
        Error::Degenerate("no subset with 0 < π(Y) ≤ 1/2".into())
    })?;
    Ok(BigRational::new(
        BigInt::from(best_cut),
        BigInt::from(best_mass) * p_scale,
    ))
}

/// The bound `1 / (4(n+1))`.
pub fn conductance_bound(n: u32) -> BigRational {
    BigRational::new(BigInt::one(), BigInt::from(4 * (n as u64 + 1)))
}

/// Node counts `r_0..r_n` per depth.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LevelProfile {
    #[serde(serialize_with = "serialize_decimal_vec")]
    pub counts: Vec<BigUint>,
}

fn serialize_decimal_vec<S: serde::Serializer>(
    v: &[BigUint],
    s: S,
) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|x| x.to_string()))
}

impl LevelProfile {
    pub fn total(&self) -> BigUint {
        self.counts.iter().sum()
    }
}

/// `|S| = A_n − Σ_{k<n} A_k` where `A_k = 1/α_{S_k}`.
pub fn size_from_alpha_inverses(alpha_inverses: &[BigUint]) -> Result<BigInt> {
    check_first(alpha_inverses)?;
    let (last, rest) = alpha_inverses.split_last().expect("nonempty");
    let rest: BigUint = rest.iter().sum();
    Ok(BigInt::from(last.clone()) - BigInt::from(rest))
}

/// `r_0 = 1`, `r_k = A_k − 2 A_{k−1}`.
pub fn level_counts_from_alphas(alpha_inverses: &[BigUint]) -> Result<LevelProfile> {
    check_first(alpha_inverses)?;
    let mut counts = vec![BigUint::one()];
    for (k, pair) in alpha_inverses.windows(2).enumerate() {
        let r = BigInt::from(pair[1].clone()) - BigInt::from(2u8) * BigInt::from(pair[0].clone());
        let r = r.to_biguint().ok_or_else(|| Error::InconsistentProfile {
            level: k + 1,
            value: r.to_string(),
        })?;
        counts.push(r);
    }
    Ok(LevelProfile { counts })
}

fn check_first(alpha_inverses: &[BigUint]) -> Result<()> {
    match alpha_inverses.first() {
        None => Err(Error::InvalidProfile("no normalizing factors given".into())),
        Some(a0) if !a0.is_one() => Err(Error::InvalidProfile(format!(
            "A_0 must be 1 (the root-only tree), got {a0}"
        ))),
        Some(_) => Ok(()),
    }
}

/// `1/α_{S_k}` for every pruning `S_k`, `k = 0..=n`, each with its own budget `k`.
pub fn pruned_alpha_inverses<T: SuccinctTree + ?Sized>(tree: &T, cap: u64) -> Result<Vec<BigUint>> {
    (0..=tree.level_budget())
        .map(|k| {
            let pruned = enumerate(&prune(tree, k)?, cap)?;
            Ok(stationary_exact(&pruned).alpha_inverse)
        })
        .collect()
}
