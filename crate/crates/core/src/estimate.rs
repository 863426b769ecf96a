//! Randomized estimators of the normalizing factor and of tree size, plus
//! the uniform-sampling and Knuth baselines.

use num_rational::BigRational;
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::addr::NodeAddr;
use crate::chain::{burn_in_steps, check_probability, IndexedWalker, SuccinctWalker, Walker};
use crate::error::{Error, Result};
use crate::exact::{mixing_time_exact, stationary_exact, transition_matrix, DEFAULT_MATRIX_CAP};
use crate::rng::{RandomStream, SlotSource, StreamRng};
use crate::tree::{enumerate, prune, ExplicitTree, SuccinctTree};

/// How long each restart runs before its endpoint is kept.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "kebab-case")]
pub enum BurnIn {
    /// `burn_in_steps(n, tv, constant)` from the conductance bound.
    Bound { constant: f64 },
    /// The exact TV mixing time of the materialized tree; the tree must fit
    /// within `matrix_cap` states.
    ExactMeasured { matrix_cap: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EstimatorConfig {
    /// `c_m` in `m = ⌈c_m (n+1) / ζ²⌉`.
    pub sample_constant: f64,
    pub burn_in: BurnIn,
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            sample_constant: 4.0,
            burn_in: BurnIn::Bound { constant: 2.0 },
        }
    }
}

impl EstimatorConfig {
    pub fn exact_measured() -> Self {
        Self {
            burn_in: BurnIn::ExactMeasured {
                matrix_cap: DEFAULT_MATRIX_CAP,
            },
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlphaEstimate {
    pub value: f64,
    pub level_budget: u32,
    pub zeta: f64,
    pub delta: f64,
    pub tv_epsilon: f64,
    pub batches: u64,
    pub samples_per_batch: u64,
    pub burn_in: u64,
    pub chain_steps_total: u64,
    pub batch_values: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum SizeMethod {
    Markov,
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SizeEstimate {
    pub value: f64,
    pub method: SizeMethod,
    pub level_budget: u32,
    pub xi: f64,
    pub delta: f64,
    /// `Â = 1/α̂_{S_n}`; the uniform baseline reports its estimate here.
    pub a_hat: f64,
    /// `B̂ = Σ_{k<n} 1/α̂_{S_k}`; zero for the uniform baseline.
    pub b_hat: f64,
    /// One entry per level `0..=n` for the Markov route, empty otherwise.
    pub per_level_alphas: Vec<AlphaEstimate>,
    pub samples: u64,
    pub chain_steps_total: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProbabilityEstimate {
    pub value: f64,
    pub xi: f64,
    pub delta: f64,
    pub size: SizeEstimate,
}

/// Median amplification: `t = 2⌈4 ln(1/δ)⌉ + 1` batches.
pub fn batch_count(delta: f64) -> u64 {
    2 * (4.0 * (1.0 / delta).ln()).ceil() as u64 + 1
}

/// `m = ⌈c_m (n+1) / ζ²⌉` samples per batch.
pub fn samples_per_batch(n: u32, zeta: f64, sample_constant: f64) -> u64 {
    (sample_constant * (n as f64 + 1.0) / (zeta * zeta)).ceil() as u64
}

/// The middle order statistic of an odd-length list.
pub fn median_of_batches(values: &[f64]) -> Result<f64> {
    if values.is_empty() || values.len() % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "median of batches needs an odd, nonzero count, got {}",
            values.len()
        )));
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted[sorted.len() / 2])
}

fn check_zeta(zeta: f64) -> Result<()> {
    if zeta > 0.0 && zeta <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("zeta must lie in (0, 1], got {zeta}")))
    }
}

fn check_xi(xi: f64) -> Result<()> {
    if xi > 0.0 && xi <= 1.0 {
        Ok(())
    } else {
        Err(Error::InvalidParameter(format!("xi must lie in (0, 1], got {xi}")))
    }
}

fn run_batches<W: Walker + Sync>(
    walker: &W,
    batches: u64,
    m: u64,
    steps: u64,
    stream: &RandomStream,
) -> Vec<u64> {
    (0..batches)
        .into_par_iter()
        .map(|b| walker.root_hits(m, steps, &mut stream.substream(b).rng()))
        .collect()
}

/// Exact lazy-chain mixing time from the root at TV level `tv_epsilon`,
/// together with the materialized tree it was measured on.
pub fn measured_burn_in<T: SuccinctTree + ?Sized>(
    tree: &T,
    tv_epsilon: f64,
    matrix_cap: usize,
) -> Result<(u64, ExplicitTree)> {
    check_probability("tv_epsilon", tv_epsilon)?;
    let explicit = enumerate(tree, matrix_cap as u64)?;
    let chain = transition_matrix(&explicit, true, matrix_cap)?;
    let profile = stationary_exact(&explicit);
    let eps = BigRational::from_float(tv_epsilon).expect("finite");
    // Exceeding the C = 2 bound would contradict the conductance bound; treat it as a cap.
    let ceiling = burn_in_steps(tree.level_budget(), tv_epsilon, 2.0)?;
    let steps = mixing_time_exact(&chain, &profile, &eps, ceiling)?;
    Ok((steps, explicit))
}

/// Burn-in length for a chain run under `burn_in`.
pub fn resolve_burn_in<T: SuccinctTree + ?Sized>(
    tree: &T,
    tv_epsilon: f64,
    burn_in: &BurnIn,
) -> Result<u64> {
    match *burn_in {
        BurnIn::Bound { constant } => burn_in_steps(tree.level_budget(), tv_epsilon, constant),
        BurnIn::ExactMeasured { matrix_cap } => Ok(measured_burn_in(tree, tv_epsilon, matrix_cap)?.0),
    }
}

/// Estimates `α_R` within `(1 ± ζ)` with probability at least `1 − δ`.
///
/// Each batch draws `m` independent restarts of the lazy chain from the root,
/// records the fraction `p̂` that end at the root, and reports `2^{-n} p̂`;
/// the result is the median over batches. The per-sample TV budget is
/// `ζ / (2(n+1))`.
pub fn estimate_alpha<T: SuccinctTree + ?Sized>(
    tree: &T,
    zeta: f64,
    delta: f64,
    config: &EstimatorConfig,
    stream: &RandomStream,
) -> Result<AlphaEstimate> {
    check_zeta(zeta)?;
    check_probability("delta", delta)?;
    if !(config.sample_constant > 0.0) {
        return Err(Error::InvalidParameter("sample constant must be positive".into()));
    }
    let n = tree.level_budget();
    let tv_epsilon = zeta / (2.0 * (n as f64 + 1.0));
    let batches = batch_count(delta);
    let m = samples_per_batch(n, zeta, config.sample_constant);

    let (burn_in, hits) = match config.burn_in {
        BurnIn::Bound { constant } => {
            let steps = burn_in_steps(n, tv_epsilon, constant)?;
            let walker = SuccinctWalker::new(tree, true);
            (steps, run_batches(&walker, batches, m, steps, stream))
        }
        BurnIn::ExactMeasured { matrix_cap } => {
            let (steps, explicit) = measured_burn_in(tree, tv_epsilon, matrix_cap)?;
            let walker = IndexedWalker::new(&explicit, true);
            (steps, run_batches(&walker, batches, m, steps, stream))
        }
    };

    let scale = (-(n as f64)).exp2();
    let batch_values: Vec<f64> = hits.iter().map(|&h| h as f64 / m as f64 * scale).collect();
    let value = median_of_batches(&batch_values)?;
    if value <= 0.0 {
        return Err(Error::NoRootSamples);
    }
    Ok(AlphaEstimate {
        value,
        level_budget: n,
        zeta,
        delta,
        tv_epsilon,
        batches,
        samples_per_batch: m,
        burn_in,
        chain_steps_total: batches * m * burn_in,
        batch_values,
    })
}

/// Additive estimate of `|S|`: `Pr[| |Ŝ| − |S| | ≤ ξ 2^n] ≥ 1 − δ`.
///
/// Sets `ζ = ξ / (2(n+1))` and `ε = ζ / (1+ζ)`, estimates every pruned
/// factor `α_{S_k}` within `(1 ± ε)` with failure budget `δ / (n+1)`, and
/// returns `Â − B̂` with `Â = 1/α̂_{S_n}` and `B̂ = Σ_{k<n} 1/α̂_{S_k}`.
pub fn estimate_size_additive<T: SuccinctTree + ?Sized>(
    tree: &T,
    xi: f64,
    delta: f64,
    config: &EstimatorConfig,
    stream: &RandomStream,
) -> Result<SizeEstimate> {
    check_xi(xi)?;
    check_probability("delta", delta)?;
    let n = tree.level_budget();
    let (zeta, epsilon) = additive_parameters(n, xi);
    let level_delta = delta / (n as f64 + 1.0);

    let per_level_alphas = (0..=n)
        .into_par_iter()
        .map(|k| {
            let pruned = prune(tree, k)?;
            estimate_alpha(&pruned, epsilon, level_delta, config, &stream.substream(k as u64))
        })
        .collect::<Result<Vec<_>>>()?;
    debug_assert!(zeta > epsilon);

    let inverses: Vec<f64> = per_level_alphas.iter().map(|a| 1.0 / a.value).collect();
    let (a_hat, rest) = inverses.split_last().expect("n + 1 levels");
    let b_hat: f64 = rest.iter().sum();
    Ok(SizeEstimate {
        value: a_hat - b_hat,
        method: SizeMethod::Markov,
        level_budget: n,
        xi,
        delta,
        a_hat: *a_hat,
        b_hat,
        samples: per_level_alphas
            .iter()
            .map(|a| a.batches * a.samples_per_batch)
            .sum(),
        chain_steps_total: per_level_alphas.iter().map(|a| a.chain_steps_total).sum(),
        per_level_alphas,
    })
}

/// `(ζ, ε) = (ξ / (2(n+1)), ζ / (1+ζ))`.
pub fn additive_parameters(n: u32, xi: f64) -> (f64, f64) {
    let zeta = xi / (2.0 * (n as f64 + 1.0));
    (zeta, zeta / (1.0 + zeta))
}

/// `p̂ = |Ŝ| / 2^n`, clamped to `[0, 2]`.
pub fn estimate_probability<T: SuccinctTree + ?Sized>(
    tree: &T,
    xi: f64,
    delta: f64,
    config: &EstimatorConfig,
    stream: &RandomStream,
) -> Result<ProbabilityEstimate> {
    let size = estimate_size_additive(tree, xi, delta, config, stream)?;
    let value = (size.value / (size.level_budget as f64).exp2()).clamp(0.0, 2.0);
    Ok(ProbabilityEstimate {
        value,
        xi,
        delta,
        size,
    })
}

/// Maps a heap index in `[1, 2^(n+1) − 1]` to its address.
pub fn heap_address(index: u128) -> Result<NodeAddr> {
    NodeAddr::from_heap_index(index)
}

/// Baseline: the fraction of uniformly drawn addresses of the perfect tree
/// that lie in `S`, scaled by `2^(n+1) − 1`.
///
/// Uses `m = ⌈2 ln(2/δ) / ξ'²⌉` with `ξ' = ξ 2^n / (2^(n+1) − 1)`, so the
/// Hoeffding bound gives the same `± ξ 2^n` contract as the Markov route.
pub fn estimate_size_uniform<T: SuccinctTree + ?Sized>(
    tree: &T,
    xi: f64,
    delta: f64,
    stream: &RandomStream,
) -> Result<SizeEstimate> {
    check_xi(xi)?;
    check_probability("delta", delta)?;
    let n = tree.level_budget();
    let total = (1u128 << (n + 1)) - 1;
    let total_f = total as f64;
    let xi_prime = xi * (n as f64).exp2() / total_f;
    let m = (2.0 * (2.0 / delta).ln() / (xi_prime * xi_prime)).ceil() as u64;
    let mut rng = stream.rng();
    let mut hits = 0u64;
    for _ in 0..m {
        let addr = heap_address(rng.random_range(1..=total))?;
        if tree.member(addr) {
            hits += 1;
        }
    }
    let value = hits as f64 / m as f64 * total_f;
    Ok(SizeEstimate {
        value,
        method: SizeMethod::Uniform,
        level_budget: n,
        xi,
        delta,
        a_hat: value,
        b_hat: 0.0,
        per_level_alphas: Vec::new(),
        samples: m,
        chain_steps_total: 0,
    })
}

/// Knuth's unbiased estimator: one random descent, returning
/// `1 + d_0 (1 + d_1 (1 + ...))` for the branching factors `d_j` met on the way.
pub fn knuth_estimate<T: SuccinctTree + ?Sized>(tree: &T, rng: &mut StreamRng) -> f64 {
    let mut node = NodeAddr::ROOT;
    let mut estimate = 1.0;
    let mut weight = 1.0;
    loop {
        let left = tree.has_child(node, 0);
        let right = tree.has_child(node, 1);
        let next = match (left, right) {
            (false, false) => return estimate,
            (true, true) => {
                weight *= 2.0;
                node.child(rng.slot(1) as u8)
            }
            (true, false) => node.child(0),
            (false, true) => node.child(1),
        };
        estimate += weight;
        node = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tree::{CombTree, FullTree, PathTree, RootOnly};

    #[test]
    fn median_examples() {
        assert_eq!(median_of_batches(&[3.0]).unwrap(), 3.0);
        assert_eq!(median_of_batches(&[1.0, 5.0, 2.0]).unwrap(), 2.0);
        assert_eq!(median_of_batches(&[0.08, 0.09, 0.50, 0.085, 0.082]).unwrap(), 0.085);
        assert!(median_of_batches(&[1.0, 2.0]).is_err());
        assert!(median_of_batches(&[]).is_err());
    }

    #[test]
    fn parameter_formulas() {
        assert_eq!(batch_count(0.1), 21);
        let (zeta, eps) = additive_parameters(4, 0.2);
        assert!((zeta - 0.02).abs() < 1e-15);
        assert!((eps - 0.019_607_843).abs() < 1e-8);
        assert_eq!(samples_per_batch(8, 0.1, 4.0), 3600);
    }

    #[test]
    fn root_only_alpha_is_exact() {
        for n in [0, 3, 10] {
            let t = RootOnly::new(n).unwrap();
            for config in [EstimatorConfig::default(), EstimatorConfig::exact_measured()] {
                let est = estimate_alpha(&t, 0.5, 0.2, &config, &RandomStream::new(n as u64)).unwrap();
                assert_eq!(est.value, (-(n as f64)).exp2());
                assert_eq!(est.batches % 2, 1);
            }
        }
        let size = estimate_size_additive(
            &RootOnly::new(0).unwrap(),
            0.5,
            0.1,
            &EstimatorConfig::default(),
            &RandomStream::new(1),
        )
        .unwrap();
        assert_eq!(size.value, 1.0);
        assert_eq!(size.per_level_alphas.len(), 1);
    }

    #[test]
    fn invalid_parameters() {
        let t = FullTree::new(2).unwrap();
        let s = RandomStream::new(0);
        let c = EstimatorConfig::default();
        assert!(estimate_alpha(&t, 0.0, 0.1, &c, &s).is_err());
        assert!(estimate_alpha(&t, 1.5, 0.1, &c, &s).is_err());
        assert!(estimate_alpha(&t, 0.1, 1.0, &c, &s).is_err());
        assert!(estimate_size_additive(&t, 0.0, 0.1, &c, &s).is_err());
        assert!(estimate_size_uniform(&t, 0.1, 0.0, &s).is_err());
        let tiny_cap = EstimatorConfig {
            burn_in: BurnIn::ExactMeasured { matrix_cap: 3 },
            ..c
        };
        assert!(matches!(
            estimate_alpha(&t, 0.5, 0.1, &tiny_cap, &s),
            Err(Error::CapExceeded { .. })
        ));
    }

    #[test]
    fn heap_mapping() {
        let names: Vec<String> = [1u128, 2, 3, 5]
            .iter()
            .map(|&k| heap_address(k).unwrap().to_string())
            .collect();
        assert_eq!(names, ["", "0", "1", "01"]);
    }

    #[test]
    fn uniform_on_full_tree_is_exact() {
        let est = estimate_size_uniform(&FullTree::new(6).unwrap(), 0.2, 0.1, &RandomStream::new(4)).unwrap();
        assert_eq!(est.value, 127.0);
    }

    #[test]
    fn knuth_deterministic_cases() {
        let mut rng = RandomStream::new(9).rng();
        for _ in 0..50 {
            assert_eq!(knuth_estimate(&FullTree::new(2).unwrap(), &mut rng), 7.0);
            assert_eq!(knuth_estimate(&PathTree::new(4).unwrap(), &mut rng), 5.0);
        }
        // comb(4): descending right at depth j stops with 1 + 2 + ... + 2^(j+1).
        let values: std::collections::BTreeSet<u64> = (0..200)
            .map(|_| knuth_estimate(&CombTree::new(4).unwrap(), &mut rng) as u64)
            .collect();
        assert_eq!(values.into_iter().collect::<Vec<_>>(), vec![3, 7, 15, 31]);
    }

    #[test]
    fn estimates_are_reproducible() {
        let t = CombTree::new(5).unwrap();
        let c = EstimatorConfig::exact_measured();
        let run = || estimate_size_additive(&t, 0.5, 0.3, &c, &RandomStream::new(77)).unwrap();
        assert_eq!(run(), run());
        let a = || estimate_alpha(&t, 0.3, 0.3, &EstimatorConfig::default(), &RandomStream::new(5)).unwrap();
        assert_eq!(a(), a());
    }
}
