//! Statistical guarantees of the estimators on small instances.

use levelwalk::estimate::{
    estimate_alpha, estimate_probability, estimate_size_additive, estimate_size_uniform,
    knuth_estimate, EstimatorConfig,
};
use levelwalk::tree::{exact_count, CombTree, FullTree, PathTree};
use levelwalk::RandomStream;

#[test]
fn alpha_on_full_two() {
    // Exact α = 1/12.
    let tree = FullTree::new(2).unwrap();
    let config = EstimatorConfig::exact_measured();
    let inside = (0..100)
        .filter(|&seed| {
            let v = estimate_alpha(&tree, 0.1, 0.1, &config, &RandomStream::new(seed)).unwrap().value;
            (0.075..=0.0917).contains(&v)
        })
        .count();
    assert!(inside >= 80, "{inside}/100");
}

#[test]
fn alpha_with_bound_burn_in() {
    let tree = PathTree::new(3).unwrap();
    let exact = 1.0 / 15.0;
    let est = estimate_alpha(&tree, 0.2, 0.2, &EstimatorConfig::default(), &RandomStream::new(1)).unwrap();
    assert!((est.value - exact).abs() <= 0.2 * exact, "{}", est.value);
    assert_eq!(est.chain_steps_total, est.batches * est.samples_per_batch * est.burn_in);
}

#[test]
fn size_and_probability_on_small_trees() {
    let config = EstimatorConfig::exact_measured();
    for (tree, exact) in [
        (Box::new(FullTree::new(4).unwrap()) as Box<dyn levelwalk::SuccinctTree>, 31.0),
        (Box::new(CombTree::new(4).unwrap()), 9.0),
    ] {
        let est = estimate_size_additive(&tree, 0.5, 0.2, &config, &RandomStream::new(3)).unwrap();
        assert_eq!(est.per_level_alphas.len(), 5);
        assert!((est.value - (est.a_hat - est.b_hat)).abs() < 1e-9);
        assert!((est.value - exact).abs() <= 0.5 * 16.0, "{} vs {exact}", est.value);
        let p = estimate_probability(&tree, 0.5, 0.2, &config, &RandomStream::new(3)).unwrap();
        assert!((p.value - est.value / 16.0).abs() < 1e-12);
        assert!((p.value - exact / 16.0).abs() <= 0.5);
    }
}

#[test]
fn uniform_on_comb_ten() {
    let tree = CombTree::new(10).unwrap();
    assert_eq!(exact_count(&tree, 100).unwrap(), 21);
    let ok = (0..100)
        .filter(|&seed| {
            let v = estimate_size_uniform(&tree, 0.05, 0.1, &RandomStream::new(seed)).unwrap().value;
            (v - 21.0).abs() <= 0.05 * 1024.0
        })
        .count();
    assert!(ok >= 85, "{ok}/100");
}

#[test]
fn knuth_is_unbiased_on_comb_four() {
    let tree = CombTree::new(4).unwrap();
    let mut rng = RandomStream::new(11).rng();
    let runs = 100_000;
    let samples: Vec<f64> = (0..runs).map(|_| knuth_estimate(&tree, &mut rng)).collect();
    let mean = samples.iter().sum::<f64>() / runs as f64;
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (runs as f64 - 1.0);
    let se = (var / runs as f64).sqrt();
    assert!((mean - 9.0).abs() <= 3.0 * se, "mean {mean} se {se}");
}
