//! Empirical behaviour of the simulated chain against exact stationary laws.

use levelwalk::chain::{burn_in_steps, run_chain, sample_stationary, ChainParams};
use levelwalk::tree::FullTree;
use levelwalk::RandomStream;

#[test]
fn root_frequency_on_full_six() {
    // π(root) = 1/(n+1) on the full tree.
    let tree = FullTree::new(6).unwrap();
    let steps = burn_in_steps(6, 0.01, 2.0).unwrap();
    let mut rng = RandomStream::new(2026).rng();
    let trials = 100_000;
    let hits = (0..trials)
        .filter(|_| run_chain(&tree, steps, true, &mut rng).is_root())
        .count();
    let freq = hits as f64 / trials as f64;
    assert!((freq - 1.0 / 7.0).abs() <= 0.02, "root frequency {freq}");
}

#[test]
fn depth_histogram_on_full_four() {
    // Level mass r_i 2^(n-i) α = 1/(n+1) for every level.
    let tree = FullTree::new(4).unwrap();
    let params = ChainParams {
        tv_epsilon: 0.01,
        ..ChainParams::default()
    };
    let m = 100_000;
    let samples = sample_stationary(&tree, m, &params, &mut RandomStream::new(7).rng()).unwrap();
    let mut hist = [0usize; 5];
    for s in &samples {
        hist[s.depth() as usize] += 1;
    }
    for h in hist {
        let f = h as f64 / m as f64;
        assert!((f - 0.2).abs() <= 0.02, "{hist:?}");
    }
}

#[test]
fn trajectories_do_not_depend_on_stream_order() {
    let tree = FullTree::new(5).unwrap();
    let base = RandomStream::new(3);
    let forward: Vec<_> = (0..8)
        .map(|i| run_chain(&tree, 500, true, &mut base.substream(i).rng()))
        .collect();
    let backward: Vec<_> = (0..8)
        .rev()
        .map(|i| run_chain(&tree, 500, true, &mut base.substream(i).rng()))
        .collect();
    assert_eq!(forward, backward.into_iter().rev().collect::<Vec<_>>());
}
