mod common;

use std::collections::BTreeSet;

use fairnb::miner::{
    brute_force_patterns, sort_patterns, Miner, MinerConfig, Pattern, Ranking, VariableOrder,
    DEFAULT_BRUTE_FORCE_CAP,
};
use fairnb::synthetic::{random_model, three_feature_example, RandomModelSpec};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Key = (Vec<(usize, usize)>, Vec<(usize, usize)>);

fn key(p: &Pattern) -> Key {
    (p.x.bindings().to_vec(), p.y.bindings().to_vec())
}

#[test]
fn brute_force_scores_agree_with_direct_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(201);
    for _ in 0..50 {
        let spec = RandomModelSpec::random(&mut rng, 4, 3);
        let m = random_model(&mut rng, &spec);
        let lib = brute_force_patterns(&m, 0.0, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        let direct = common::all_patterns(&m);
        assert_eq!(lib.len(), direct.len());
        let lib_keys: BTreeSet<Key> = lib.iter().map(key).collect();
        for (x, y, d) in direct {
            let p = lib.iter().find(|p| p.x.bindings() == x && p.y.bindings() == y).unwrap();
            assert!((p.delta - d).abs() < 1e-12);
            assert!(lib_keys.contains(&(x, y)));
        }
    }
}

#[test]
fn miner_matches_brute_force_on_random_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    for _ in 0..100 {
        let spec = RandomModelSpec::random(&mut rng, 5, 3);
        let m = random_model(&mut rng, &spec);
        let delta: f64 = rng.gen_range(0.0..0.25);
        let mut oracle = brute_force_patterns(&m, delta, DEFAULT_BRUTE_FORCE_CAP).unwrap();
        oracle.retain(|p| p.is_discriminating(delta));
        let miner = Miner::new(&m);
        let all = miner.mine_all(delta).unwrap();
        let got: BTreeSet<Key> = all.patterns.iter().map(key).collect();
        let want: BTreeSet<Key> = oracle.iter().map(key).collect();
        assert_eq!(got, want);
        assert_eq!(all.certified_fair, oracle.is_empty());
        assert!(all.nodes_visited <= all.search_space_size);
        for ranking in [Ranking::Discrimination, Ranking::Divergence] {
            sort_patterns(&mut oracle, ranking);
            for k in [1, 5, 20] {
                let top = miner.mine_topk(delta, k, ranking).unwrap();
                let n = k.min(oracle.len());
                assert_eq!(top.patterns, oracle[..n].to_vec(), "k={k} {ranking:?}");
            }
        }
        let (fair, witness) = miner.verify_fair(delta).unwrap();
        assert_eq!(fair, oracle.is_empty());
        assert_eq!(witness.is_some(), !oracle.is_empty());
    }
}

#[test]
fn every_branching_order_gives_the_same_answer() {
    let mut rng = ChaCha8Rng::seed_from_u64(203);
    for _ in 0..20 {
        let spec = RandomModelSpec::random(&mut rng, 5, 3);
        let m = random_model(&mut rng, &spec);
        let n = m.schema().feature_count();
        let mut custom: Vec<usize> = (0..n).collect();
        custom.reverse();
        let reference = Miner::new(&m).mine_topk(0.05, 7, Ranking::Divergence).unwrap();
        for order in [VariableOrder::Natural, VariableOrder::Custom(custom)] {
            let miner = Miner::with_config(&m, &MinerConfig { order }).unwrap();
            let report = miner.mine_topk(0.05, 7, Ranking::Divergence).unwrap();
            assert_eq!(report.patterns, reference.patterns);
        }
    }
}

#[test]
fn pruning_fires_on_larger_models() {
    let mut rng = ChaCha8Rng::seed_from_u64(204);
    for _ in 0..30 {
        let mut spec = RandomModelSpec::random(&mut rng, 6, 3);
        while spec.cardinalities.len() < 4 {
            spec = RandomModelSpec::random(&mut rng, 6, 3);
        }
        let m = random_model(&mut rng, &spec);
        let report = Miner::new(&m).mine_topk(0.1, 5, Ranking::Discrimination).unwrap();
        assert!(report.nodes_visited < report.search_space_size);
    }
}

#[test]
fn reports_are_deterministic() {
    let m = three_feature_example();
    let a = Miner::new(&m).mine_topk(0.05, 4, Ranking::Divergence).unwrap();
    let b = Miner::new(&m).mine_topk(0.05, 4, Ranking::Divergence).unwrap();
    assert_eq!(a, b);
    assert_eq!(a.to_json(m.schema()), b.to_json(m.schema()));
}

#[test]
fn single_binary_sensitive_feature_has_two_candidates() {
    let spec = RandomModelSpec::binary(1, 0);
    let m = random_model(&mut ChaCha8Rng::seed_from_u64(5), &spec);
    let all = brute_force_patterns(&m, 0.0, DEFAULT_BRUTE_FORCE_CAP).unwrap();
    assert_eq!(all.len(), 2);
    assert!(all.iter().all(|p| p.y.is_empty()));
}
