use std::collections::HashSet;

use irn_core::checkpoint::Checkpoint;
use irn_core::eval::{filtered_rank, raw_rank};
use irn_core::kgdata::{shuffle, Direction, FilterIndex, Query};
use irn_core::numcore::{log_sigmoid, sigmoid, stable_softmax};
use irn_core::paths::{build_dataset_all, dp_baseline, evaluate_paths, generate_world, EdgeMode, SubPathFilter};
use irn_core::{ParamStore, Tensor};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn contiguous_in(needle: &[usize], hay: &[usize]) -> bool {
    needle.len() <= hay.len() && hay.windows(needle.len()).any(|w| w == needle)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn filtered_rank_is_bounded_by_raw_rank(
        scores in prop::collection::vec(-3.0f64..3.0, 2..40),
        gold_pick in any::<prop::sample::Index>(),
        known in prop::collection::vec(any::<prop::sample::Index>(), 0..10),
    ) {
        let n = scores.len();
        let gold = gold_pick.index(n);
        let q = Query { subject: 0, relation: 0, object: gold, direction: Direction::Original };
        let mut filter = FilterIndex::default();
        for k in &known {
            filter.insert(0, 0, k.index(n));
        }
        let f = filtered_rank(&q, &scores, &filter).unwrap();
        let r = raw_rank(&scores, gold);
        prop_assert!(f >= 1 && f <= r && r <= n);
        let removed = known.iter().map(|k| k.index(n)).filter(|&e| e != gold && scores[e] > scores[gold]).collect::<HashSet<_>>().len();
        prop_assert_eq!(f, r - removed);
    }

    #[test]
    fn shuffle_is_a_permutation(n in 0usize..200, seed in any::<u64>()) {
        let mut v: Vec<usize> = (0..n).collect();
        shuffle(&mut v, &mut ChaCha8Rng::seed_from_u64(seed));
        let mut sorted = v.clone();
        sorted.sort_unstable();
        prop_assert_eq!(sorted, (0..n).collect::<Vec<_>>());
    }

    #[test]
    fn softmax_is_a_distribution(logits in prop::collection::vec(-700.0f64..700.0, 1..30)) {
        let p = stable_softmax(&logits).unwrap();
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        prop_assert!(p.iter().all(|&x| (0.0..=1.0).contains(&x)));
    }

    #[test]
    fn log_sigmoid_agrees_with_sigmoid(x in -700.0f64..700.0) {
        let l = log_sigmoid(x);
        prop_assert!(l.is_finite() && l <= 0.0);
        let s = sigmoid(x);
        if s > 1e-300 {
            prop_assert!((l - s.ln()).abs() <= 1e-12 * (1.0 + l.abs()));
        }
    }

    #[test]
    fn subpath_filter_keeps_an_antichain(paths in prop::collection::vec(prop::collection::vec(0usize..6, 2..6), 1..40)) {
        let mut f = SubPathFilter::default();
        let mut kept: Vec<Vec<usize>> = Vec::new();
        for p in &paths {
            let clash = kept.iter().any(|k| contiguous_in(p, k) || contiguous_in(k, p));
            prop_assert_eq!(f.try_accept(p), !clash);
            if !clash {
                kept.push(p.clone());
            }
        }
    }

    #[test]
    fn checkpoints_round_trip(values in prop::collection::vec(-1e6f64..1e6, 1..50), epoch in 0usize..1000) {
        let mut store = ParamStore::new();
        store.add("a", Tensor::vector(values.clone()));
        store.add("b", Tensor::matrix(1, values.len(), values));
        let c = Checkpoint::new("test", serde_json::json!({"k": 1}), None, epoch, None, store);
        let bytes = c.to_bytes().unwrap();
        let back = Checkpoint::from_bytes(&bytes).unwrap();
        prop_assert_eq!(back.header.epoch, epoch);
        prop_assert!(back.params.same_values(&c.params));
        prop_assert_eq!(back.to_bytes().unwrap(), bytes);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn generated_worlds_yield_judgeable_datasets(seed in 0u64..1000, k in 2usize..5) {
        let g = generate_world(15, k, seed, EdgeMode::Knn).unwrap();
        let splits = build_dataset_all(&g, seed).unwrap();
        let all: Vec<_> = splits.all().cloned().collect();
        // Gold paths are always judged correct.
        let golds: Vec<Vec<usize>> = all.iter().map(|i| i.path.clone()).collect();
        let e = evaluate_paths(&g, &all, &golds).unwrap();
        prop_assert_eq!(e.correct, all.len());
        // The baseline only emits real edges, so its paths are valid or empty.
        let preds = dp_baseline(15, &splits.train, &all);
        for p in preds.iter().filter(|p| !p.is_empty()) {
            prop_assert!(g.path_cost(p).is_some());
        }
        // Training paths are recovered exactly by the baseline when hop-minimal.
        let train_eval = evaluate_paths(&g, &splits.train, &dp_baseline(15, &splits.train, &splits.train)).unwrap();
        prop_assert_eq!(train_eval.valid, splits.train.len());
    }
}
