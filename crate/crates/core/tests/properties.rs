//! Property tests for the partition, reward, transition and evaluation
//! invariants.

mod common;

use proptest::prelude::*;

use pomdp_rec_core::data::{
    build_transitions, split_by_time, window_partition, MatrixDims, ObservationMatrix, PairMap,
    PairSet, RatingRecord,
};
use pomdp_rec_core::eval::{evaluate_windows, rmse, WindowEval};
use pomdp_rec_core::fitted_q::{shuffle_patterns, Pattern};
use pomdp_rec_core::pmf::BeliefState;
use pomdp_rec_core::reward::{reward_from_rmse, RewardConfig};
use pomdp_rec_core::transition::{successor_distribution, tau, LogisticModel};

fn record_strategy() -> impl Strategy<Value = RatingRecord> {
    (1u32..=10, 1u32..=10, 1u32..=5, 0i64..1000).prop_map(|(u, i, v, t)| RatingRecord {
        user_id: u,
        item_id: i,
        value: v as f64,
        timestamp: t,
    })
}

proptest! {
    #[test]
    fn split_is_a_partition(records in prop::collection::vec(record_strategy(), 1..120),
                            fraction in 0.05f64..1.0) {
        let (train, test) = split_by_time(&records, fraction).unwrap();
        prop_assert_eq!(train.len() + test.len(), records.len());
        // Multiset equality.
        let key = |r: &RatingRecord| (r.timestamp, r.user_id, r.item_id, r.value.to_bits());
        let mut combined: Vec<_> = train.iter().chain(test.iter()).map(key).collect();
        combined.sort_unstable();
        let mut original: Vec<_> = records.iter().map(key).collect();
        original.sort_unstable();
        prop_assert_eq!(combined, original);
        // Everything in train precedes everything in test in sort order.
        if let (Some(last), Some(first)) = (train.last(), test.first()) {
            prop_assert!(key(last) <= key(first));
        }
    }

    #[test]
    fn windows_partition_the_records(records in prop::collection::vec(record_strategy(), 1..150),
                                     n_windows in 2usize..7) {
        let dims = MatrixDims { n_users: 10, n_items: 10 };
        let windows = window_partition(&records, n_windows, dims).unwrap();
        prop_assert_eq!(windows.len(), n_windows);

        // Brute-force assignment: each record goes to exactly one window by
        // scanning half-open equal-width intervals, and the deduplicated
        // union of windows equals the brute-force per-window dedup.
        let t_min = records.iter().map(|r| r.timestamp).min().unwrap();
        let t_max = records.iter().map(|r| r.timestamp).max().unwrap();
        let span = (t_max - t_min + 1) as f64;
        let width = span / n_windows as f64;
        let mut expected: Vec<PairMap> = vec![PairMap::new(); n_windows];
        let mut assigned = vec![0usize; n_windows];
        let mut sorted = records.clone();
        sorted.sort_by_key(|r| r.timestamp);
        for record in &sorted {
            let offset = (record.timestamp - t_min) as f64;
            let mut w = n_windows - 1;
            for candidate in 0..n_windows {
                if offset >= candidate as f64 * width && offset < (candidate + 1) as f64 * width {
                    w = candidate;
                    break;
                }
            }
            assigned[w] += 1;
            expected[w].insert((record.user_id, record.item_id), record.value);
        }
        prop_assert_eq!(assigned.iter().sum::<usize>(), records.len());
        for (window, expect) in windows.iter().zip(&expected) {
            let got: PairMap = window.entries().map(|(u, i, v)| ((u, i), v)).collect();
            prop_assert_eq!(&got, expect);
        }
    }

    #[test]
    fn transition_count_matches_brute_force(
        entries in prop::collection::vec((0usize..5, 1u32..=10, 1u32..=10, 1u32..=5), 0..200)
    ) {
        let dims = MatrixDims { n_users: 10, n_items: 10 };
        let mut windows: Vec<ObservationMatrix> =
            (0..5).map(|w| ObservationMatrix::new(w, dims)).collect();
        for (w, u, i, v) in &entries {
            windows[*w].insert(*u, *i, *v as f64).unwrap();
        }
        let triples = build_transitions(&windows);

        let mut expected = 0usize;
        for w in 0..4 {
            for u in 1..=10u32 {
                for i in 1..=10u32 {
                    if windows[w].contains(u, i) && windows[w + 1].contains(u, i) {
                        expected += 1;
                    }
                }
            }
        }
        prop_assert_eq!(triples.len(), expected);
        for t in &triples {
            prop_assert_eq!(t.o_next_window, t.o_window + 1);
            prop_assert!(!t.action_only);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(1000))]

    #[test]
    fn reward_is_bounded_and_half_only_at_zero(rmse_value in 0.0f64..50.0,
                                               scaling in 0.01f64..10.0) {
        let config = RewardConfig::new(scaling).unwrap();
        let r = reward_from_rmse(rmse_value, &config);
        prop_assert!(r > 0.0 && r <= 0.5);
        if rmse_value == 0.0 {
            prop_assert_eq!(r, 0.5);
        } else {
            prop_assert!(r < 0.5);
        }
        // Strictly decreasing in both the error and the scaling constant.
        prop_assert!(reward_from_rmse(rmse_value + 0.1, &config) < r);
        let stronger = RewardConfig::new(scaling * 1.5).unwrap();
        if rmse_value > 0.0 {
            prop_assert!(reward_from_rmse(rmse_value, &stronger) < r);
        }
    }
}

proptest! {
    #[test]
    fn tau_is_strictly_inside_unit_interval_and_distributions_normalize(
        weights in prop::collection::vec(-5.0f64..5.0, 5),
        b in prop::collection::vec(-3.0f64..3.0, 2),
        candidates in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 2), 1..6)
    ) {
        let model = LogisticModel::from_weights(weights);
        let belief = |vector: Vec<f64>| BeliefState { vector, user_id: 1, item_id: 1 };
        let b = belief(b);
        let candidates: Vec<BeliefState> = candidates.into_iter().map(belief).collect();
        for candidate in &candidates {
            let t = tau(&model, &b, candidate).unwrap();
            prop_assert!(t > 0.0 && t < 1.0);
        }
        let distribution = successor_distribution(&model, &b, &candidates).unwrap();
        let total: f64 = distribution.iter().sum();
        prop_assert!((total - 1.0).abs() < 1e-12);
        for w in &distribution {
            prop_assert!(*w > 0.0);
        }
    }

    #[test]
    fn rmse_matches_two_pass_oracle(values in prop::collection::vec((0u32..40, -5.0f64..5.0, -5.0f64..5.0), 1..40)) {
        let mut predictions = PairMap::new();
        let mut truth = PairMap::new();
        for (idx, p, t) in &values {
            predictions.insert((1, *idx + 1), *p);
            truth.insert((1, *idx + 1), *t);
        }
        let mask: PairSet = truth.keys().copied().collect();
        let got = rmse(&predictions, &truth, &mask).unwrap();

        // Independent oracle: explicit two-pass sum of squares then sqrt.
        let mut sum = 0.0;
        for key in &mask {
            let d = truth[key] - predictions[key];
            sum += d * d;
        }
        let expected = (sum / mask.len() as f64).sqrt();
        prop_assert!((got - expected).abs() < 1e-12);
    }

    #[test]
    fn pooled_rmse_equals_union_rmse(split_points in prop::collection::vec(0usize..1000, 1..6),
                                     residuals in prop::collection::vec(-4.0f64..4.0, 2..120)) {
        // Split the residual list into windows at the given points; the
        // pair-weighted pooled RMSE must equal the RMSE over the union.
        let n = residuals.len();
        let mut cuts: Vec<usize> = split_points.into_iter().map(|c| c % n).collect();
        cuts.push(0);
        cuts.push(n);
        cuts.sort_unstable();
        cuts.dedup();

        let mut evals = Vec::new();
        let mut storage = Vec::new();
        for pair in cuts.windows(2) {
            let (lo, hi) = (pair[0], pair[1]);
            let mut predictions = PairMap::new();
            let mut truth = PairMap::new();
            for (offset, r) in residuals[lo..hi].iter().enumerate() {
                let key = (1u32, (lo + offset) as u32 + 1);
                predictions.insert(key, 0.0);
                truth.insert(key, *r);
            }
            storage.push((predictions, truth));
        }
        for (idx, (predictions, truth)) in storage.iter().enumerate() {
            evals.push(WindowEval { window_index: idx, predictions, truth });
        }
        let (_, pooled) = evaluate_windows(&evals).unwrap();

        let mut all_predictions = PairMap::new();
        let mut all_truth = PairMap::new();
        for (r, idx) in residuals.iter().zip(1u32..) {
            all_predictions.insert((1, idx), 0.0);
            all_truth.insert((1, idx), *r);
        }
        let mask: PairSet = all_truth.keys().copied().collect();
        let union = rmse(&all_predictions, &all_truth, &mask).unwrap();
        prop_assert!((pooled - union).abs() < 1e-12, "pooled {pooled} union {union}");
    }

    #[test]
    fn shuffle_is_a_permutation(targets in prop::collection::vec(-10.0f64..10.0, 0..50), seed in any::<u64>()) {
        let patterns: Vec<Pattern> = targets
            .iter()
            .map(|t| Pattern { input: vec![*t], target: *t })
            .collect();
        let shuffled = shuffle_patterns(patterns.clone(), seed);
        let mut before: Vec<u64> = patterns.iter().map(|p| p.target.to_bits()).collect();
        let mut after: Vec<u64> = shuffled.iter().map(|p| p.target.to_bits()).collect();
        before.sort_unstable();
        after.sort_unstable();
        prop_assert_eq!(before, after);
        let again = shuffle_patterns(patterns, seed);
        prop_assert_eq!(shuffled, again);
    }
}
