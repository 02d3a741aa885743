use pcv_core::baselines::preprocess_text;
use pcv_core::experiments::apportion;
use pcv_core::learn::{candidate_thresholds, compute_metrics, compute_metrics_scored, optimize_threshold, KnnModel, Metric, Objective};
use proptest::prelude::*;

fn matrix(n: usize, d: usize) -> impl Strategy<Value = Vec<Vec<f64>>> {
    prop::collection::vec(prop::collection::vec(-10.0f64..10.0, d), n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn knn_ignores_training_order(
        x in matrix(30, 4),
        labels in prop::collection::vec(0u8..2, 30),
        q in matrix(5, 4),
        shift in 0usize..30,
    ) {
        let a = KnnModel::fit(&x, &labels, 5, Metric::Euclidean).unwrap().predict(&q).unwrap();
        let mut xs = x.clone();
        let mut ys = labels.clone();
        xs.rotate_left(shift);
        ys.rotate_left(shift);
        xs.reverse();
        ys.reverse();
        let b = KnnModel::fit(&xs, &ys, 5, Metric::Euclidean).unwrap().predict(&q).unwrap();
        prop_assert_eq!(a, b);
    }

    #[test]
    fn knn_ignores_uniform_scaling(
        x in matrix(25, 3),
        labels in prop::collection::vec(0u8..2, 25),
        q in matrix(4, 3),
        scale in prop::sample::select(vec![0.5f64, 2.0, 4.0, 8.0]),
    ) {
        for metric in [Metric::Euclidean, Metric::Manhattan] {
            let a = KnnModel::fit(&x, &labels, 3, metric).unwrap().predict(&q).unwrap();
            let s = |m: &Vec<Vec<f64>>| m.iter().map(|r| r.iter().map(|v| v * scale).collect()).collect::<Vec<Vec<f64>>>();
            let b = KnnModel::fit(&s(&x), &labels, 3, metric).unwrap().predict(&s(&q)).unwrap();
            prop_assert_eq!(a, b);
        }
    }

    #[test]
    fn optimized_threshold_is_best_candidate(
        scores in prop::collection::vec(0.0f64..1.0, 2..40),
        seed in any::<u64>(),
    ) {
        let mut labels: Vec<u8> = scores.iter().enumerate().map(|(i, _)| ((seed >> (i % 64)) & 1) as u8).collect();
        labels[0] = 0;
        labels[1] = 1;
        for objective in [Objective::F1, Objective::Gmean] {
            let t = optimize_threshold(&scores, &labels, objective).unwrap();
            let best = candidate_thresholds(&scores)
                .into_iter()
                .map(|c| objective.of(&compute_metrics_scored(&labels, &scores, c).unwrap()))
                .fold(f64::NEG_INFINITY, f64::max);
            prop_assert_eq!(objective.of(&compute_metrics_scored(&labels, &scores, t).unwrap()), best);
        }
    }

    #[test]
    fn metrics_symmetric_under_joint_permutation(
        pairs in prop::collection::vec((0u8..2, 0u8..2), 1..50),
    ) {
        let (y, p): (Vec<u8>, Vec<u8>) = pairs.iter().copied().unzip();
        let (yr, pr): (Vec<u8>, Vec<u8>) = pairs.iter().rev().copied().unzip();
        prop_assert_eq!(compute_metrics(&y, &p).unwrap(), compute_metrics(&yr, &pr).unwrap());
    }

    #[test]
    fn preprocessing_is_idempotent(text in "[A-Za-z0-9 ,.!?'/:-]{0,120}") {
        let once = preprocess_text(&text);
        prop_assert_eq!(preprocess_text(&once.join(" ")), once);
    }

    #[test]
    fn apportionment_sums_and_respects_sizes(
        sizes in prop::collection::vec(0usize..500, 1..6),
        frac in 0.0f64..=1.0,
    ) {
        let total: usize = sizes.iter().sum();
        let n = (total as f64 * frac) as usize;
        let out = apportion(n, &sizes);
        prop_assert_eq!(out.iter().sum::<usize>(), if total == 0 { 0 } else { n });
        for (o, s) in out.iter().zip(&sizes) {
            prop_assert!(o <= s);
        }
    }
}
