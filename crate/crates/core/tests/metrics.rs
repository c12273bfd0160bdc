use dmagt::metrics::*;
use proptest::prelude::*;

fn brute_auc(scores: &[f64], labels: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut pairs = 0.0;
    for (i, &si) in scores.iter().enumerate() {
        for (j, &sj) in scores.iter().enumerate() {
            if labels[i] == 1.0 && labels[j] == 0.0 {
                pairs += 1.0;
                total += if si > sj {
                    1.0
                } else if si == sj {
                    0.5
                } else {
                    0.0
                };
            }
        }
    }
    total / pairs
}

fn step_sum_aupr(scores: &[f64], labels: &[f64]) -> f64 {
    let mut thresholds: Vec<f64> = scores.to_vec();
    thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
    thresholds.dedup();
    let pos = labels.iter().filter(|&&y| y == 1.0).count() as f64;
    let mut prev = 0.0;
    let mut area = 0.0;
    for t in thresholds {
        let mut tp = 0.0;
        let mut pred = 0.0;
        for (s, y) in scores.iter().zip(labels) {
            if *s >= t {
                pred += 1.0;
                if *y == 1.0 {
                    tp += 1.0;
                }
            }
        }
        let recall = tp / pos;
        area += (recall - prev) * tp / pred;
        prev = recall;
    }
    area
}

// Scores from a coarse grid produce ties; labels always contain both classes.
fn scored_labels() -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
    (2usize..=200, any::<bool>()).prop_flat_map(|(n, coarse)| {
        let score = if coarse {
            (0u32..8).prop_map(|v| v as f64 / 8.0).boxed()
        } else {
            (0.0f64..1.0).boxed()
        };
        (proptest::collection::vec(score, n), proptest::collection::vec(any::<bool>(), n - 2)).prop_map(|(s, l)| {
            let mut labels: Vec<f64> = l.into_iter().map(|b| if b { 1.0 } else { 0.0 }).collect();
            labels.push(1.0);
            labels.push(0.0);
            (s, labels)
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn auc_matches_pair_counting((scores, labels) in scored_labels()) {
        let got = roc_auc(&scores, &labels).unwrap().area;
        prop_assert!((got - brute_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn aupr_matches_step_sum((scores, labels) in scored_labels()) {
        let got = pr_auc(&scores, &labels).unwrap().area;
        prop_assert!((got - step_sum_aupr(&scores, &labels)).abs() < 1e-10);
    }

    #[test]
    fn auc_invariant_under_monotone_maps((scores, labels) in scored_labels()) {
        let a = roc_auc(&scores, &labels).unwrap().area;
        let mapped: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() - 7.0).collect();
        prop_assert!((a - roc_auc(&mapped, &labels).unwrap().area).abs() < 1e-12);
    }

    #[test]
    fn label_swap_complements_auc((scores, labels) in scored_labels()) {
        let mut distinct = scores.clone();
        distinct.sort_by(|a, b| a.partial_cmp(b).unwrap());
        distinct.dedup();
        prop_assume!(distinct.len() == scores.len());
        let flipped: Vec<f64> = labels.iter().map(|y| 1.0 - y).collect();
        let sum = roc_auc(&scores, &labels).unwrap().area + roc_auc(&scores, &flipped).unwrap().area;
        prop_assert!((sum - 1.0).abs() < 1e-12);
    }

    #[test]
    fn roc_points_are_monotone((scores, labels) in scored_labels()) {
        let pts = roc_auc(&scores, &labels).unwrap().points;
        prop_assert_eq!(pts[0], (0.0, 0.0));
        prop_assert_eq!(*pts.last().unwrap(), (1.0, 1.0));
        for w in pts.windows(2) {
            prop_assert!(w[1].0 >= w[0].0 && w[1].1 >= w[0].1);
        }
    }

    #[test]
    fn confusion_matches_loop((scores, labels) in scored_labels()) {
        let c = confusion(&scores, &labels, 0.5).unwrap();
        let mut want = [0usize; 4];
        for (s, y) in scores.iter().zip(&labels) {
            let idx = match (*s >= 0.5, *y == 1.0) {
                (true, true) => 0,
                (false, false) => 1,
                (true, false) => 2,
                (false, true) => 3,
            };
            want[idx] += 1;
        }
        prop_assert_eq!([c.tp, c.tn, c.fp, c.fn_], want);
        prop_assert_eq!(c.total(), scores.len());
        let m = threshold_metrics(&c);
        for v in [m.accuracy, m.sensitivity, m.specificity, m.precision] {
            prop_assert!((0.0..=1.0).contains(&v));
        }
        prop_assert!((-1.0..=1.0).contains(&m.mcc));
    }
}
