use crate::error::{Error, Result};

/// Area under the ROC curve: the probability that a random clicked impression
/// outscores a random unclicked one, ties counting one half. `None` when
/// either class is absent.
pub fn auc(scores: &[f64], clicks: &[f64]) -> Option<f64> {
    assert_eq!(scores.len(), clicks.len(), "auc: length mismatch");
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut wins = 0.0;
    let mut neg_below = 0.0;
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        let (mut pos, mut neg) = (0.0, 0.0);
        while j < idx.len() && scores[idx[j]] == scores[idx[i]] {
            if clicks[idx[j]] > 0.5 {
                pos += 1.0;
            } else {
                neg += 1.0;
            }
            j += 1;
        }
        wins += pos * neg_below + 0.5 * pos * neg;
        neg_below += neg;
        i = j;
    }
    let n_pos = clicks.iter().filter(|&&c| c > 0.5).count() as f64;
    let n_neg = clicks.len() as f64 - n_pos;
    if n_pos == 0.0 || n_neg == 0.0 {
        return None;
    }
    Some(wins / (n_pos * n_neg))
}

/// Expected over observed clicks. `None` without any observed click.
pub fn calibration(scores: &[f64], clicks: &[f64]) -> Option<f64> {
    assert_eq!(scores.len(), clicks.len(), "calibration: length mismatch");
    let observed: f64 = clicks.iter().sum();
    if observed == 0.0 {
        return None;
    }
    Some(scores.iter().sum::<f64>() / observed)
}

/// Fraction of the external scorer's calibration error removed by the model.
/// `None` when the external scorer is exactly calibrated.
pub fn calibration_gain(external: f64, model: f64) -> Option<f64> {
    let base = (1.0 - external).abs();
    if base == 0.0 {
        return None;
    }
    Some((base - (1.0 - model).abs()) / base)
}

/// `100 * (combined - external) / external`.
pub fn relative_auc_improvement(external: f64, combined: f64) -> Option<f64> {
    if external == 0.0 {
        return None;
    }
    Some(100.0 * (combined - external) / external)
}

/// Average of two probabilities.
pub fn combine_average(p_deep: f64, p_external: f64) -> Result<f64> {
    for p in [p_deep, p_external] {
        if !(0.0..=1.0).contains(&p) {
            return Err(Error::InvalidProbability(p));
        }
    }
    Ok((p_deep + p_external) / 2.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::layers::SeededRng;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};

    pub(crate) fn brute_auc(s: &[f64], c: &[f64]) -> Option<f64> {
        let (mut num, mut den) = (0.0, 0.0);
        for i in 0..s.len() {
            for j in 0..s.len() {
                if c[i] == 1.0 && c[j] == 0.0 {
                    den += 1.0;
                    if s[i] > s[j] {
                        num += 1.0;
                    } else if s[i] == s[j] {
                        num += 0.5;
                    }
                }
            }
        }
        (den > 0.0).then(|| num / den)
    }

    #[test]
    fn perfect_and_tied() {
        assert_eq!(auc(&[0.9, 0.8, 0.3], &[1.0, 1.0, 0.0]), Some(1.0));
        assert_eq!(auc(&[0.5, 0.5], &[1.0, 0.0]), Some(0.5));
        assert_eq!(auc(&[0.1, 0.2, 0.9], &[1.0, 1.0, 0.0]), Some(0.0));
    }

    #[test]
    fn single_class_is_undefined() {
        assert_eq!(auc(&[0.1, 0.2], &[1.0, 1.0]), None);
        assert_eq!(auc(&[0.1, 0.2], &[0.0, 0.0]), None);
        assert_eq!(auc(&[], &[]), None);
    }

    #[test]
    fn matches_pairwise_oracle() {
        let mut rng = SeededRng::seed_from_u64(11);
        for _ in 0..50 {
            let n = 200;
            // Coarse scores force plenty of ties.
            let s: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..20u8)) / 20.0).collect();
            let c: Vec<f64> = (0..n).map(|_| f64::from(rng.random_range(0..2u8))).collect();
            let a = auc(&s, &c).unwrap();
            assert!((a - brute_auc(&s, &c).unwrap()).abs() < 1e-12);
        }
    }

    #[test]
    fn calibration_cases() {
        // Scores sum to 10, clicks to 8.
        let s = [1.0; 10];
        let c = [1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 1.0, 0.0, 0.0];
        assert_eq!(calibration(&s, &c), Some(1.25));
        assert_eq!(calibration(&[1.0, 0.0, 1.0], &[1.0, 0.0, 1.0]), Some(1.0));
        assert_eq!(calibration(&[0.3], &[0.0]), None);
    }

    #[test]
    fn bernoulli_labels_are_calibrated() {
        let mut rng = SeededRng::seed_from_u64(12);
        let n = 100_000;
        let s: Vec<f64> = (0..n).map(|_| rng.random_range(0.01..0.5)).collect();
        let c: Vec<f64> = s.iter().map(|&p| f64::from(u8::from(rng.random_bool(p)))).collect();
        let cal = calibration(&s, &c).unwrap();
        assert!((0.97..=1.03).contains(&cal), "{cal}");
    }

    #[test]
    fn gain_cases() {
        assert!((calibration_gain(1.5, 1.25).unwrap() - 0.5).abs() < 1e-15);
        assert_eq!(calibration_gain(1.5, 1.5), Some(0.0));
        assert_eq!(calibration_gain(1.5, 1.0), Some(1.0));
        assert_eq!(calibration_gain(1.0, 1.2), None);
    }

    #[test]
    fn combine_cases() {
        assert!((combine_average(0.2, 0.6).unwrap() - 0.4).abs() < 1e-15);
        assert_eq!(combine_average(0.3, 0.3).unwrap(), 0.3);
        assert!(combine_average(1.2, 0.3).is_err());
        assert!(combine_average(0.2, -0.1).is_err());
    }

    #[test]
    fn equal_scores_give_zero_improvement() {
        assert_eq!(relative_auc_improvement(0.7, 0.7), Some(0.0));
    }

    proptest! {
        #[test]
        fn rank_statistic_invariance(pairs in prop::collection::vec((0.0f64..1.0, any::<bool>()), 2..200)) {
            let s: Vec<f64> = pairs.iter().map(|p| p.0).collect();
            let c: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
            let t: Vec<f64> = s.iter().map(|&x| (3.0 * x).exp() - 7.0).collect();
            prop_assert_eq!(auc(&s, &c), auc(&t, &c));
        }

        #[test]
        fn label_flip_complements(pairs in prop::collection::vec((0u32..1_000_000, any::<bool>()), 2..200)) {
            let mut seen = std::collections::HashSet::new();
            let pairs: Vec<_> = pairs.into_iter().filter(|p| seen.insert(p.0)).collect();
            let s: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let c: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
            let f: Vec<f64> = c.iter().map(|c| 1.0 - c).collect();
            if let (Some(a), Some(b)) = (auc(&s, &c), auc(&s, &f)) {
                prop_assert!((a + b - 1.0).abs() < 1e-12);
            }
        }

        #[test]
        fn calibration_scales_linearly(s in prop::collection::vec(0.0f64..1.0, 1..50), alpha in 0.0f64..1.0) {
            let c: Vec<f64> = (0..s.len()).map(|i| (i % 2 == 0) as u8 as f64).collect();
            let scaled: Vec<f64> = s.iter().map(|x| alpha * x).collect();
            let a = calibration(&s, &c).unwrap();
            let b = calibration(&scaled, &c).unwrap();
            prop_assert!((b - alpha * a).abs() < 1e-12);
        }

        #[test]
        fn combine_is_symmetric_and_bounded(p in 0.0f64..=1.0, q in 0.0f64..=1.0) {
            let a = combine_average(p, q).unwrap();
            prop_assert_eq!(a, combine_average(q, p).unwrap());
            prop_assert!(a >= p.min(q) && a <= p.max(q));
        }

        #[test]
        fn rank_sum_matches_oracle(pairs in prop::collection::vec((0u8..30, any::<bool>()), 1..500)) {
            let s: Vec<f64> = pairs.iter().map(|p| f64::from(p.0)).collect();
            let c: Vec<f64> = pairs.iter().map(|p| f64::from(u8::from(p.1))).collect();
            match (auc(&s, &c), brute_auc(&s, &c)) {
                (Some(a), Some(b)) => prop_assert!((a - b).abs() < 1e-12),
                (a, b) => prop_assert_eq!(a, b),
            }
        }
    }
}
