//! Ranking metrics for anomaly scores and the synthetic benchmark generator.
//!
//! Tie handling is fixed so every metric is deterministic: ROC-AUC gives half
//! credit to tied pairs, AP treats a run of equal scores as one threshold,
//! and the cumulative-gain curve breaks ties by ascending node id.

mod synth;

pub use synth::{inject_anomalies, BaseModel, InjectionSpec};

use std::cmp::Ordering;

use crate::error::{JanusError, Result};

/// Ranking quality of one score vector against 0/1 labels.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedEval {
    pub roc_auc: f64,
    pub ap: f64,
    /// `(fraction examined, fraction of anomalies found)`, `n + 1` points.
    pub cg_curve: Vec<(f64, f64)>,
    pub cg_area: f64,
}

pub fn evaluate(scores: &[f64], labels: &[u8]) -> Result<RankedEval> {
    let (curve, area) = cumulative_gain(scores, labels)?;
    Ok(RankedEval {
        roc_auc: roc_auc(scores, labels)?,
        ap: average_precision(scores, labels)?,
        cg_curve: curve,
        cg_area: area,
    })
}

fn check(scores: &[f64], labels: &[u8], need_negative: bool) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(JanusError::mismatch("scores vs labels", labels.len(), scores.len()));
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(JanusError::NonFinite("anomaly scores"));
    }
    if let Some(bad) = labels.iter().find(|&&l| l > 1) {
        return Err(JanusError::InvalidInput(format!("label {bad} is not 0 or 1")));
    }
    let p = labels.iter().filter(|&&l| l == 1).count();
    let n = labels.len() - p;
    if p == 0 {
        return Err(JanusError::DegenerateLabels("no positive (anomalous) labels".into()));
    }
    if need_negative && n == 0 {
        return Err(JanusError::DegenerateLabels("no negative (normal) labels".into()));
    }
    Ok((p, n))
}

/// Indices sorted by descending score, ties by ascending index.
fn descending_order(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx
}

/// Mann-Whitney statistic with midranks.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, n) = check(scores, labels, true)?;
    let mut idx = descending_order(scores);
    idx.reverse();
    // Twice the rank sum of positives, so midranks stay integral.
    let mut rank2_sum: u128 = 0;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        // Ranks start..end (1-based start+1..=end) share the midrank.
        let mid2 = (start + 1 + end) as u128;
        let pos = idx[start..end].iter().filter(|&&i| labels[i] == 1).count() as u128;
        rank2_sum += mid2 * pos;
        start = end;
    }
    let (p128, n128) = (p as u128, n as u128);
    // 2U = 2 R_pos - P (P + 1)
    let u2 = rank2_sum - p128 * (p128 + 1);
    Ok(u2 as f64 / (2 * p128 * n128) as f64)
}

/// Step-wise area under the precision-recall curve with grouped ties.
pub fn average_precision(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (p, _) = check(scores, labels, false)?;
    let idx = descending_order(scores);
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut start = 0;
    while start < idx.len() {
        let mut end = start + 1;
        while end < idx.len() && scores[idx[end]] == scores[idx[start]] {
            end += 1;
        }
        let pos = idx[start..end].iter().filter(|&&i| labels[i] == 1).count();
        if pos > 0 {
            tp += pos;
            ap += (pos as f64 / p as f64) * (tp as f64 / end as f64);
        }
        start = end;
    }
    Ok(ap)
}

/// Cumulative-gain curve and its trapezoid area.
pub fn cumulative_gain(scores: &[f64], labels: &[u8]) -> Result<(Vec<(f64, f64)>, f64)> {
    let (p, _) = check(scores, labels, false)?;
    let n = scores.len();
    let idx = descending_order(scores);
    let mut curve = Vec::with_capacity(n + 1);
    curve.push((0.0, 0.0));
    let mut found = 0u128;
    let mut twice_area: u128 = 0;
    for (k, &i) in idx.iter().enumerate() {
        let prev = found;
        found += u128::from(labels[i]);
        twice_area += prev + found;
        curve.push(((k + 1) as f64 / n as f64, found as f64 / p as f64));
    }
    // Each trapezoid has width 1/n and heights found/P.
    let area = twice_area as f64 / (2 * n as u128 * p as u128) as f64;
    Ok((curve, area))
}

/// Mean and sample standard deviation; the deviation is 0 for one value.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

/// Renders a curve as `fraction,gain` CSV lines.
pub fn curve_csv(curve: &[(f64, f64)]) -> String {
    let mut s = String::from("fraction,gain\n");
    for (f, g) in curve {
        s.push_str(&format!("{f},{g}\n"));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Pair counting over every positive/negative pair.
    fn auc_oracle(s: &[f64], l: &[u8]) -> f64 {
        let mut num2 = 0u64;
        let (mut p, mut n) = (0u64, 0u64);
        for i in 0..s.len() {
            if l[i] == 1 {
                p += 1;
            } else {
                n += 1;
            }
        }
        for i in 0..s.len() {
            for j in 0..s.len() {
                if l[i] == 1 && l[j] == 0 {
                    num2 += match s[i].partial_cmp(&s[j]).unwrap() {
                        Ordering::Greater => 2,
                        Ordering::Equal => 1,
                        Ordering::Less => 0,
                    };
                }
            }
        }
        num2 as f64 / (2 * p * n) as f64
    }

    /// Sweep over distinct thresholds, predicting positive when score >= t.
    fn ap_oracle(s: &[f64], l: &[u8]) -> f64 {
        let p = l.iter().filter(|&&v| v == 1).count() as f64;
        let mut thresholds: Vec<f64> = s.to_vec();
        thresholds.sort_by(|a, b| b.partial_cmp(a).unwrap());
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds {
            let sel: Vec<usize> = (0..s.len()).filter(|&i| s[i] >= t).collect();
            let tp = sel.iter().filter(|&&i| l[i] == 1).count() as f64;
            let recall = tp / p;
            let precision = tp / sel.len() as f64;
            ap += (recall - prev_recall) * precision;
            prev_recall = recall;
        }
        ap
    }

    /// Curve by counting positives in each top-k prefix.
    fn cg_oracle(s: &[f64], l: &[u8]) -> (Vec<(f64, f64)>, f64) {
        let n = s.len();
        let p = l.iter().filter(|&&v| v == 1).count() as f64;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| s[b].partial_cmp(&s[a]).unwrap().then(a.cmp(&b)));
        let mut curve = vec![(0.0, 0.0)];
        for k in 1..=n {
            let found = order[..k].iter().filter(|&&i| l[i] == 1).count() as f64;
            curve.push((k as f64 / n as f64, found / p));
        }
        let area = curve
            .windows(2)
            .map(|w| (w[1].0 - w[0].0) * (w[0].1 + w[1].1) / 2.0)
            .sum();
        (curve, area)
    }

    fn random_instance(rng: &mut ChaCha8Rng, n: usize, ties: bool) -> (Vec<f64>, Vec<u8>) {
        let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.random_bool(0.3))).collect();
        labels[0] = 1;
        labels[n - 1] = 0;
        let scores = (0..n)
            .map(|_| {
                if ties {
                    f64::from(rng.random_range(0..5u8))
                } else {
                    rng.random::<f64>()
                }
            })
            .collect();
        (scores, labels)
    }

    #[test]
    fn spec_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.1], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.3; 4], &[1, 0, 1, 0]).unwrap(), 0.5);
        assert_eq!(average_precision(&[0.9, 0.8, 0.1], &[1, 0, 0]).unwrap(), 1.0);
        assert_eq!(average_precision(&[0.9, 0.1], &[0, 1]).unwrap(), 0.5);
        let (curve, _) = cumulative_gain(&[0.9, 0.8, 0.1, 0.05], &[1, 1, 0, 0]).unwrap();
        assert_eq!(curve[2], (0.5, 1.0));
        let (rev, _) = cumulative_gain(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap();
        assert_eq!(rev[2].1, 0.0);
        assert_eq!(rev[3].1, 0.5);
        assert_eq!(*rev.last().unwrap(), (1.0, 1.0));
    }

    #[test]
    fn degenerate_labels_rejected() {
        assert!(matches!(roc_auc(&[0.1, 0.2], &[0, 0]), Err(JanusError::DegenerateLabels(_))));
        assert!(matches!(roc_auc(&[0.1, 0.2], &[1, 1]), Err(JanusError::DegenerateLabels(_))));
        assert!(average_precision(&[0.1], &[0]).is_err());
        assert!(cumulative_gain(&[0.1, 0.2], &[0]).is_err());
        assert!(roc_auc(&[f64::NAN, 0.2], &[1, 0]).is_err());
    }

    #[test]
    fn oracle_ranking_cg_area() {
        for (n, p) in [(10usize, 3usize), (500, 25), (7, 1), (4, 4)] {
            let labels: Vec<u8> = (0..n).map(|i| u8::from(i < p)).collect();
            let scores: Vec<f64> = (0..n).map(|i| (n - i) as f64).collect();
            let (curve, area) = cumulative_gain(&scores, &labels).unwrap();
            let exact = (2 * n - p) as f64 / (2 * n) as f64;
            assert_eq!(area, exact);
            assert!((area - (1.0 - p as f64 / (2 * n) as f64)).abs() <= f64::EPSILON);
            assert_eq!(curve[p].1, 1.0);
        }
    }

    #[test]
    fn random_cg_area_is_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut total = 0.0;
        for _ in 0..100 {
            let mut labels = vec![0u8; 1000];
            for i in rand::seq::index::sample(&mut rng, 1000, 50) {
                labels[i] = 1;
            }
            let scores: Vec<f64> = (0..1000).map(|_| rng.random()).collect();
            total += cumulative_gain(&scores, &labels).unwrap().1;
        }
        assert!((total / 100.0 - 0.5).abs() < 0.05);
    }

    #[test]
    fn metrics_match_oracles_on_random_instances() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for t in 0..200 {
            let n = rng.random_range(2..=200);
            let (s, l) = random_instance(&mut rng, n, t % 2 == 0);
            assert!((roc_auc(&s, &l).unwrap() - auc_oracle(&s, &l)).abs() < 1e-12);
            assert!((average_precision(&s, &l).unwrap() - ap_oracle(&s, &l)).abs() < 1e-12);
            let (c, a) = cumulative_gain(&s, &l).unwrap();
            let (oc, oa) = cg_oracle(&s, &l);
            assert_eq!(c, oc);
            assert!((a - oa).abs() < 1e-12);
        }
    }

    #[test]
    fn mean_std_cases() {
        assert_eq!(mean_std(&[0.7]), (0.7, 0.0));
        assert_eq!(mean_std(&[0.5; 5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert!((s - 1.0).abs() < 1e-15);
    }

    #[test]
    fn curve_csv_format() {
        let csv = curve_csv(&[(0.0, 0.0), (0.5, 1.0)]);
        assert_eq!(csv, "fraction,gain\n0,0\n0.5,1\n");
    }

    proptest! {
        #[test]
        fn monotone_transform_invariance(seed in any::<u64>(), n in 2usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, l) = random_instance(&mut rng, n, seed % 2 == 0);
            let t: Vec<f64> = s.iter().map(|v| (3.0 * v + 1.0).exp()).collect();
            prop_assert_eq!(roc_auc(&s, &l).unwrap(), roc_auc(&t, &l).unwrap());
            prop_assert_eq!(average_precision(&s, &l).unwrap(), average_precision(&t, &l).unwrap());
        }

        #[test]
        fn auc_of_negated_scores(seed in any::<u64>(), n in 2usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, l) = random_instance(&mut rng, n, false);
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let sum = roc_auc(&s, &l).unwrap() + roc_auc(&neg, &l).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }

        #[test]
        fn cg_curve_is_monotone(seed in any::<u64>(), n in 2usize..60) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let (s, l) = random_instance(&mut rng, n, true);
            let (c, a) = cumulative_gain(&s, &l).unwrap();
            prop_assert!(c.windows(2).all(|w| w[1].0 > w[0].0 && w[1].1 >= w[0].1));
            prop_assert_eq!(*c.last().unwrap(), (1.0, 1.0));
            prop_assert!((0.0..=1.0).contains(&a));
        }
    }
}
