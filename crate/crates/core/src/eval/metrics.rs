use std::fmt;

use crate::data::Manifest;
use crate::error::{Error, Result};

/// ROC AUC by the Mann-Whitney rank sum: the probability that a random
/// positive outscores a random negative, tied pairs counting one half.
///
/// Ranks are kept doubled so the statistic is an exact integer ratio.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::shape(
            "auc",
            format!("{} scores vs {} labels", scores.len(), labels.len()),
        ));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::UndefinedMetric("auc over NaN scores".into()));
    }
    let n_pos = labels.iter().filter(|&&y| y == 1).count() as u128;
    let n_neg = labels.len() as u128 - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::UndefinedMetric(format!(
            "auc needs both classes (positives={n_pos}, negatives={n_neg})"
        )));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));

    let mut doubled_rank_sum: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based ranks i+1..=j share the mean rank (i+1+j)/2
        let doubled = (i + 1 + j) as u128;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count() as u128;
        doubled_rank_sum += doubled * pos_in_group;
        i = j;
    }
    let doubled_u = doubled_rank_sum - n_pos * (n_pos + 1);
    Ok(doubled_u as f64 / (2 * n_pos * n_neg) as f64)
}

/// Relative AUC improvement over a baseline after removing the 0.5 chance
/// level, as a percentage.
pub fn relaimp(measured: f64, base: f64) -> Result<f64> {
    if !(base > 0.5) {
        return Err(Error::UndefinedMetric(format!(
            "relaimp baseline AUC {base} must exceed 0.5"
        )));
    }
    Ok(((measured - 0.5) / (base - 0.5) - 1.0) * 100.0)
}

/// Mean log loss with probabilities clamped into `[1e-12, 1 − 1e-12]`.
pub fn mean_logloss(probs: &[f64], labels: &[u8]) -> f64 {
    if probs.is_empty() {
        return 0.0;
    }
    probs
        .iter()
        .zip(labels)
        .map(|(&p, &y)| crate::train::logloss(p, y))
        .sum::<f64>()
        / probs.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub auc: f64,
    pub n_pos: usize,
    pub n_neg: usize,
    pub logloss: f64,
    /// `(baseline name, relaimp %)`
    pub relaimp: Option<(String, f64)>,
}

impl EvalReport {
    pub fn compute(probs: &[f64], labels: &[u8]) -> Result<Self> {
        let n_pos = labels.iter().filter(|&&y| y == 1).count();
        Ok(EvalReport {
            auc: auc(probs, labels)?,
            n_pos,
            n_neg: labels.len() - n_pos,
            logloss: mean_logloss(probs, labels),
            relaimp: None,
        })
    }

    pub fn with_baseline(mut self, name: impl Into<String>, base_auc: f64) -> Result<Self> {
        self.relaimp = Some((name.into(), relaimp(self.auc, base_auc)?));
        Ok(self)
    }

    /// Flat `key=value` summary.
    pub fn to_manifest(&self, prefix: &str) -> Manifest {
        let mut m = Manifest::new();
        m.set(format!("{prefix}auc"), self.auc);
        m.set(format!("{prefix}logloss"), self.logloss);
        m.set(format!("{prefix}n_pos"), self.n_pos);
        m.set(format!("{prefix}n_neg"), self.n_neg);
        if let Some((name, r)) = &self.relaimp {
            m.set(format!("{prefix}relaimp_baseline"), name);
            m.set(format!("{prefix}relaimp_pct"), r);
        }
        m
    }
}

impl fmt::Display for EvalReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "auc={:.4} logloss={:.4} n_pos={} n_neg={}",
            self.auc, self.logloss, self.n_pos, self.n_neg
        )?;
        if let Some((name, r)) = &self.relaimp {
            write!(f, " relaimp_vs_{name}={r:+.2}%")?;
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numeric::Rng;
    use proptest::prelude::*;

    /// O(n²) pairwise count; doubled so ties stay integral.
    fn brute_force_auc(scores: &[f64], labels: &[u8]) -> f64 {
        let mut doubled = 0u128;
        let (mut p, mut n) = (0u128, 0u128);
        for (i, &yi) in labels.iter().enumerate() {
            if yi == 1 {
                p += 1;
            } else {
                n += 1;
                continue;
            }
            for (j, &yj) in labels.iter().enumerate() {
                if yj == 0 {
                    doubled += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        doubled as f64 / (2 * p * n) as f64
    }

    #[test]
    fn separated_and_tied() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(), 1.0);
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[1, 1, 0, 0]).unwrap(), 0.0);
        assert_eq!(auc(&[0.3; 6], &[0, 1, 0, 1, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn single_class_is_undefined() {
        assert!(matches!(auc(&[0.1, 0.2], &[1, 1]), Err(Error::UndefinedMetric(_))));
        assert!(matches!(auc(&[0.1, 0.2], &[0, 0]), Err(Error::UndefinedMetric(_))));
    }

    #[test]
    fn matches_brute_force_on_random_cases() {
        let mut rng = Rng::new(11);
        for case in 0..100 {
            let n = 2 + rng.below(999);
            // coarse scores on some cases to force many ties
            let levels = if case % 3 == 0 { 5 } else { 1_000_000 };
            let scores: Vec<f64> = (0..n).map(|_| rng.below(levels) as f64 / levels as f64).collect();
            let mut labels: Vec<u8> = (0..n).map(|_| u8::from(rng.bernoulli(0.3))).collect();
            labels[0] = 1;
            labels[1] = 0;
            assert_eq!(auc(&scores, &labels).unwrap(), brute_force_auc(&scores, &labels), "case {case}");
        }
    }

    #[test]
    fn relaimp_table_values() {
        let avazu = relaimp(0.7820, 0.7785).unwrap();
        assert_eq!(format!("{avazu:+.2}"), "+1.26");
        let criteo = relaimp(0.8119, 0.7895).unwrap();
        assert_eq!(format!("{criteo:+.2}"), "+7.74");
        assert_eq!(relaimp(0.73, 0.73).unwrap(), 0.0);
        assert!(relaimp(0.7, 0.5).is_err());
        assert!(relaimp(0.7, 0.4).is_err());
    }

    proptest! {
        #[test]
        fn invariant_under_monotone_transforms(
            raw in prop::collection::vec((-5.0f64..5.0, 0u8..2), 2..200)
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            labels[0] = 0;
            labels[1] = 1;
            let s: Vec<f64> = raw.iter().map(|r| r.0).collect();
            let base = auc(&s, &labels).unwrap();
            let e: Vec<f64> = s.iter().map(|v| v.exp()).collect();
            let aff: Vec<f64> = s.iter().map(|v| 3.0 * v - 7.0).collect();
            prop_assert_eq!(auc(&e, &labels).unwrap(), base);
            prop_assert_eq!(auc(&aff, &labels).unwrap(), base);
        }

        #[test]
        fn negation_complements_when_tie_free(
            raw in prop::collection::vec((any::<u32>(), 0u8..2), 2..200)
        ) {
            let mut labels: Vec<u8> = raw.iter().map(|r| r.1).collect();
            labels[0] = 0;
            labels[1] = 1;
            // distinct by construction: i < 1000 breaks every tie
            let s: Vec<f64> = raw.iter().enumerate().map(|(i, r)| r.0 as f64 * 1000.0 + i as f64).collect();
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            let sum = auc(&s, &labels).unwrap() + auc(&neg, &labels).unwrap();
            prop_assert!((sum - 1.0).abs() < 1e-12);
        }
    }
}
