//! Instance-level ROC AUC, max-F1 threshold selection and pooled reports.

use alloc::string::String;
use alloc::vec::Vec;
use core::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

fn check_labels(scores: &[f64], labels: &[u8]) -> Result<(usize, usize)> {
    if scores.len() != labels.len() {
        return Err(Error::LengthMismatch {
            expected: labels.len(),
            actual: scores.len(),
        });
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("scores"));
    }
    let mut pos = 0;
    for &y in labels {
        match y {
            0 => {}
            1 => pos += 1,
            _ => return Err(Error::Shape(alloc::format!("label {y} is not binary"))),
        }
    }
    Ok((pos, labels.len() - pos))
}

fn ascending(scores: &[f64]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_unstable_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    idx
}

/// Mann–Whitney AUC: probability that a random positive outscores a random
/// negative, ties counting one half.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check_labels(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass(
            "AUC needs at least one positive and one negative",
        ));
    }
    let order = ascending(scores);
    // sum of midranks (1-based) of the positives
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]].total_cmp(&scores[order[i]]) == Ordering::Equal {
            j += 1;
        }
        let midrank = (i + 1 + j) as f64 / 2.0;
        let pos_in_group = order[i..j].iter().filter(|&&k| labels[k] == 1).count();
        rank_sum += midrank * pos_in_group as f64;
        i = j;
    }
    let u = rank_sum - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// `(precision, recall)` when predicting positive for `score ≥ threshold`.
/// Precision is 0 when nothing is predicted positive.
pub fn precision_recall_at(scores: &[f64], labels: &[u8], threshold: f64) -> Result<(f64, f64)> {
    let (n_pos, _) = check_labels(scores, labels)?;
    if n_pos == 0 {
        return Err(Error::SingleClass(
            "recall needs at least one positive label",
        ));
    }
    let (mut tp, mut fp) = (0usize, 0usize);
    for (&s, &y) in scores.iter().zip(labels) {
        if s >= threshold {
            if y == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
        }
    }
    let precision = if tp + fp == 0 {
        0.0
    } else {
        tp as f64 / (tp + fp) as f64
    };
    Ok((precision, tp as f64 / n_pos as f64))
}

/// Threshold maximising F1 over midpoints between consecutive distinct
/// scores plus the two extremes (`min`, predicting everything positive, and
/// `max + 1`, predicting nothing). F1 ties go to the higher threshold.
pub fn select_threshold(scores: &[f64], labels: &[u8]) -> Result<f64> {
    let (n_pos, n_neg) = check_labels(scores, labels)?;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass("threshold selection needs both classes"));
    }
    let order = ascending(scores);
    // distinct values with per-value positive/negative counts, ascending
    let mut groups: Vec<(f64, usize, usize)> = Vec::new();
    for &k in &order {
        let s = scores[k];
        match groups.last_mut() {
            Some((v, p, n)) if v.total_cmp(&s) == Ordering::Equal => {
                if labels[k] == 1 {
                    *p += 1
                } else {
                    *n += 1
                }
            }
            _ => groups.push((s, usize::from(labels[k] == 1), usize::from(labels[k] == 0))),
        }
    }
    // candidate j predicts groups[j..] positive
    let (mut tp, mut fp) = (n_pos, n_neg);
    let mut best = (0u128, 1u128);
    let mut best_threshold = groups[0].0;
    for j in 0..=groups.len() {
        let threshold = if j == 0 {
            groups[0].0
        } else if j == groups.len() {
            groups[j - 1].0 + 1.0
        } else {
            let (lo, hi) = (groups[j - 1].0, groups[j].0);
            let mid = lo + (hi - lo) / 2.0;
            if mid > lo {
                mid
            } else {
                hi
            }
        };
        if j > 0 {
            tp -= groups[j - 1].1;
            fp -= groups[j - 1].2;
        }
        let fn_ = n_pos - tp;
        let (num, den) = (2 * tp as u128, (2 * tp + fp + fn_) as u128);
        // num/den >= best.0/best.1, favouring the later (higher) threshold
        if num * best.1 >= best.0 * den {
            best = (num, den);
            best_threshold = threshold;
        }
    }
    Ok(best_threshold)
}

/// Scores and ground truth for one annotated slide.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredSlide {
    pub slide_id: String,
    pub scores: Vec<f64>,
    pub gt: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideAuc {
    pub slide_id: String,
    /// Absent when the slide holds a single ground-truth class.
    pub auc: Option<f64>,
    pub positive_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub auc: f64,
    pub threshold: f64,
    /// `"validation"` or, when the validation pool lacks a class, `"test"`.
    pub threshold_source: String,
    pub precision: f64,
    pub recall: f64,
    pub n_instances: usize,
    pub n_positive: usize,
    pub per_slide: Vec<SlideAuc>,
}

fn pool(slides: &[ScoredSlide]) -> Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::new();
    let mut gt = Vec::new();
    for s in slides {
        if s.scores.len() != s.gt.len() {
            return Err(Error::LengthMismatch {
                expected: s.gt.len(),
                actual: s.scores.len(),
            });
        }
        scores.extend_from_slice(&s.scores);
        gt.extend_from_slice(&s.gt);
    }
    Ok((scores, gt))
}

/// Pooled AUC over `test`, precision and recall at the max-F1 threshold of
/// `validation`, and per-slide AUCs.
pub fn evaluate(test: &[ScoredSlide], validation: &[ScoredSlide]) -> Result<EvalReport> {
    if test.is_empty() {
        return Err(Error::NoSlides("evaluation needs annotated test slides"));
    }
    let (scores, gt) = pool(test)?;
    let auc = roc_auc(&scores, &gt)?;
    let (val_scores, val_gt) = pool(validation)?;
    let (threshold, threshold_source) = match select_threshold(&val_scores, &val_gt) {
        Ok(t) => (t, "validation"),
        Err(Error::SingleClass(_)) => {
            log::warn!("validation pool lacks a class; selecting the threshold on the test pool");
            (select_threshold(&scores, &gt)?, "test")
        }
        Err(e) => return Err(e),
    };
    let (precision, recall) = precision_recall_at(&scores, &gt, threshold)?;
    let per_slide = test
        .iter()
        .map(|s| {
            let n_pos = s.gt.iter().filter(|&&y| y == 1).count();
            SlideAuc {
                slide_id: s.slide_id.clone(),
                auc: roc_auc(&s.scores, &s.gt).ok(),
                positive_fraction: if s.gt.is_empty() {
                    0.0
                } else {
                    n_pos as f64 / s.gt.len() as f64
                },
            }
        })
        .collect();
    Ok(EvalReport {
        auc,
        threshold,
        threshold_source: threshold_source.into(),
        precision,
        recall,
        n_instances: gt.len(),
        n_positive: gt.iter().filter(|&&y| y == 1).count(),
        per_slide,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;
    use proptest::prelude::*;

    fn pairwise(scores: &[f64], labels: &[u8]) -> f64 {
        let mut num = 0.0;
        let mut den = 0.0;
        for (i, &yi) in labels.iter().enumerate() {
            for (j, &yj) in labels.iter().enumerate() {
                if yi == 1 && yj == 0 {
                    den += 1.0;
                    num += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        Ordering::Greater => 1.0,
                        Ordering::Equal => 0.5,
                        Ordering::Less => 0.0,
                    };
                }
            }
        }
        num / den
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.1, 0.9], &[0, 1]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[0, 1]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.2, 0.4, 0.6, 0.8], &[0, 1, 0, 1]).unwrap(), 0.75);
        assert!(matches!(
            roc_auc(&[0.2, 0.3], &[1, 1]),
            Err(Error::SingleClass(_))
        ));
        assert!(roc_auc(&[0.2, 0.3], &[1, 2]).is_err());
        assert!(roc_auc(&[0.2], &[1, 0]).is_err());
    }

    #[test]
    fn threshold_examples() {
        assert_eq!(
            select_threshold(&[0.1, 0.2, 0.8, 0.9], &[0, 0, 1, 1]).unwrap(),
            0.5
        );
        assert_eq!(select_threshold(&[0.3, 0.7], &[0, 1]).unwrap(), 0.5);
        // all tied: predicting everything positive (F1 = 2p/(2p+n)) beats nothing (F1 = 0)
        let t = select_threshold(&[0.4; 5], &[1, 0, 0, 1, 0]).unwrap();
        assert_eq!(t, 0.4);
        let (p, r) = precision_recall_at(&[0.4; 5], &[1, 0, 0, 1, 0], t).unwrap();
        assert_eq!((p, r), (0.4, 1.0));
        assert!(select_threshold(&[0.4, 0.5], &[0, 0]).is_err());
    }

    #[test]
    fn threshold_prefers_higher_on_ties() {
        // everything positive and "> 0.35" both reach F1 = 2/3
        let scores = [0.1, 0.2, 0.3, 0.4];
        assert_eq!(select_threshold(&scores, &[1, 0, 0, 1]).unwrap(), 0.35);
        assert_eq!(
            select_threshold(&[0.2, 0.5, 0.8], &[0, 1, 1]).unwrap(),
            0.35
        );
        assert_eq!(select_threshold(&[0.2, 0.5, 0.8], &[1, 0, 1]).unwrap(), 0.2);
    }

    #[test]
    fn precision_recall_examples() {
        assert_eq!(
            precision_recall_at(&[0.1, 0.9], &[0, 1], 0.5).unwrap(),
            (1.0, 1.0)
        );
        assert_eq!(
            precision_recall_at(&[0.1, 0.9], &[0, 1], 2.0).unwrap(),
            (0.0, 0.0)
        );
        assert_eq!(
            precision_recall_at(&[0.9, 0.8, 0.2], &[1, 0, 1], 0.5).unwrap(),
            (0.5, 0.5)
        );
        assert!(precision_recall_at(&[0.9], &[0], 0.5).is_err());
    }

    fn slide(id: &str, scores: Vec<f64>, gt: Vec<u8>) -> ScoredSlide {
        ScoredSlide {
            slide_id: id.into(),
            scores,
            gt,
        }
    }

    #[test]
    fn constant_scorer_report() {
        let test = [
            slide("a", vec![0.5; 4], vec![0, 1, 1, 0]),
            slide("b", vec![0.5; 3], vec![0, 0, 0]),
        ];
        let val = [slide("c", vec![0.5; 2], vec![1, 0])];
        let r = evaluate(&test, &val).unwrap();
        assert_eq!(r.auc, 0.5);
        assert_eq!(r.threshold_source, "validation");
        assert_eq!(r.n_instances, 7);
        assert_eq!(r.n_positive, 2);
        assert_eq!(r.per_slide[0].auc, Some(0.5));
        assert_eq!(r.per_slide[1].auc, None);
        assert_eq!(r.per_slide[0].positive_fraction, 0.5);
    }

    #[test]
    fn perfect_scorer_report() {
        let gt = vec![0, 1, 1, 0, 1];
        let scores: Vec<f64> = gt.iter().map(|&y| y as f64).collect();
        let test = [slide("a", scores.clone(), gt.clone())];
        let r = evaluate(&test, &test).unwrap();
        assert_eq!((r.auc, r.precision, r.recall), (1.0, 1.0, 1.0));
    }

    #[test]
    fn evaluate_falls_back_and_errors() {
        let test = [slide("a", vec![0.1, 0.9], vec![0, 1])];
        let r = evaluate(&test, &[]).unwrap();
        assert_eq!(r.threshold_source, "test");
        assert!(evaluate(&[], &test).is_err());
    }

    fn scored() -> impl Strategy<Value = (Vec<f64>, Vec<u8>)> {
        (2usize..500)
            .prop_flat_map(|n| {
                (
                    prop::collection::vec(
                        prop_oneof![(0u8..5).prop_map(|k| k as f64 / 4.0), 0.0f64..1.0],
                        n,
                    ),
                    prop::collection::vec(0u8..=1, n),
                )
            })
            .prop_filter("both classes", |(_, y)| y.contains(&0) && y.contains(&1))
    }

    proptest! {
        #[test]
        fn auc_matches_pairwise((s, y) in scored()) {
            prop_assert!((roc_auc(&s, &y).unwrap() - pairwise(&s, &y)).abs() < 1e-12);
        }

        #[test]
        fn auc_flips_under_negation(s in prop::collection::hash_set(0u32..100_000, 2..200), seed in any::<u64>()) {
            let s: Vec<f64> = s.into_iter().map(|v| v as f64).collect();
            let y: Vec<u8> = (0..s.len()).map(|i| ((seed >> (i % 64)) & 1) as u8).collect();
            prop_assume!(y.contains(&0) && y.contains(&1));
            let neg: Vec<f64> = s.iter().map(|v| -v).collect();
            prop_assert!((roc_auc(&s, &y).unwrap() + roc_auc(&neg, &y).unwrap() - 1.0).abs() < 1e-12);
        }

        #[test]
        fn auc_rank_invariant((s, y) in scored()) {
            let t: Vec<f64> = s.iter().map(|v| libm::exp(3.0 * v) - 2.0).collect();
            prop_assert_eq!(roc_auc(&s, &y).unwrap(), roc_auc(&t, &y).unwrap());
        }

        #[test]
        fn recall_non_increasing_in_threshold((s, y) in scored(), a in 0.0f64..1.0, b in 0.0f64..1.0) {
            let (lo, hi) = if a <= b { (a, b) } else { (b, a) };
            prop_assert!(precision_recall_at(&s, &y, hi).unwrap().1 <= precision_recall_at(&s, &y, lo).unwrap().1);
        }

        #[test]
        fn selected_threshold_is_f1_optimal((s, y) in scored()) {
            let t = select_threshold(&s, &y).unwrap();
            let f1 = |thr: f64| {
                let (p, r) = precision_recall_at(&s, &y, thr).unwrap();
                if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) }
            };
            let best = f1(t);
            for &c in &s {
                prop_assert!(f1(c) <= best + 1e-12);
            }
        }
    }
}
