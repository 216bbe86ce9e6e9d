//! Event matching, detection metrics, ROC/AUC and the stratified split.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::features::{FeatureVector, Label};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("truth intervals {first} and {second} overlap")]
    OverlappingTruth { first: usize, second: usize },
    #[error("truth interval {0} has end before start")]
    InvalidInterval(usize),
    #[error("{events} outcome units exceed the {slices} evaluated slices")]
    TooFewSlices { events: u64, slices: u64 },
    #[error("hours must be > 0, got {0}")]
    NonPositiveHours(f64),
    #[error("ROC needs at least one positive and one negative label")]
    OneClassLabels,
    #[error("scores and labels differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("train fraction must be in (0, 1), got {0}")]
    InvalidFraction(f64),
    #[error("class {0} is empty on one side of the split")]
    EmptyClassAfterSplit(Label),
    #[error("example {0} is unlabeled")]
    Unlabeled(usize),
}

/// A labeled stretch of audio from the truth file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub label: Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub hours: Option<f64>,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }
}

/// Which truth interval, if any, each prediction matched.
#[derive(Debug, Clone, PartialEq)]
pub struct MatchOutcome {
    pub matrix: ConfusionMatrix,
    pub matched: Vec<Option<usize>>,
}

fn intersection(a: (f64, f64), b: (f64, f64)) -> f64 {
    (a.1.min(b.1) - a.0.max(b.0)).max(0.0)
}

/// True when two spans share at least a quarter of the shorter one.
pub fn spans_match(a: (f64, f64), b: (f64, f64)) -> bool {
    let inter = intersection(a, b);
    let shorter = (a.1 - a.0).min(b.1 - b.0);
    inter > 0.0 && inter >= 0.25 * shorter
}

/// Matches predicted spans against minke truth intervals.
///
/// Only minke intervals are positives; predictions landing on other labels
/// count as false positives. Several predictions on one truth interval give
/// a single TP. TN is what is left of `n_slices`.
pub fn match_events_to_truth(
    pred: &[(f64, f64)],
    truth: &[TruthInterval],
    n_slices: u64,
) -> Result<MatchOutcome, EvalError> {
    for (i, t) in truth.iter().enumerate() {
        if !(t.end_s >= t.start_s) {
            return Err(EvalError::InvalidInterval(i));
        }
    }
    let mut order: Vec<usize> = (0..truth.len()).collect();
    order.sort_by(|&a, &b| truth[a].start_s.total_cmp(&truth[b].start_s));
    for w in order.windows(2) {
        if truth[w[1]].start_s < truth[w[0]].end_s {
            return Err(EvalError::OverlappingTruth {
                first: w[0].min(w[1]),
                second: w[0].max(w[1]),
            });
        }
    }

    let positives: Vec<usize> = (0..truth.len()).filter(|&i| truth[i].label == Label::Minke).collect();
    let mut hit = vec![false; truth.len()];
    let mut matched = Vec::with_capacity(pred.len());
    let mut fp = 0u64;
    for &p in pred {
        let m = positives
            .iter()
            .copied()
            .find(|&i| spans_match(p, (truth[i].start_s, truth[i].end_s)));
        match m {
            Some(i) => hit[i] = true,
            None => fp += 1,
        }
        matched.push(m);
    }
    let tp = hit.iter().filter(|&&h| h).count() as u64;
    let fn_ = positives.len() as u64 - tp;
    let used = tp + fp + fn_;
    if used > n_slices {
        return Err(EvalError::TooFewSlices {
            events: used,
            slices: n_slices,
        });
    }
    Ok(MatchOutcome {
        matrix: ConfusionMatrix {
            tp,
            fp,
            tn: n_slices - used,
            fn_,
            hours: None,
        },
        matched,
    })
}

/// Ratios whose denominator was zero; those ratios are reported as 0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct Degenerate {
    pub tpr: bool,
    pub fpr: bool,
    pub ppv: bool,
    pub f1: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub tpr: f64,
    pub fpr: f64,
    pub ppv: f64,
    pub f1: f64,
    pub fp_per_hour: Option<f64>,
    pub auc: Option<f64>,
    pub degenerate: Degenerate,
}

fn ratio(num: u64, den: u64) -> (f64, bool) {
    if den == 0 {
        (0.0, true)
    } else {
        (num as f64 / den as f64, false)
    }
}

/// Harmonic mean of precision and recall, 0 when both are 0.
pub fn f1_score(ppv: f64, tpr: f64) -> f64 {
    if ppv + tpr > 0.0 {
        2.0 * ppv * tpr / (ppv + tpr)
    } else {
        0.0
    }
}

pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport, EvalError> {
    let fp_per_hour = match cm.hours {
        Some(h) if h > 0.0 => Some(cm.fp as f64 / h),
        Some(h) => return Err(EvalError::NonPositiveHours(h)),
        None => None,
    };
    let (tpr, d_tpr) = ratio(cm.tp, cm.tp + cm.fn_);
    let (fpr, d_fpr) = ratio(cm.fp, cm.fp + cm.tn);
    let (ppv, d_ppv) = ratio(cm.tp, cm.tp + cm.fp);
    Ok(MetricsReport {
        tpr,
        fpr,
        ppv,
        f1: f1_score(ppv, tpr),
        fp_per_hour,
        auc: None,
        degenerate: Degenerate {
            tpr: d_tpr,
            fpr: d_fpr,
            ppv: d_ppv,
            f1: ppv + tpr == 0.0,
        },
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RocPoint {
    /// Units with score >= threshold are called positive.
    pub threshold: f64,
    pub fpr: f64,
    pub tpr: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    pub points: Vec<RocPoint>,
    pub auc: f64,
}

/// ROC over every distinct score plus the all-negative start point.
///
/// The area is accumulated in integer units of `1 / (2 * P * N)`, so it is
/// exactly the pairwise concordance with ties counted as one half.
pub fn roc_auc(scores: &[f64], labels: &[bool]) -> Result<RocCurve, EvalError> {
    if scores.len() != labels.len() {
        return Err(EvalError::LengthMismatch(scores.len(), labels.len()));
    }
    let pos = labels.iter().filter(|&&l| l).count() as u64;
    let neg = labels.len() as u64 - pos;
    if pos == 0 || neg == 0 {
        return Err(EvalError::OneClassLabels);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));

    let mut points = vec![RocPoint {
        threshold: f64::INFINITY,
        fpr: 0.0,
        tpr: 0.0,
    }];
    let (mut tp, mut fp) = (0u64, 0u64);
    let mut area2: u128 = 0;
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        let (tp0, fp0) = (tp, fp);
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        area2 += (fp - fp0) as u128 * (tp + tp0) as u128;
        points.push(RocPoint {
            threshold: s,
            fpr: fp as f64 / neg as f64,
            tpr: tp as f64 / pos as f64,
        });
    }
    let auc = area2 as f64 / (2 * pos as u128 * neg as u128) as f64;
    Ok(RocCurve { points, auc })
}

/// Seeded stratified split: each class contributes `round(fraction * n)`
/// of its examples to the training side.
pub fn split_train_test(
    data: &[FeatureVector],
    train_fraction: f64,
    seed: u64,
) -> Result<(Vec<FeatureVector>, Vec<FeatureVector>), EvalError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(EvalError::InvalidFraction(train_fraction));
    }
    if let Some(i) = data.iter().position(|d| d.label == Label::Unlabeled) {
        return Err(EvalError::Unlabeled(i));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for class in [Label::Minke, Label::NonMinke] {
        let mut idx: Vec<usize> = (0..data.len()).filter(|&i| data[i].label == class).collect();
        if idx.is_empty() {
            continue;
        }
        idx.shuffle(&mut rng);
        let n_train = (train_fraction * idx.len() as f64).round() as usize;
        if n_train == 0 || n_train == idx.len() {
            return Err(EvalError::EmptyClassAfterSplit(class));
        }
        test_idx.extend_from_slice(&idx[n_train..]);
        idx.truncate(n_train);
        train_idx.extend(idx);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();
    Ok((
        train_idx.iter().map(|&i| data[i]).collect(),
        test_idx.iter().map(|&i| data[i]).collect(),
    ))
}

#[cfg(test)]
mod tests {
    use proptest::prelude::*;

    use super::*;

    fn minke(a: f64, b: f64) -> TruthInterval {
        TruthInterval {
            start_s: a,
            end_s: b,
            label: Label::Minke,
        }
    }

    #[test]
    fn quarter_overlap_matches() {
        let m = match_events_to_truth(&[(10.0, 40.0)], &[minke(12.0, 45.0)], 10).unwrap();
        assert_eq!((m.matrix.tp, m.matrix.fp, m.matrix.fn_, m.matrix.tn), (1, 0, 0, 9));
        assert_eq!(m.matched, vec![Some(0)]);
    }

    #[test]
    fn disjoint_is_fp_and_fn() {
        let m = match_events_to_truth(&[(10.0, 40.0)], &[minke(41.0, 70.0)], 10).unwrap();
        assert_eq!((m.matrix.tp, m.matrix.fp, m.matrix.fn_), (0, 1, 1));
    }

    #[test]
    fn no_predictions() {
        let truth = [minke(0.0, 1.0), minke(5.0, 6.0), minke(9.0, 10.0)];
        let m = match_events_to_truth(&[], &truth, 10).unwrap();
        assert_eq!((m.matrix.tp, m.matrix.fp, m.matrix.fn_), (0, 0, 3));
    }

    #[test]
    fn small_overlap_does_not_match() {
        // Intersection 2 s is below a quarter of the 10 s shorter span.
        assert!(!spans_match((0.0, 10.0), (8.0, 30.0)));
        assert!(spans_match((0.0, 10.0), (7.5, 30.0)));
    }

    #[test]
    fn several_predictions_on_one_truth_are_one_tp() {
        let m = match_events_to_truth(&[(10.0, 20.0), (15.0, 30.0)], &[minke(10.0, 30.0)], 5).unwrap();
        assert_eq!((m.matrix.tp, m.matrix.fp), (1, 0));
    }

    #[test]
    fn non_minke_truth_is_not_a_positive() {
        let truth = [TruthInterval {
            start_s: 0.0,
            end_s: 10.0,
            label: Label::NonMinke,
        }];
        let m = match_events_to_truth(&[(0.0, 10.0)], &truth, 4).unwrap();
        assert_eq!((m.matrix.tp, m.matrix.fp, m.matrix.fn_), (0, 1, 0));
    }

    #[test]
    fn overlapping_truth_is_rejected() {
        let r = match_events_to_truth(&[], &[minke(0.0, 10.0), minke(5.0, 15.0)], 10);
        assert!(matches!(r, Err(EvalError::OverlappingTruth { .. })));
    }

    #[test]
    fn harmonic_mean_identity() {
        assert!((f1_score(0.84, 0.63) - 0.72).abs() < 0.005);
        let cm = ConfusionMatrix {
            tp: 10,
            fp: 104,
            tn: 1000,
            fn_: 5,
            hours: Some(120.0),
        };
        let r = compute_metrics(&cm).unwrap();
        assert!((r.fp_per_hour.unwrap() - 0.867).abs() < 0.005);
    }

    #[test]
    fn perfect_and_degenerate_metrics() {
        let r = compute_metrics(&ConfusionMatrix {
            tp: 5,
            fp: 0,
            tn: 5,
            fn_: 0,
            hours: None,
        })
        .unwrap();
        assert_eq!((r.tpr, r.fpr, r.ppv, r.f1), (1.0, 0.0, 1.0, 1.0));
        let r = compute_metrics(&ConfusionMatrix::default()).unwrap();
        assert_eq!(r.f1, 0.0);
        assert!(r.degenerate.tpr && r.degenerate.fpr && r.degenerate.ppv && r.degenerate.f1);
        let bad = ConfusionMatrix {
            hours: Some(0.0),
            ..ConfusionMatrix::default()
        };
        assert_eq!(compute_metrics(&bad), Err(EvalError::NonPositiveHours(0.0)));
    }

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[true, true, false, false]).unwrap().auc, 1.0);
        assert_eq!(roc_auc(&[0.5; 4], &[true, false, true, false]).unwrap().auc, 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.4, 0.3], &[true, false, true, false]).unwrap().auc, 0.75);
        assert_eq!(roc_auc(&[0.1, 0.2], &[true, true]), Err(EvalError::OneClassLabels));
    }

    fn concordance(scores: &[f64], labels: &[bool]) -> f64 {
        let mut twice = 0u64;
        let mut pairs = 0u64;
        for (i, &li) in labels.iter().enumerate() {
            for (j, &lj) in labels.iter().enumerate() {
                if li && !lj {
                    pairs += 1;
                    twice += match scores[i].partial_cmp(&scores[j]).unwrap() {
                        std::cmp::Ordering::Greater => 2,
                        std::cmp::Ordering::Equal => 1,
                        std::cmp::Ordering::Less => 0,
                    };
                }
            }
        }
        twice as f64 / (2 * pairs) as f64
    }

    proptest! {
        #[test]
        fn auc_equals_concordance(units in prop::collection::vec((0u8..12, any::<bool>()), 2..200)) {
            let scores: Vec<f64> = units.iter().map(|u| u.0 as f64 / 10.0).collect();
            let labels: Vec<bool> = units.iter().map(|u| u.1).collect();
            prop_assume!(labels.iter().any(|&l| l) && labels.iter().any(|&l| !l));
            let roc = roc_auc(&scores, &labels).unwrap();
            prop_assert_eq!(roc.auc, concordance(&scores, &labels));
            let first = roc.points.first().unwrap();
            let last = roc.points.last().unwrap();
            prop_assert_eq!((first.fpr, first.tpr), (0.0, 0.0));
            prop_assert_eq!((last.fpr, last.tpr), (1.0, 1.0));
            for w in roc.points.windows(2) {
                prop_assert!(w[1].fpr >= w[0].fpr && w[1].tpr >= w[0].tpr);
            }
        }

        #[test]
        fn metrics_ignore_unit_order(mut spans in prop::collection::vec((0.0f64..100.0, 1.0f64..20.0), 0..20)) {
            let truth = vec![minke(10.0, 30.0), minke(50.0, 60.0)];
            let pred: Vec<(f64, f64)> = spans.iter().map(|&(a, d)| (a, a + d)).collect();
            let a = match_events_to_truth(&pred, &truth, 100).unwrap().matrix;
            spans.reverse();
            let pred: Vec<(f64, f64)> = spans.iter().map(|&(a, d)| (a, a + d)).collect();
            let b = match_events_to_truth(&pred, &truth, 100).unwrap().matrix;
            prop_assert_eq!(a, b);
        }
    }

    fn labeled(n_minke: usize, n_other: usize) -> Vec<FeatureVector> {
        (0..n_minke + n_other)
            .map(|i| {
                let mut v = [0.0; 18];
                v[0] = i as f64;
                let label = if i < n_minke { Label::Minke } else { Label::NonMinke };
                FeatureVector::from_array(v, label)
            })
            .collect()
    }

    #[test]
    fn stratified_counts() {
        let (train, test) = split_train_test(&labeled(150, 150), 0.66, 1).unwrap();
        assert_eq!(train.len(), 198);
        assert_eq!(test.len(), 102);
        assert_eq!(train.iter().filter(|d| d.label == Label::Minke).count(), 99);
    }

    #[test]
    fn split_is_deterministic_and_disjoint() {
        let data = labeled(40, 25);
        let a = split_train_test(&data, 0.66, 7).unwrap();
        let b = split_train_test(&data, 0.66, 7).unwrap();
        assert_eq!(a, b);
        let mut ids: Vec<f64> = a.0.iter().chain(&a.1).map(|d| d.f1_delta_time_s).collect();
        ids.sort_by(f64::total_cmp);
        ids.dedup();
        assert_eq!(ids.len(), 65);
        assert_ne!(a, split_train_test(&data, 0.66, 8).unwrap());
    }

    #[test]
    fn split_errors() {
        assert_eq!(
            split_train_test(&labeled(3, 0), 0.999, 0),
            Err(EvalError::EmptyClassAfterSplit(Label::Minke))
        );
        assert_eq!(
            split_train_test(&labeled(3, 3), 1.0, 0),
            Err(EvalError::InvalidFraction(1.0))
        );
    }
}
