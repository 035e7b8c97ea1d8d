//! Evaluation metrics: weighted-average F-score and accuracy on the closed
//! six-class task, and set-overlap Accuracy_s / Recall_s / Avg for
//! open-vocabulary label sets.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Rows are reference classes, columns are predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    num_classes: usize,
    counts: Vec<usize>,
}

impl ConfusionMatrix {
    pub fn new(num_classes: usize) -> Self {
        ConfusionMatrix {
            num_classes,
            counts: vec![0; num_classes * num_classes],
        }
    }

    pub fn from_pairs(num_classes: usize, pairs: &[(usize, usize)]) -> Result<Self> {
        let mut cm = ConfusionMatrix::new(num_classes);
        for &(reference, prediction) in pairs {
            cm.record(reference, prediction)?;
        }
        Ok(cm)
    }

    pub fn record(&mut self, reference: usize, prediction: usize) -> Result<()> {
        if reference >= self.num_classes || prediction >= self.num_classes {
            return Err(Error::config(format!(
                "class index out of range: ref {reference}, pred {prediction}, k {}",
                self.num_classes
            )));
        }
        self.counts[reference * self.num_classes + prediction] += 1;
        Ok(())
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn count(&self, reference: usize, prediction: usize) -> usize {
        self.counts[reference * self.num_classes + prediction]
    }

    pub fn set_count(&mut self, reference: usize, prediction: usize, value: usize) {
        self.counts[reference * self.num_classes + prediction] = value;
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }

    pub fn support(&self, class: usize) -> usize {
        (0..self.num_classes).map(|p| self.count(class, p)).sum()
    }

    pub fn predicted(&self, class: usize) -> usize {
        (0..self.num_classes).map(|r| self.count(r, class)).sum()
    }

    /// Per-class F1; 0 when precision and recall are both undefined or zero.
    pub fn per_class_f1(&self) -> Vec<f64> {
        (0..self.num_classes)
            .map(|c| {
                let tp = self.count(c, c) as f64;
                let support = self.support(c) as f64;
                let predicted = self.predicted(c) as f64;
                if tp == 0.0 {
                    return 0.0;
                }
                let precision = tp / predicted;
                let recall = tp / support;
                2.0 * precision * recall / (precision + recall)
            })
            .collect()
    }
}

/// Weighted-average F-score: per-class F1 weighted by class support.
pub fn waf(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::config("empty confusion matrix"));
    }
    let f1 = cm.per_class_f1();
    Ok((0..cm.num_classes())
        .map(|c| cm.support(c) as f64 / total as f64 * f1[c])
        .sum())
}

pub fn accuracy(cm: &ConfusionMatrix) -> Result<f64> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::config("empty confusion matrix"));
    }
    let trace: usize = (0..cm.num_classes()).map(|c| cm.count(c, c)).sum();
    Ok(trace as f64 / total as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SetScore {
    pub accuracy_s: f64,
    pub recall_s: f64,
    pub avg: f64,
}

/// Per-sample overlap ratios: accuracy_s = |pred ∩ ref| / |pred| (0 if pred
/// empty), recall_s = |pred ∩ ref| / |ref| (0 if ref empty).
pub fn set_score(pred: &BTreeSet<String>, reference: &BTreeSet<String>) -> SetScore {
    let overlap = pred.intersection(reference).count() as f64;
    let accuracy_s = if pred.is_empty() {
        0.0
    } else {
        overlap / pred.len() as f64
    };
    let recall_s = if reference.is_empty() {
        0.0
    } else {
        overlap / reference.len() as f64
    };
    SetScore {
        accuracy_s,
        recall_s,
        avg: (accuracy_s + recall_s) / 2.0,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorpusSetScore {
    pub accuracy_s: f64,
    pub recall_s: f64,
    pub avg: f64,
    pub empty_predictions: usize,
}

/// Corpus score is the mean of per-sample scores, not micro-averaged counts.
pub fn set_scores(samples: &[(BTreeSet<String>, BTreeSet<String>)]) -> Result<CorpusSetScore> {
    if samples.is_empty() {
        return Err(Error::config("set_scores over zero samples"));
    }
    let n = samples.len() as f64;
    let mut acc = 0.0;
    let mut rec = 0.0;
    let mut empty = 0;
    for (pred, reference) in samples {
        let s = set_score(pred, reference);
        acc += s.accuracy_s;
        rec += s.recall_s;
        if pred.is_empty() {
            empty += 1;
        }
    }
    let accuracy_s = acc / n;
    let recall_s = rec / n;
    Ok(CorpusSetScore {
        accuracy_s,
        recall_s,
        avg: (accuracy_s + recall_s) / 2.0,
        empty_predictions: empty,
    })
}

/// Percent with two decimals, half-up.
pub fn percent(x: f64) -> String {
    let scaled = (x * 10_000.0 + 0.5).floor() / 100.0;
    format!("{scaled:.2}")
}

/// Per-run metric report written alongside checkpoints.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MetricReport {
    pub config_hash: String,
    pub dataset_hash: String,
    pub waf: f64,
    pub acc: f64,
    pub per_class_f1: Vec<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub set_metrics: Option<CorpusSetScore>,
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Rng;

    fn set(items: &[&str]) -> BTreeSet<String> {
        items.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn perfect_diagonal_scores_one() {
        let mut cm = ConfusionMatrix::new(3);
        for c in 0..3 {
            cm.set_count(c, c, 5);
        }
        assert_eq!(waf(&cm).unwrap(), 1.0);
        assert_eq!(accuracy(&cm).unwrap(), 1.0);
    }

    #[test]
    fn waf_hand_case() {
        // two classes, 10 refs each; class 0 all correct, class 1 all
        // predicted as class 0: F1_0 = 2/3, F1_1 = 0, WAF = 1/3
        let mut cm = ConfusionMatrix::new(2);
        cm.set_count(0, 0, 10);
        cm.set_count(1, 0, 10);
        let got = waf(&cm).unwrap();
        assert!((got - 1.0 / 3.0).abs() < 1e-15, "{got}");
    }

    #[test]
    fn accuracy_cases() {
        let mut uniform = ConfusionMatrix::new(4);
        for r in 0..4 {
            for p in 0..4 {
                uniform.set_count(r, p, 3);
            }
        }
        assert!((accuracy(&uniform).unwrap() - 0.25).abs() < 1e-15);
        let mut off = ConfusionMatrix::new(2);
        off.set_count(0, 1, 7);
        off.set_count(1, 0, 2);
        assert_eq!(accuracy(&off).unwrap(), 0.0);
    }

    #[test]
    fn empty_matrix_is_error() {
        let cm = ConfusionMatrix::new(3);
        assert!(waf(&cm).is_err());
        assert!(accuracy(&cm).is_err());
    }

    /// Brute-force oracle: per-class precision/recall/F1 from first
    /// principles, independent of the ConfusionMatrix accessors.
    pub(crate) fn waf_oracle(counts: &[Vec<usize>]) -> f64 {
        let k = counts.len();
        let total: usize = counts.iter().flatten().sum();
        let mut weighted = 0.0;
        for c in 0..k {
            let tp = counts[c][c] as f64;
            let mut fn_ = 0.0;
            let mut fp = 0.0;
            for j in 0..k {
                if j != c {
                    fn_ += counts[c][j] as f64;
                    fp += counts[j][c] as f64;
                }
            }
            let f1 = if tp == 0.0 {
                0.0
            } else {
                let p = tp / (tp + fp);
                let r = tp / (tp + fn_);
                2.0 * p * r / (p + r)
            };
            weighted += (tp + fn_) / total as f64 * f1;
        }
        weighted
    }

    #[test]
    fn waf_matches_brute_force_oracle_on_random_matrices() {
        let mut rng = Rng::new(31);
        for _ in 0..100 {
            let k = 2 + rng.next_index(6);
            let mut counts = vec![vec![0usize; k]; k];
            let mut cm = ConfusionMatrix::new(k);
            let mut nonzero = false;
            for r in 0..k {
                for p in 0..k {
                    let v = rng.next_index(20);
                    counts[r][p] = v;
                    cm.set_count(r, p, v);
                    nonzero |= v > 0;
                }
            }
            if !nonzero {
                counts[0][0] = 1;
                cm.set_count(0, 0, 1);
            }
            let got = waf(&cm).unwrap();
            let want = waf_oracle(&counts);
            assert!((got - want).abs() <= 1e-12, "{got} vs {want}");
        }
    }

    #[test]
    fn waf_invariant_under_class_permutation() {
        let mut rng = Rng::new(32);
        let k = 4;
        let mut cm = ConfusionMatrix::new(k);
        for r in 0..k {
            for p in 0..k {
                cm.set_count(r, p, rng.next_index(15));
            }
        }
        cm.set_count(0, 0, 5);
        let perm = [2usize, 0, 3, 1];
        let mut permuted = ConfusionMatrix::new(k);
        for r in 0..k {
            for p in 0..k {
                permuted.set_count(perm[r], perm[p], cm.count(r, p));
            }
        }
        assert!((waf(&cm).unwrap() - waf(&permuted).unwrap()).abs() < 1e-14);
        assert!((accuracy(&cm).unwrap() - accuracy(&permuted).unwrap()).abs() < 1e-14);
    }

    #[test]
    fn identical_sets_score_one() {
        let s = set(&["happy", "excited"]);
        let score = set_score(&s, &s);
        assert_eq!(score.accuracy_s, 1.0);
        assert_eq!(score.recall_s, 1.0);
        assert_eq!(score.avg, 1.0);
    }

    #[test]
    fn all_empty_predictions_score_zero() {
        let samples: Vec<(BTreeSet<String>, BTreeSet<String>)> = (0..5)
            .map(|_| (BTreeSet::new(), set(&["happy"])))
            .collect();
        let corpus = set_scores(&samples).unwrap();
        assert_eq!(corpus.accuracy_s, 0.0);
        assert_eq!(corpus.recall_s, 0.0);
        assert_eq!(corpus.avg, 0.0);
        assert_eq!(corpus.empty_predictions, 5);
        assert_eq!(percent(corpus.avg), "0.00");
    }

    #[test]
    fn partial_overlap_arithmetic() {
        let score = set_score(&set(&["happy"]), &set(&["happy", "excited"]));
        assert_eq!(score.accuracy_s, 1.0);
        assert_eq!(score.recall_s, 0.5);
        assert_eq!(score.avg, 0.75);
    }

    #[test]
    fn set_score_symmetric_under_swap() {
        let a = set(&["happy", "calm"]);
        let b = set(&["calm", "sad", "worried"]);
        let fwd = set_score(&a, &b);
        let rev = set_score(&b, &a);
        assert_eq!(fwd.accuracy_s, rev.recall_s);
        assert_eq!(fwd.recall_s, rev.accuracy_s);
    }

    #[test]
    fn corpus_is_mean_of_per_sample_scores() {
        let samples = vec![
            (set(&["happy"]), set(&["happy"])),
            (set(&["sad"]), set(&["happy"])),
        ];
        let corpus = set_scores(&samples).unwrap();
        assert_eq!(corpus.accuracy_s, 0.5);
        assert_eq!(corpus.recall_s, 0.5);
    }

    #[test]
    fn percent_rounds_half_up() {
        assert_eq!(percent(0.85306), "85.31");
        assert_eq!(percent(0.85304), "85.30");
        assert_eq!(percent(1.0), "100.00");
        // exact binary tie: 0.03125 * 10000 = 312.5; half-up gives 3.13
        assert_eq!(percent(0.03125), "3.13");
    }
}
