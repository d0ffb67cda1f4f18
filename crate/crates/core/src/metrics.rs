//! Confusion matrices and precision / recall / F1 with macro and weighted
//! averaging.
//!
//! A class whose denominator is zero scores 0 for that metric.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};

/// `K × K` counts, rows are true classes and columns predictions.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConfusionMatrix {
    classes: usize,
    counts: Vec<u64>,
}

impl ConfusionMatrix {
    pub fn from_counts(classes: usize, counts: Vec<u64>) -> Result<Self> {
        if counts.len() != classes * classes {
            return Err(Error::Shape {
                op: "ConfusionMatrix::from_counts",
                expected: (classes, classes),
                found: (counts.len(), 1),
            });
        }
        Ok(Self { classes, counts })
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn get(&self, truth: usize, pred: usize) -> u64 {
        self.counts[truth * self.classes + pred]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.classes).map(|k| self.get(k, k)).sum()
    }

    pub fn true_positives(&self, k: usize) -> u64 {
        self.get(k, k)
    }

    pub fn false_positives(&self, k: usize) -> u64 {
        (0..self.classes)
            .filter(|&t| t != k)
            .map(|t| self.get(t, k))
            .sum()
    }

    pub fn false_negatives(&self, k: usize) -> u64 {
        (0..self.classes)
            .filter(|&p| p != k)
            .map(|p| self.get(k, p))
            .sum()
    }

    pub fn true_negatives(&self, k: usize) -> u64 {
        self.total() - self.true_positives(k) - self.false_positives(k) - self.false_negatives(k)
    }

    /// Number of samples whose true class is `k`.
    pub fn support(&self, k: usize) -> u64 {
        (0..self.classes).map(|p| self.get(k, p)).sum()
    }
}

/// Accumulates a confusion matrix from paired label slices.
pub fn confusion(truth: &[usize], pred: &[usize], classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::Shape {
            op: "confusion",
            expected: (truth.len(), 1),
            found: (pred.len(), 1),
        });
    }
    let mut counts = vec![0u64; classes * classes];
    for (i, (&t, &p)) in truth.iter().zip(pred).enumerate() {
        if t >= classes || p >= classes {
            return Err(Error::Data(format!(
                "label out of range at position {i}: truth {t}, prediction {p}, classes {classes}"
            )));
        }
        counts[t * classes + p] += 1;
    }
    Ok(ConfusionMatrix { classes, counts })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Averaging {
    Macro,
    Weighted,
}

/// Per-class scores.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassScores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

/// Averaged scores plus accuracy.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Scores {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Precision, recall and F1 of every class.
pub fn per_class(cm: &ConfusionMatrix) -> Result<Vec<ClassScores>> {
    if cm.total() == 0 {
        return Err(Error::Empty("confusion matrix"));
    }
    Ok((0..cm.classes)
        .map(|k| {
            let tp = cm.true_positives(k);
            let precision = ratio(tp, tp + cm.false_positives(k));
            let recall = ratio(tp, tp + cm.false_negatives(k));
            let f1 = if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            };
            ClassScores {
                precision,
                recall,
                f1,
                support: cm.support(k),
            }
        })
        .collect())
}

/// Averaged precision / recall / F1 and accuracy.
///
/// Weighted averaging uses true-class counts as weights; weighted F1 is the
/// weighted mean of per-class F1.
pub fn prf1(cm: &ConfusionMatrix, averaging: Averaging) -> Result<Scores> {
    let classes = per_class(cm)?;
    let total = cm.total() as f64;
    let weight = |c: &ClassScores| match averaging {
        Averaging::Macro => 1.0 / classes.len() as f64,
        Averaging::Weighted => c.support as f64 / total,
    };
    let mut out = Scores {
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        accuracy: cm.trace() as f64 / total,
    };
    for c in &classes {
        let w = weight(c);
        out.precision += w * c.precision;
        out.recall += w * c.recall;
        out.f1 += w * c.f1;
    }
    Ok(out)
}

/// Accuracy and both averaging schemes in one bundle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricBundle {
    pub accuracy: f64,
    pub macro_avg: Scores,
    pub weighted_avg: Scores,
}

pub fn evaluate(truth: &[usize], pred: &[usize], classes: usize) -> Result<MetricBundle> {
    let cm = confusion(truth, pred, classes)?;
    let macro_avg = prf1(&cm, Averaging::Macro)?;
    let weighted_avg = prf1(&cm, Averaging::Weighted)?;
    Ok(MetricBundle {
        accuracy: macro_avg.accuracy,
        macro_avg,
        weighted_avg,
    })
}
