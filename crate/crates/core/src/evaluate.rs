//! Confusion matrices and per-level classification metrics.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Counts with rows = true level, columns = predicted level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = counts.len();
        if let Some(r) = counts.iter().find(|r| r.len() != k) {
            return Err(Error::WidthMismatch {
                expected: k,
                found: r.len(),
            });
        }
        Ok(ConfusionMatrix { counts })
    }

    pub fn n_classes(&self) -> usize {
        self.counts.len()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn support(&self, class: usize) -> u64 {
        self.counts[class].iter().sum()
    }

    pub fn predicted(&self, class: usize) -> u64 {
        self.counts.iter().map(|r| r[class]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.n_classes()).map(|i| self.counts[i][i]).sum()
    }
}

pub fn confusion_matrix(truth: &[usize], pred: &[usize], n_classes: usize) -> Result<ConfusionMatrix> {
    if truth.len() != pred.len() {
        return Err(Error::LengthMismatch(truth.len(), pred.len()));
    }
    let mut counts = vec![vec![0u64; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(pred) {
        let bad = if t >= n_classes { Some(t) } else if p >= n_classes { Some(p) } else { None };
        if let Some(label) = bad {
            return Err(Error::LabelOutOfRange {
                label,
                classes: n_classes,
            });
        }
        counts[t][p] += 1;
    }
    Ok(ConfusionMatrix { counts })
}

/// Harmonic mean of precision and recall; 0 when both are 0.
pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        0.0
    }
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub level: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
    /// False when nothing was predicted as this level (precision is 0/0).
    pub precision_defined: bool,
    /// False when the level has no true rows (recall is 0/0).
    pub recall_defined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub classes: Vec<ClassMetrics>,
    pub accuracy: f64,
    pub within_1: f64,
    pub total: u64,
    pub matrix: ConfusionMatrix,
}

/// One-vs-rest precision, recall and F1 per level, with 0/0 reported as 0.
pub fn class_metrics(cm: &ConfusionMatrix) -> Result<EvaluationReport> {
    let total = cm.total();
    if cm.n_classes() == 0 || total == 0 {
        return Err(Error::EmptyDataset);
    }
    let classes = (0..cm.n_classes())
        .map(|k| {
            let tp = cm.counts[k][k];
            let predicted = cm.predicted(k);
            let support = cm.support(k);
            let precision = ratio(tp, predicted);
            let recall = ratio(tp, support);
            ClassMetrics {
                level: k,
                precision,
                recall,
                f1: f1_score(precision, recall),
                support,
                precision_defined: predicted > 0,
                recall_defined: support > 0,
            }
        })
        .collect();
    Ok(EvaluationReport {
        classes,
        accuracy: ratio(cm.trace(), total),
        within_1: within_k_accuracy(cm, 1),
        total,
        matrix: cm.clone(),
    })
}

/// Share of rows whose predicted level is within `k` of the true level.
pub fn within_k_accuracy(cm: &ConfusionMatrix, k: usize) -> f64 {
    let mut near = 0;
    for (i, row) in cm.counts.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if i.abs_diff(j) <= k {
                near += c;
            }
        }
    }
    ratio(near, cm.total())
}

/// Share of misclassified rows that land on an adjacent level.
pub fn neighbor_error_share(cm: &ConfusionMatrix) -> f64 {
    let total = cm.total();
    let correct = cm.trace();
    let within1 = (within_k_accuracy(cm, 1) * total as f64).round() as u64;
    ratio(within1 - correct, total - correct)
}

/// Writes one row per (model, level):
/// `Model,Speeding Level,Precision,Recall,F1-Score,Accuracy,Support`.
/// Accuracy appears on each model's first row only.
pub fn write_report_csv<W: Write>(w: W, reports: &[(String, EvaluationReport)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["Model", "Speeding Level", "Precision", "Recall", "F1-Score", "Accuracy", "Support"])?;
    for (model, rep) in reports {
        for (i, c) in rep.classes.iter().enumerate() {
            let acc = if i == 0 { format!("{:.3}", rep.accuracy) } else { String::new() };
            out.write_record([
                model.clone(),
                c.level.to_string(),
                format!("{:.3}", c.precision),
                format!("{:.3}", c.recall),
                format!("{:.3}", c.f1),
                acc,
                c.support.to_string(),
            ])?;
        }
    }
    out.flush()?;
    Ok(())
}
