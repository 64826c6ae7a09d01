//! Classification metrics.

use alloc::vec;

use crate::data::Labels;
use crate::error::{Error, Result};
use crate::matrix::Matrix;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct Metrics {
    pub loss: f64,
    /// Exact-match rate: argmax for multi-class, the whole label vector for
    /// multi-label.
    pub accuracy: f64,
    pub micro_f1: f64,
    pub macro_f1: f64,
}

impl Metrics {
    /// The metric used for model selection.
    pub fn selection_score(&self, labels: &Labels) -> f64 {
        match labels {
            Labels::MultiClass { .. } => self.accuracy,
            Labels::MultiLabel { .. } => self.micro_f1,
        }
    }
}

/// Index of the largest entry; ties go to the lowest index.
pub fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, &x) in row.iter().enumerate() {
        if x > row[best] {
            best = j;
        }
    }
    best
}

#[derive(Clone, Copy, Default)]
struct Counts {
    tp: u64,
    fp: u64,
    fn_: u64,
}

impl Counts {
    fn f1(self) -> Option<f64> {
        let denom = 2 * self.tp + self.fp + self.fn_;
        (denom > 0).then(|| (2 * self.tp) as f64 / denom as f64)
    }
}

/// Scores `logits` on the masked nodes. Multi-label decisions use
/// `σ(z) ≥ 0.5`, i.e. `z ≥ 0`. Classes that never occur and are never
/// predicted are left out of the macro average.
pub fn compute(logits: &Matrix, labels: &Labels, mask: &[usize], loss: f64) -> Result<Metrics> {
    if mask.is_empty() {
        return Err(Error::EmptyMask);
    }
    let c = labels.num_classes();
    if logits.cols() != c {
        return Err(Error::ShapeMismatch {
            op: "metrics",
            lhs: logits.shape(),
            rhs: (labels.len(), c),
        });
    }
    let mut per_class = vec![Counts::default(); c];
    let mut exact = 0usize;
    for &n in mask {
        let row = logits.row(n);
        match labels {
            Labels::MultiClass { classes, .. } => {
                let truth = classes[n].ok_or(Error::Unlabeled { node: n })?;
                let pred = argmax(row);
                if pred == truth {
                    exact += 1;
                    per_class[truth].tp += 1;
                } else {
                    per_class[pred].fp += 1;
                    per_class[truth].fn_ += 1;
                }
            }
            Labels::MultiLabel { targets, .. } => {
                let truth = targets[n].as_ref().ok_or(Error::Unlabeled { node: n })?;
                let mut all = true;
                for (j, (&z, &y)) in row.iter().zip(truth).enumerate() {
                    let pred = z >= 0.0;
                    match (pred, y) {
                        (true, true) => per_class[j].tp += 1,
                        (true, false) => per_class[j].fp += 1,
                        (false, true) => per_class[j].fn_ += 1,
                        (false, false) => {}
                    }
                    all &= pred == y;
                }
                exact += usize::from(all);
            }
        }
    }
    let total = per_class.iter().fold(Counts::default(), |a, b| Counts {
        tp: a.tp + b.tp,
        fp: a.fp + b.fp,
        fn_: a.fn_ + b.fn_,
    });
    let (sum, count) = per_class
        .iter()
        .filter_map(|k| k.f1())
        .fold((0.0, 0usize), |(s, n), f| (s + f, n + 1));
    Ok(Metrics {
        loss,
        accuracy: exact as f64 / mask.len() as f64,
        micro_f1: total.f1().unwrap_or(1.0),
        macro_f1: if count == 0 { 1.0 } else { sum / count as f64 },
    })
}
