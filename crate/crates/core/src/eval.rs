//! Accuracy metrics with wood as the positive class, and time-per-million-points.
//!
//! Degenerate denominators are defined rather than rejected: a class that is
//! neither present nor predicted has IoU 1; precision, recall, F1,
//! sensitivity and specificity fall back to 0.

use serde::{Deserialize, Serialize};

use crate::cloud::{ClassLabel, LabeledCloud};
use crate::error::{contract, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Same counts with leaf treated as the positive class.
    pub fn swapped(&self) -> Self {
        Self {
            tp: self.tn,
            tn: self.tp,
            fp: self.fn_,
            fn_: self.fp,
        }
    }

    fn add(mut self, pred: ClassLabel, truth: ClassLabel) -> Self {
        match (pred.is_wood(), truth.is_wood()) {
            (true, true) => self.tp += 1,
            (false, false) => self.tn += 1,
            (true, false) => self.fp += 1,
            (false, true) => self.fn_ += 1,
        }
        self
    }
}

pub fn confusion(pred: &[ClassLabel], truth: &[ClassLabel]) -> Result<ConfusionMatrix> {
    if pred.len() != truth.len() {
        return contract(format!(
            "{} predictions for {} truth labels",
            pred.len(),
            truth.len()
        ));
    }
    if pred.is_empty() {
        return contract("no labels to compare");
    }
    Ok(pred
        .iter()
        .zip(truth)
        .fold(ConfusionMatrix::default(), |c, (&p, &t)| c.add(p, t)))
}

fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn overall_accuracy(c: &ConfusionMatrix) -> Result<f64> {
    if c.total() == 0 {
        return contract("overall accuracy of an empty confusion matrix");
    }
    Ok(ratio(c.tp + c.tn, c.total()))
}

/// `(iou_wood, iou_leaf)`.
pub fn iou_per_class(c: &ConfusionMatrix) -> (f64, f64) {
    let iou = |hit: u64, miss: u64| {
        if hit + miss == 0 {
            1.0
        } else {
            ratio(hit, hit + miss)
        }
    };
    (iou(c.tp, c.fp + c.fn_), iou(c.tn, c.fn_ + c.fp))
}

pub fn mean_iou(ious: &[f64]) -> Result<f64> {
    if ious.is_empty() {
        return contract("mean IoU over zero classes");
    }
    Ok(ious.iter().sum::<f64>() / ious.len() as f64)
}

/// `(precision, recall, f1)` of the wood class.
pub fn precision_recall_f1(c: &ConfusionMatrix) -> (f64, f64, f64) {
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall > 0.0 {
        2.0 * (precision * recall) / (precision + recall)
    } else {
        0.0
    };
    (precision, recall, f1)
}

/// `(sensitivity, specificity)`; sensitivity is the same number as recall.
pub fn sensitivity_specificity(c: &ConfusionMatrix) -> (f64, f64) {
    (ratio(c.tp, c.tp + c.fn_), ratio(c.tn, c.tn + c.fp))
}

/// Seconds per million points.
pub fn tpmp(total_points: usize, wall_seconds: f64) -> Result<f64> {
    if total_points == 0 {
        return contract("time per million points of an empty cloud");
    }
    if !(wall_seconds >= 0.0) {
        return contract("wall time must be nonnegative");
    }
    Ok(wall_seconds * 1e6 / total_points as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingRecord {
    pub total_points: usize,
    pub wall_seconds: f64,
    pub tpmp: f64,
}

impl TimingRecord {
    pub fn new(total_points: usize, wall_seconds: f64) -> Result<Self> {
        Ok(Self {
            total_points,
            wall_seconds,
            tpmp: tpmp(total_points, wall_seconds)?,
        })
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "points={}\nseconds={}\ntpmp={}\n",
            self.total_points, self.wall_seconds, self.tpmp
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub oa: f64,
    pub miou: f64,
    pub iou_wood: f64,
    pub iou_leaf: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub sensitivity: f64,
    pub specificity: f64,
    pub counts: ConfusionMatrix,
}

impl MetricsReport {
    pub fn from_confusion(c: ConfusionMatrix) -> Result<Self> {
        let (iou_wood, iou_leaf) = iou_per_class(&c);
        let (precision, recall, f1) = precision_recall_f1(&c);
        let (sensitivity, specificity) = sensitivity_specificity(&c);
        Ok(Self {
            oa: overall_accuracy(&c)?,
            miou: mean_iou(&[iou_wood, iou_leaf])?,
            iou_wood,
            iou_leaf,
            precision,
            recall,
            f1,
            sensitivity,
            specificity,
            counts: c,
        })
    }

    pub fn to_key_value(&self) -> String {
        format!(
            "oa={}\nmiou={}\niou_wood={}\niou_leaf={}\nprecision={}\nrecall={}\nf1={}\n\
             sensitivity={}\nspecificity={}\ntp={}\ntn={}\nfp={}\nfn={}\n",
            self.oa,
            self.miou,
            self.iou_wood,
            self.iou_leaf,
            self.precision,
            self.recall,
            self.f1,
            self.sensitivity,
            self.specificity,
            self.counts.tp,
            self.counts.tn,
            self.counts.fp,
            self.counts.fn_
        )
    }
}

pub fn evaluate_labels(pred: &[ClassLabel], truth: &[ClassLabel]) -> Result<MetricsReport> {
    MetricsReport::from_confusion(confusion(pred, truth)?)
}

/// Compares the labels of two clouds holding the same points in the same order.
pub fn evaluate<T: Real>(pred: &LabeledCloud<T>, truth: &LabeledCloud<T>) -> Result<MetricsReport> {
    if pred.len() != truth.len() {
        return contract(format!(
            "prediction has {} points, truth has {}",
            pred.len(),
            truth.len()
        ));
    }
    match (pred.labels(), truth.labels()) {
        (Some(p), Some(t)) => evaluate_labels(p, t),
        _ => contract("both clouds need labels to evaluate"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ClassLabel::{Leaf, Wood};

    fn cm(tp: u64, tn: u64, fp: u64, fn_: u64) -> ConfusionMatrix {
        ConfusionMatrix { tp, tn, fp, fn_ }
    }

    #[test]
    fn confusion_examples() {
        assert_eq!(
            confusion(&[Wood, Leaf], &[Wood, Leaf]).unwrap(),
            cm(1, 1, 0, 0)
        );
        assert_eq!(confusion(&[Wood; 4], &[Leaf; 4]).unwrap(), cm(0, 0, 4, 0));
        assert!(confusion(&[Wood], &[Wood, Leaf]).is_err());
    }

    #[test]
    fn accuracy_examples() {
        assert!((overall_accuracy(&cm(50, 45, 3, 2)).unwrap() - 0.95).abs() < 1e-15);
        assert_eq!(overall_accuracy(&cm(3, 4, 0, 0)).unwrap(), 1.0);
        assert_eq!(overall_accuracy(&cm(0, 0, 3, 4)).unwrap(), 0.0);
        assert!(overall_accuracy(&cm(0, 0, 0, 0)).is_err());
    }

    #[test]
    fn iou_examples() {
        let (w, l) = iou_per_class(&cm(8, 88, 2, 2));
        assert!((w - 8.0 / 12.0).abs() < 1e-15);
        assert!((l - 88.0 / 92.0).abs() < 1e-15);
        assert!((mean_iou(&[w, l]).unwrap() - 0.8116).abs() < 1e-4);
        assert_eq!(iou_per_class(&cm(5, 5, 0, 0)), (1.0, 1.0));
        assert_eq!(iou_per_class(&cm(0, 10, 0, 0)), (1.0, 1.0));
        assert_eq!(mean_iou(&[1.0, 1.0]).unwrap(), 1.0);
        assert_eq!(mean_iou(&[0.0, 1.0]).unwrap(), 0.5);
    }

    #[test]
    fn precision_recall_examples() {
        let (p, r, f) = precision_recall_f1(&cm(8, 0, 2, 2));
        assert!((p - 0.8).abs() < 1e-15 && (r - 0.8).abs() < 1e-15 && (f - 0.8).abs() < 1e-15);
        assert_eq!(precision_recall_f1(&cm(0, 5, 3, 4)), (0.0, 0.0, 0.0));
    }

    #[test]
    fn sensitivity_specificity_examples() {
        let (se, sp) = sensitivity_specificity(&cm(9, 80, 10, 1));
        assert!((se - 0.9).abs() < 1e-15);
        assert!((sp - 80.0 / 90.0).abs() < 1e-15);
        assert!((sp - 0.8889).abs() < 1e-4);
        assert_eq!(sensitivity_specificity(&cm(3, 3, 0, 0)), (1.0, 1.0));
    }

    #[test]
    fn tpmp_examples() {
        assert_eq!(tpmp(1_000_000, 1.0).unwrap(), 1.0);
        assert!(tpmp(0, 1.0).is_err());
        assert!(tpmp(10, -1.0).is_err());
    }

    #[test]
    fn swapped_labels_on_balanced_set() {
        let truth = [Wood, Leaf, Wood, Leaf];
        let pred = [Leaf, Wood, Leaf, Wood];
        assert_eq!(evaluate_labels(&pred, &truth).unwrap().oa, 0.0);
        let r = evaluate_labels(&truth, &truth).unwrap();
        assert_eq!((r.oa, r.miou, r.f1), (1.0, 1.0, 1.0));
    }

    #[test]
    fn positive_class_choice_matters_for_f1_only() {
        // 10 wood, 90 leaf; a classifier that misses most wood.
        let c = cm(2, 88, 2, 8);
        let s = c.swapped();
        assert_eq!(overall_accuracy(&c).unwrap(), overall_accuracy(&s).unwrap());
        let f1_wood = precision_recall_f1(&c).2;
        let f1_leaf = precision_recall_f1(&s).2;
        assert!(f1_leaf > 0.9 && f1_wood < 0.4, "{f1_wood} {f1_leaf}");
    }
}
