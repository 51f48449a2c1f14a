use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::features::featurize;
use super::model::StudentModel;
use crate::data::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub macro_f1: f64,
    pub accuracy: f64,
    pub per_label_f1: BTreeMap<String, f64>,
}

/// Per-label F1 from label indices. A zero denominator in precision, recall
/// or F1 yields 0.
pub fn per_label_f1(num_labels: usize, gold: &[usize], predicted: &[usize]) -> Vec<f64> {
    assert_eq!(gold.len(), predicted.len(), "gold/predicted length mismatch");
    let mut tp = vec![0usize; num_labels];
    let mut fp = vec![0usize; num_labels];
    let mut fn_ = vec![0usize; num_labels];
    for (&g, &p) in gold.iter().zip(predicted) {
        if g == p {
            tp[g] += 1;
        } else {
            fp[p] += 1;
            fn_[g] += 1;
        }
    }
    (0..num_labels)
        .map(|k| {
            let precision = ratio(tp[k], tp[k] + fp[k]);
            let recall = ratio(tp[k], tp[k] + fn_[k]);
            if precision + recall == 0.0 {
                0.0
            } else {
                2.0 * precision * recall / (precision + recall)
            }
        })
        .collect()
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Unweighted mean of per-label F1 over all task labels.
pub fn macro_f1(num_labels: usize, gold: &[usize], predicted: &[usize]) -> f64 {
    per_label_f1(num_labels, gold, predicted).iter().sum::<f64>() / num_labels as f64
}

impl Metrics {
    pub fn from_predictions(labels: &[String], gold: &[usize], predicted: &[usize]) -> Result<Self> {
        if gold.is_empty() {
            return Err(Error::EmptyInput("no samples to score".into()));
        }
        let f1 = per_label_f1(labels.len(), gold, predicted);
        let correct = gold.iter().zip(predicted).filter(|(g, p)| g == p).count();
        Ok(Self {
            macro_f1: f1.iter().sum::<f64>() / labels.len() as f64,
            accuracy: correct as f64 / gold.len() as f64,
            per_label_f1: labels.iter().cloned().zip(f1).collect(),
        })
    }

    /// Per-label F1 in task label order.
    pub fn f1_in_order(&self, labels: &[String]) -> Vec<f64> {
        labels.iter().map(|l| self.per_label_f1[l]).collect()
    }
}

pub fn evaluate(model: &StudentModel, data: &Dataset) -> Result<Metrics> {
    if data.is_empty() {
        return Err(Error::EmptyInput("evaluation dataset is empty".into()));
    }
    let predicted = data
        .samples()
        .iter()
        .map(|s| Ok(model.predict_features(&featurize(&s.text, model.dim()))?.label_index))
        .collect::<Result<Vec<_>>>()?;
    Metrics::from_predictions(data.task().labels(), &data.label_indices(), &predicted)
}
