//! Accuracy, confusion matrix, and per-class precision/recall.

use serde::Serialize;

use super::loss::softmax_probs;
use super::train::DetectorModel;
use crate::error::{Error, Result};
use crate::gradcore::Tensor;
use crate::synthcam::FeatureRecord;

/// Confusion layout: [[tn, fp], [fn, tp]] with class 1 (normal) positive.
#[derive(Debug, Clone, Serialize)]
pub struct DetectorMetrics {
    pub accuracy: f64,
    pub confusion: [[u64; 2]; 2],
    /// indexed by class: [abnormal(0), normal(1)]
    pub precision: [f64; 2],
    pub recall: [f64; 2],
}

pub fn evaluate_logits(logits: &Tensor, labels: &[u8]) -> Result<DetectorMetrics> {
    if labels.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    if logits.shape() != [labels.len(), 2] {
        return Err(Error::Structure(format!(
            "logits shape {:?} does not match {} labels",
            logits.shape(),
            labels.len()
        )));
    }
    let mut confusion = [[0u64; 2]; 2];
    for (i, &y) in labels.iter().enumerate() {
        let row = &logits.data()[i * 2..(i + 1) * 2];
        let pred = u8::from(row[1] > row[0]);
        confusion[y as usize][pred as usize] += 1;
    }
    let total: u64 = confusion.iter().flatten().sum();
    let correct = confusion[0][0] + confusion[1][1];
    let accuracy = correct as f64 / total as f64;
    let mut precision = [0.0; 2];
    let mut recall = [0.0; 2];
    for c in 0..2 {
        let predicted: u64 = confusion[0][c] + confusion[1][c];
        let actual: u64 = confusion[c][0] + confusion[c][1];
        precision[c] = if predicted > 0 {
            confusion[c][c] as f64 / predicted as f64
        } else {
            0.0
        };
        recall[c] = if actual > 0 {
            confusion[c][c] as f64 / actual as f64
        } else {
            0.0
        };
    }
    Ok(DetectorMetrics {
        accuracy,
        confusion,
        precision,
        recall,
    })
}

/// Runs the model over a labeled dataset.
pub fn evaluate_detector(
    model: &mut DetectorModel,
    records: &[FeatureRecord],
) -> Result<DetectorMetrics> {
    if records.is_empty() {
        return Err(Error::Argument("empty evaluation set".into()));
    }
    let logits = model.logits(records)?;
    let labels: Vec<u8> = records.iter().map(|r| r.label).collect();
    evaluate_logits(&logits, &labels)
}

/// Softmax probabilities for a batch of records (inference-time confidence).
pub fn detector_probs(model: &mut DetectorModel, records: &[FeatureRecord]) -> Result<Tensor> {
    Ok(softmax_probs(&model.logits(records)?))
}
