//! Streaming inference with a debounced stable-state flag: the reported
//! stable state flips only after k consecutive identical per-record labels.

use std::fmt::Write as _;

use super::eval::detector_probs;
use super::train::DetectorModel;
use crate::error::Result;
use crate::synthcam::FeatureRecord;

/// Per-record decision. Labels follow the dataset convention:
/// 0 = abnormal, 1 = normal.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateDecision {
    pub label: u8,
    /// Softmax probability of the predicted class.
    pub confidence: f64,
    /// The debounced state after this record.
    pub stable: u8,
}

/// Debounce state machine for one stream.
#[derive(Debug, Clone)]
pub struct DebouncedStream {
    k: u32,
    stable: Option<u8>,
    run_label: u8,
    run_len: u32,
}

impl DebouncedStream {
    pub fn new(k: u32) -> Self {
        DebouncedStream {
            k: k.max(1),
            stable: None,
            run_label: 0,
            run_len: 0,
        }
    }

    /// Feeds one per-record label; returns the stable state after it.
    /// The first record initializes the stable state directly.
    pub fn push(&mut self, label: u8) -> u8 {
        match self.stable {
            None => {
                self.stable = Some(label);
                self.run_label = label;
                self.run_len = 0;
                label
            }
            Some(current) => {
                if label == current {
                    self.run_len = 0;
                    current
                } else {
                    if label == self.run_label {
                        self.run_len += 1;
                    } else {
                        self.run_label = label;
                        self.run_len = 1;
                    }
                    if self.run_len >= self.k {
                        self.stable = Some(label);
                        self.run_len = 0;
                        label
                    } else {
                        current
                    }
                }
            }
        }
    }
}

/// Classifies a record stream: per-record argmax label and confidence, plus
/// the debounced stable flag.
pub fn infer_state(
    model: &mut DetectorModel,
    records: &[FeatureRecord],
    debounce_k: u32,
) -> Result<Vec<StateDecision>> {
    if records.is_empty() {
        return Ok(Vec::new());
    }
    let probs = detector_probs(model, records)?;
    let mut stream = DebouncedStream::new(debounce_k);
    let mut out = Vec::with_capacity(records.len());
    for i in 0..records.len() {
        let row = &probs.data()[i * 2..(i + 1) * 2];
        let label = u8::from(row[1] > row[0]);
        let confidence = row[label as usize];
        let stable = stream.push(label);
        out.push(StateDecision {
            label,
            confidence,
            stable,
        });
    }
    Ok(out)
}

pub const DECISION_CSV_HEADER: &str = "frame,label,confidence,stable";

pub fn decisions_to_csv(decisions: &[StateDecision]) -> String {
    let mut out = String::from(DECISION_CSV_HEADER);
    out.push('\n');
    for (i, d) in decisions.iter().enumerate() {
        let _ = writeln!(out, "{},{},{:.6},{}", i, d.label, d.confidence, d.stable);
    }
    out
}
