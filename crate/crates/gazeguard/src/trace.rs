//! Per-epoch loss traces, serialized as `epoch,mean_loss` CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::Result;
use crate::util::atomic_write;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct LossTrace {
    pub mean_loss: Vec<f64>,
}

/// Serializes as the bare per-epoch loss array.
impl serde::Serialize for LossTrace {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.mean_loss.serialize(s)
    }
}

impl LossTrace {
    pub fn push(&mut self, loss: f64) {
        self.mean_loss.push(loss);
    }

    pub fn first(&self) -> Option<f64> {
        self.mean_loss.first().copied()
    }

    pub fn last(&self) -> Option<f64> {
        self.mean_loss.last().copied()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("epoch,mean_loss\n");
        for (i, loss) in self.mean_loss.iter().enumerate() {
            let _ = writeln!(out, "{},{}", i + 1, loss);
        }
        out
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        atomic_write(path, self.to_csv().as_bytes())
    }
}
