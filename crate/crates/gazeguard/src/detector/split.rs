//! Deterministic train/val/test partition by hashed record index.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::util::{derive_seed3, unit_f64};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Val,
    Test,
}

/// Fractions default to 5:2:1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub train: f64,
    pub val: f64,
    pub test: f64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            train: 5.0 / 8.0,
            val: 2.0 / 8.0,
            test: 1.0 / 8.0,
        }
    }
}

const TAG_SPLIT: u64 = 0x51;

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.train > 0.0 && self.val > 0.0 && self.test > 0.0) {
            return Err(Error::Config("split fractions must be positive".into()));
        }
        if ((self.train + self.val + self.test) - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!(
                "split fractions must sum to 1, got {}",
                self.train + self.val + self.test
            )));
        }
        Ok(())
    }

    /// Assignment depends only on (index, seed); records never migrate
    /// between splits when the dataset grows.
    pub fn assign(&self, index: usize, seed: u64) -> Split {
        let u = unit_f64(derive_seed3(seed, TAG_SPLIT, index as u64, 0));
        if u < self.train {
            Split::Train
        } else if u < self.train + self.val {
            Split::Val
        } else {
            Split::Test
        }
    }

    pub fn partition(&self, n: usize, seed: u64) -> (Vec<usize>, Vec<usize>, Vec<usize>) {
        let mut train = Vec::new();
        let mut val = Vec::new();
        let mut test = Vec::new();
        for i in 0..n {
            match self.assign(i, seed) {
                Split::Train => train.push(i),
                Split::Val => val.push(i),
                Split::Test => test.push(i),
            }
        }
        (train, val, test)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_is_5_2_1_and_valid() {
        let spec = SplitSpec::default();
        spec.validate().unwrap();
        let (tr, va, te) = spec.partition(80_000, 7);
        assert_eq!(tr.len() + va.len() + te.len(), 80_000);
        let frac = |v: &Vec<usize>| v.len() as f64 / 80_000.0;
        assert!((frac(&tr) - 0.625).abs() < 0.01);
        assert!((frac(&va) - 0.25).abs() < 0.01);
        assert!((frac(&te) - 0.125).abs() < 0.01);
    }

    #[test]
    fn identical_inputs_give_identical_partition() {
        let spec = SplitSpec::default();
        assert_eq!(spec.partition(1000, 3), spec.partition(1000, 3));
        assert_ne!(spec.partition(1000, 3).0, spec.partition(1000, 4).0);
    }

    #[test]
    fn invalid_fractions_are_rejected() {
        assert!(SplitSpec {
            train: 0.5,
            val: 0.5,
            test: 0.5
        }
        .validate()
        .is_err());
        assert!(SplitSpec {
            train: 1.0,
            val: 0.0,
            test: 0.0
        }
        .validate()
        .is_err());
    }
}
