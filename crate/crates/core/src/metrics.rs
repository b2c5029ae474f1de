//! Confusion counts and recall / precision / F1 of a flag set against
//! ground truth.
//!
//! Zero denominators give 0: recall with no true anomalies, precision with
//! no flags, F1 when recall and precision are both 0. `ConfusionCounts::
//! no_anomalies` lets reports surface the first case.

use serde::{Deserialize, Serialize};

use crate::data::ContaminatedSample;
use crate::detectors::FlagSet;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionCounts {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
}

impl ConfusionCounts {
    pub fn n(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }

    pub fn positives(&self) -> usize {
        self.tp + self.fn_
    }

    pub fn flagged(&self) -> usize {
        self.tp + self.fp
    }

    pub fn no_anomalies(&self) -> bool {
        self.positives() == 0
    }
}

/// Counts for flagged row indices against a per-row anomaly mask.
pub fn confusion_from_mask(flags: &[usize], is_anomaly: &[bool]) -> Result<ConfusionCounts> {
    let n = is_anomaly.len();
    let mut flagged = vec![false; n];
    for &i in flags {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, n });
        }
        flagged[i] = true;
    }
    let mut c = ConfusionCounts::default();
    for (&f, &a) in flagged.iter().zip(is_anomaly) {
        match (f, a) {
            (true, true) => c.tp += 1,
            (true, false) => c.fp += 1,
            (false, true) => c.fn_ += 1,
            (false, false) => c.tn += 1,
        }
    }
    Ok(c)
}

pub fn confusion(flags: &FlagSet, truth: &ContaminatedSample) -> Result<ConfusionCounts> {
    confusion_from_mask(flags.indices(), truth.is_anomaly())
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn recall(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fn_)
}

pub fn precision(c: &ConfusionCounts) -> f64 {
    ratio(c.tp, c.tp + c.fp)
}

pub fn f1(c: &ConfusionCounts) -> f64 {
    f1_from(recall(c), precision(c))
}

/// Harmonic mean of recall and precision.
pub fn f1_from(recall: f64, precision: f64) -> f64 {
    if recall + precision == 0.0 {
        0.0
    } else {
        2.0 * recall * precision / (recall + precision)
    }
}

/// Precision implied by a recall and an F1 value.
pub fn precision_from_f1(recall: f64, f1: f64) -> f64 {
    f1 * recall / (2.0 * recall - f1)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Scores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
}

impl From<&ConfusionCounts> for Scores {
    fn from(c: &ConfusionCounts) -> Self {
        Self { recall: recall(c), precision: precision(c), f1: f1(c) }
    }
}
