//! On-manifold detectors, the reconstruction-error detector, top-k flagging
//! and flag-set union.
//!
//! Every detector returns scores with "higher = more anomalous".

pub mod ee;
pub mod iforest;
pub mod lof;
pub mod neighbors;
pub mod ocsvm;
pub mod scores;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::manifold::ManifoldModel;

pub use ee::{ee_scores, fast_mcd, EeParams, McdFit};
pub use iforest::{iforest_scores, IForestParams, IsolationForest};
pub use lof::{knn_scores, lof_scores, KnnParams, LofParams};
pub use ocsvm::{ocsvm_fit, ocsvm_scores, OcsvmFit, OcsvmParams};
pub use scores::{combine_flags, top_k_flags, AnomalyScores, FlagSet};

/// Per-point reconstruction error of `x` under `model`.
pub fn re_scores(model: &ManifoldModel, x: ArrayView2<f64>) -> Result<AnomalyScores> {
    let errors = model.reconstruction_error(x)?;
    let params = BTreeMap::from([("manifold".to_string(), model.id())]);
    AnomalyScores::new("re", errors.to_vec(), params)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DetectorKind {
    Lof,
    Iforest,
    Ee,
    Ocsvm,
    Knn,
}

impl DetectorKind {
    pub const ALL: [DetectorKind; 5] = [Self::Lof, Self::Iforest, Self::Ee, Self::Ocsvm, Self::Knn];

    pub fn id(self) -> &'static str {
        match self {
            Self::Lof => "lof",
            Self::Iforest => "iforest",
            Self::Ee => "ee",
            Self::Ocsvm => "ocsvm",
            Self::Knn => "knn",
        }
    }

    /// Name used in rendered tables.
    pub fn label(self) -> &'static str {
        match self {
            Self::Lof => "LOF",
            Self::Iforest => "IF",
            Self::Ee => "EE",
            Self::Ocsvm => "OCSVM",
            Self::Knn => "kNN",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.id() == s.to_ascii_lowercase())
            .ok_or_else(|| Error::InvalidParams(format!("unknown detector '{s}'")))
    }
}

/// A detector together with its hyperparameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "method", rename_all = "lowercase")]
pub enum DetectorSpec {
    Lof(LofParams),
    Iforest(IForestParams),
    Ee(EeParams),
    Ocsvm(OcsvmParams),
    Knn(KnnParams),
}

impl DetectorSpec {
    pub fn default_for(kind: DetectorKind) -> Self {
        match kind {
            DetectorKind::Lof => Self::Lof(LofParams::default()),
            DetectorKind::Iforest => Self::Iforest(IForestParams::default()),
            DetectorKind::Ee => Self::Ee(EeParams::default()),
            DetectorKind::Ocsvm => Self::Ocsvm(OcsvmParams::default()),
            DetectorKind::Knn => Self::Knn(KnnParams::default()),
        }
    }

    pub fn kind(&self) -> DetectorKind {
        match self {
            Self::Lof(_) => DetectorKind::Lof,
            Self::Iforest(_) => DetectorKind::Iforest,
            Self::Ee(_) => DetectorKind::Ee,
            Self::Ocsvm(_) => DetectorKind::Ocsvm,
            Self::Knn(_) => DetectorKind::Knn,
        }
    }

    /// Replace the seed of seeded detectors.
    pub fn with_seed(mut self, seed: u64) -> Self {
        match &mut self {
            Self::Iforest(p) => p.seed = seed,
            Self::Ee(p) => p.seed = seed,
            _ => {}
        }
        self
    }

    pub fn score(&self, z: ArrayView2<f64>) -> Result<AnomalyScores> {
        match self {
            Self::Lof(p) => lof_scores(z, p),
            Self::Iforest(p) => iforest_scores(z, p),
            Self::Ee(p) => ee_scores(z, p),
            Self::Ocsvm(p) => ocsvm_scores(z, p),
            Self::Knn(p) => knn_scores(z, p),
        }
    }

    /// Build from `key=value` overrides on top of the defaults.
    pub fn from_overrides(kind: DetectorKind, overrides: &[(String, String)]) -> Result<Self> {
        let mut value = serde_json::to_value(Self::default_for(kind))?;
        let obj = value.as_object_mut().expect("struct variant");
        for (key, raw) in overrides {
            if !obj.contains_key(key) {
                return Err(Error::InvalidParams(format!("{kind} has no parameter '{key}'")));
            }
            let parsed = serde_json::from_str(raw).unwrap_or_else(|_| serde_json::Value::String(raw.clone()));
            obj.insert(key.clone(), parsed);
        }
        serde_json::from_value(value).map_err(|e| Error::InvalidParams(e.to_string()))
    }
}
