//! The horse example: a 2-D PCA of height, weight and wings, LOF on the
//! codes for on-manifold flags and reconstruction error for off-manifold
//! flags, each with a budget equal to the number of true anomalies.

use serde::{Deserialize, Serialize};

use crate::data::{generate_pegasus, special_index, PegasusConfig};
use crate::detectors::{lof_scores, re_scores, top_k_flags, LofParams};
use crate::error::{Error, Result};
use crate::manifold::{ManifoldSpec, PcaTarget};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Membership {
    pub name: String,
    pub index: usize,
    pub is_anomaly: bool,
    pub on_manifold: bool,
    pub off_manifold: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PegasusDemoResult {
    pub seed: u64,
    pub n: usize,
    /// Flag budget, the number of true anomalies.
    pub k: usize,
    pub explained_variance: f64,
    pub points: Vec<Membership>,
}

/// Expected `(on, off)` membership of the default special points.
pub fn expected_membership(name: &str) -> Option<(bool, bool)> {
    match name {
        "Eohippus" | "Sampson" => Some((true, false)),
        "Pegasus_m" => Some((false, true)),
        "Pegasus_h" => Some((true, true)),
        _ => None,
    }
}

impl PegasusDemoResult {
    pub fn point(&self, name: &str) -> Option<&Membership> {
        self.points.iter().find(|p| p.name == name)
    }

    /// Whether every special point with a known expectation lands where
    /// the framework puts it.
    pub fn matches_expected(&self) -> bool {
        self.points.iter().all(|p| match expected_membership(&p.name) {
            Some(e) => e == (p.on_manifold, p.off_manifold),
            None => true,
        })
    }
}

pub fn run_pegasus_demo(config: &PegasusConfig, lof: &LofParams, seed: u64) -> Result<PegasusDemoResult> {
    let sample = generate_pegasus(config, seed)?;
    let x = sample.features.view();
    let model = ManifoldSpec::Pca { target: PcaTarget::Latent(2) }.fit(x)?;
    let z = model.encode(x)?;
    let k = sample.n_anomalies().max(1);
    let on = top_k_flags(&lof_scores(z.view(), lof)?, k)?;
    let off = top_k_flags(&re_scores(&model, x)?, k)?;
    let explained_variance = match &model {
        crate::manifold::ManifoldModel::Pca(m) => m.cumulative_explained_variance(),
        _ => unreachable!("PCA spec"),
    };
    let points = config
        .special_points
        .iter()
        .map(|p| {
            let index = special_index(config, &sample, &p.name)
                .ok_or_else(|| Error::DegenerateData(format!("special point {} missing", p.name)))?;
            Ok(Membership {
                name: p.name.clone(),
                index,
                is_anomaly: sample.is_anomaly()[index],
                on_manifold: on.contains(index),
                off_manifold: off.contains(index),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(PegasusDemoResult { seed, n: sample.len(), k, explained_variance, points })
}
