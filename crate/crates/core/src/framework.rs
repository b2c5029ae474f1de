//! Representation-based partition of a sample and the quantities derived
//! from it.
//!
//! A point is poorly represented ("-") when its reconstruction error exceeds
//! a threshold tau, and well represented ("+") otherwise. Crossed with the
//! ground truth this gives four disjoint sets A+, A-, N+, N-. From these and
//! the measured on-manifold flags we estimate what on-manifold, off-manifold
//! and combined detection can achieve, alongside the measured values.

use std::collections::BTreeSet;
use std::io::Write;

use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::ContaminatedSample;
use crate::detectors::{AnomalyScores, FlagSet};
use crate::error::{Error, Result};
use crate::metrics::{confusion_from_mask, Scores};
use crate::rng;

pub const DEFAULT_REGIME_CUTOFF: f64 = 0.2;
pub const DEFAULT_NORMAL_QUANTILE: f64 = 0.95;
pub const HISTOGRAM_BIN_WIDTH: f64 = 0.25;

/// How the representation threshold is chosen.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TauRule {
    /// Quantile of the error over ground-truth-normal points.
    NormalQuantile(f64),
    Absolute(f64),
}

impl Default for TauRule {
    fn default() -> Self {
        TauRule::NormalQuantile(DEFAULT_NORMAL_QUANTILE)
    }
}

/// Linear-interpolation quantile of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> f64 {
    let mut v = values.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    v[lo] + (pos - lo as f64) * (v[hi] - v[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionReport {
    pub a_plus: Vec<usize>,
    pub a_minus: Vec<usize>,
    pub n_plus: Vec<usize>,
    pub n_minus: Vec<usize>,
    pub tau_rec: f64,
    pub tau_rule: TauRule,
    pub manifold_id: String,
}

impl PartitionReport {
    pub fn n(&self) -> usize {
        self.a_plus.len() + self.a_minus.len() + self.n_plus.len() + self.n_minus.len()
    }

    pub fn anomalies(&self) -> usize {
        self.a_plus.len() + self.a_minus.len()
    }

    /// A- and N- together: everything above the threshold.
    pub fn poorly_represented(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.a_minus.iter().chain(&self.n_minus).copied().collect();
        v.sort_unstable();
        v
    }
}

pub fn partition_by_representation(
    re: &AnomalyScores,
    truth: &ContaminatedSample,
    rule: TauRule,
) -> Result<PartitionReport> {
    if re.len() != truth.len() {
        return Err(Error::CoverageMismatch { expected: truth.len(), found: re.len() });
    }
    let tau_rec = match rule {
        TauRule::Absolute(t) => t,
        TauRule::NormalQuantile(q) => {
            if !(0.0..=1.0).contains(&q) {
                return Err(Error::InvalidParams(format!("quantile {q} must lie in [0, 1]")));
            }
            let normal: Vec<f64> = truth.normal_indices().iter().map(|&i| re.scores[i]).collect();
            if normal.is_empty() {
                return Err(Error::DegenerateData("no normal points to set the threshold".into()));
            }
            quantile(&normal, q)
        }
    };
    let mut report = PartitionReport {
        a_plus: Vec::new(),
        a_minus: Vec::new(),
        n_plus: Vec::new(),
        n_minus: Vec::new(),
        tau_rec,
        tau_rule: rule,
        manifold_id: re.params.get("manifold").cloned().unwrap_or_else(|| re.detector_id.clone()),
    };
    for (i, (&e, &anomalous)) in re.scores.iter().zip(truth.is_anomaly()).enumerate() {
        let poor = e > tau_rec;
        match (anomalous, poor) {
            (true, false) => report.a_plus.push(i),
            (true, true) => report.a_minus.push(i),
            (false, false) => report.n_plus.push(i),
            (false, true) => report.n_minus.push(i),
        }
    }
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Regime {
    #[serde(rename = "M≲D")]
    Mild,
    #[serde(rename = "M≪D")]
    Severe,
}

impl Regime {
    pub fn label(self) -> &'static str {
        match self {
            Regime::Mild => "M≲D",
            Regime::Severe => "M≪D",
        }
    }
}

mod maybe_infinite {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(*v)
        }
    }

    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) if t == "inf" => Ok(f64::INFINITY),
            Repr::Text(t) => Err(serde::de::Error::custom(format!("expected number or \"inf\", got {t}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegimeDiagnostics {
    pub latent_dim: usize,
    pub input_dim: usize,
    /// |A-| / |A+|, infinite when A+ is empty.
    #[serde(with = "maybe_infinite")]
    pub ratio_a: f64,
    #[serde(with = "maybe_infinite")]
    pub ratio_n: f64,
    pub cutoff: f64,
    pub regime: Regime,
}

fn set_ratio(num: usize, den: usize) -> f64 {
    match (num, den) {
        (0, 0) => 0.0,
        (_, 0) => f64::INFINITY,
        _ => num as f64 / den as f64,
    }
}

pub fn regime_diagnostics(p: &PartitionReport, latent_dim: usize, input_dim: usize, cutoff: f64) -> RegimeDiagnostics {
    let severe = (latent_dim as f64) / (input_dim as f64) < cutoff;
    RegimeDiagnostics {
        latent_dim,
        input_dim,
        ratio_a: set_ratio(p.a_minus.len(), p.a_plus.len()),
        ratio_n: set_ratio(p.n_minus.len(), p.n_plus.len()),
        cutoff,
        regime: if severe { Regime::Severe } else { Regime::Mild },
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Fraction {
    pub value: f64,
    pub numerator: usize,
    pub denominator: usize,
}

impl Fraction {
    fn of(numerator: usize, denominator: usize) -> Self {
        let value = if denominator == 0 { 0.0 } else { numerator as f64 / denominator as f64 };
        Self { value, numerator, denominator }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameworkEstimates {
    pub recall_on_est: Fraction,
    pub precision_on_est: Fraction,
    pub recall_off_est: Fraction,
    pub precision_off_est: Fraction,
    pub recall_f_est: Fraction,
    pub precision_f_est: Fraction,
    pub measured_on: Scores,
    pub measured_off: Scores,
    pub measured_f: Scores,
    /// |A_on ∩ A_off| over the flag sets.
    pub overlap: usize,
    /// |A_on ∩ A_off ∩ A|.
    pub overlap_anomalies: usize,
    pub manifold_id: String,
}

/// Estimators built from the partition, with on-manifold detectability
/// proxied by the measured on-manifold flags.
pub fn framework_estimates(
    p: &PartitionReport,
    on_flags: &FlagSet,
    off_flags: &FlagSet,
    truth: &ContaminatedSample,
) -> Result<FrameworkEstimates> {
    let n = truth.len();
    for (found, what) in [(p.n(), "partition"), (on_flags.n, "on flags"), (off_flags.n, "off flags")] {
        if found != n {
            log::debug!("{what} covers {found} rows, sample has {n}");
            return Err(Error::CoverageMismatch { expected: n, found });
        }
    }
    let mask = truth.is_anomaly();
    let a_total = p.anomalies();

    let detected: BTreeSet<usize> = on_flags.indices().iter().copied().filter(|&i| mask[i]).collect();
    let normal_hits: BTreeSet<usize> = on_flags.indices().iter().copied().filter(|&i| !mask[i]).collect();
    let combined_a: BTreeSet<usize> = detected.iter().chain(&p.a_minus).copied().collect();
    let combined_n: BTreeSet<usize> = normal_hits.iter().chain(&p.n_minus).copied().collect();

    let union: Vec<usize> = on_flags.indices().iter().chain(off_flags.indices()).copied().collect();
    let measured = |flags: &[usize]| -> Result<Scores> { Ok(Scores::from(&confusion_from_mask(flags, mask)?)) };
    let overlap: Vec<usize> = on_flags.indices().iter().copied().filter(|&i| off_flags.contains(i)).collect();

    Ok(FrameworkEstimates {
        recall_on_est: Fraction::of(detected.len(), a_total),
        precision_on_est: Fraction::of(detected.len(), detected.len() + normal_hits.len()),
        recall_off_est: Fraction::of(p.a_minus.len(), a_total),
        precision_off_est: Fraction::of(p.a_minus.len(), p.a_minus.len() + p.n_minus.len()),
        recall_f_est: Fraction::of(combined_a.len(), a_total),
        precision_f_est: Fraction::of(combined_a.len(), combined_a.len() + combined_n.len()),
        measured_on: measured(on_flags.indices())?,
        measured_off: measured(off_flags.indices())?,
        measured_f: measured(&union)?,
        overlap: overlap.len(),
        overlap_anomalies: overlap.iter().filter(|&&i| mask[i]).count(),
        manifold_id: p.manifold_id.clone(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistogramBin {
    pub lower: f64,
    pub upper: f64,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CodReport {
    pub dim: usize,
    pub n_pairs: usize,
    pub mean_sq_dist: f64,
    pub std_sq_dist: f64,
    pub standard_error: f64,
    /// `D / 6` and `sqrt(7D/180)`: the uniform-cube moments.
    pub expected_mean: f64,
    pub expected_std: f64,
    pub gaussian_peak_radius: f64,
    /// `sqrt(D - 1)`.
    pub expected_peak_radius: f64,
    pub bin_width: f64,
    pub seed: u64,
    #[serde(skip)]
    pub histogram: Vec<HistogramBin>,
}

impl CodReport {
    /// `lower,upper,count`
    pub fn write_histogram_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["lower", "upper", "count"])?;
        for b in &self.histogram {
            w.write_record([b.lower.to_string(), b.upper.to_string(), b.count.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }
}

const BLOCK: usize = 4096;

/// Draw `count` values, `BLOCK` per independent stream, in stream order.
fn sample_blocks<F>(seed: u64, stream_base: u64, count: usize, draw: F) -> Vec<f64>
where
    F: Fn(&mut rng::Rng) -> f64 + Sync,
{
    let blocks = count.div_ceil(BLOCK);
    (0..blocks)
        .into_par_iter()
        .map(|b| {
            let mut r = rng::stream(seed, stream_base + b as u64);
            let len = BLOCK.min(count - b * BLOCK);
            (0..len).map(|_| draw(&mut r)).collect::<Vec<f64>>()
        })
        .collect::<Vec<_>>()
        .concat()
}

/// Squared distance between uniform pairs in `[0,1]^D`, and the radial mode
/// of a standard `D`-dimensional Gaussian.
pub fn curse_of_dim_demo(dim: usize, n_pairs: usize, seed: u64) -> Result<CodReport> {
    if dim == 0 || n_pairs == 0 {
        return Err(Error::InvalidParams("dimension and pair count must be at least 1".into()));
    }
    let sq = sample_blocks(seed, 0, n_pairs, |r| {
        (0..dim)
            .map(|_| {
                let d = r.random::<f64>() - r.random::<f64>();
                d * d
            })
            .sum()
    });
    let n = sq.len() as f64;
    let mean = sq.iter().sum::<f64>() / n;
    let var = if sq.len() > 1 { sq.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    let std = var.sqrt();

    let radii = sample_blocks(seed, 1 << 32, n_pairs, |r| {
        (0..dim).map(|_| StandardNormal.sample(r)).map(|v: f64| v * v).sum::<f64>().sqrt()
    });
    let max_r = radii.iter().cloned().fold(0.0, f64::max);
    let bins = (max_r / HISTOGRAM_BIN_WIDTH).floor() as usize + 1;
    let mut counts = vec![0usize; bins];
    for r in &radii {
        counts[(r / HISTOGRAM_BIN_WIDTH).floor() as usize] += 1;
    }
    let peak = (0..bins).max_by(|&a, &b| counts[a].cmp(&counts[b]).then(b.cmp(&a))).unwrap();
    let histogram = counts
        .iter()
        .enumerate()
        .map(|(i, &count)| HistogramBin {
            lower: i as f64 * HISTOGRAM_BIN_WIDTH,
            upper: (i + 1) as f64 * HISTOGRAM_BIN_WIDTH,
            count,
        })
        .collect();

    let d = dim as f64;
    Ok(CodReport {
        dim,
        n_pairs,
        mean_sq_dist: mean,
        std_sq_dist: std,
        standard_error: std / n.sqrt(),
        expected_mean: d / 6.0,
        expected_std: (7.0 * d / 180.0).sqrt(),
        gaussian_peak_radius: (peak as f64 + 0.5) * HISTOGRAM_BIN_WIDTH,
        expected_peak_radius: (d - 1.0).sqrt(),
        bin_width: HISTOGRAM_BIN_WIDTH,
        seed,
        histogram,
    })
}
