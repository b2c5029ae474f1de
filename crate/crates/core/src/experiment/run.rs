//! The experiment grid: one manifold per seed, every detector on its latent
//! codes, reconstruction error on the inputs, top-k flags, then each detector
//! alone and in union with RE and with IF.

use std::collections::BTreeMap;
use std::fmt;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{DatasetSpec, ExperimentConfig};
use crate::data::{build_contaminated_sample, generate_pegasus, load_mnist, ContaminatedSample};
use crate::detectors::{combine_flags, re_scores, top_k_flags, DetectorKind, FlagSet};
use crate::error::{Error, Result};
use crate::framework::{framework_estimates, partition_by_representation, regime_diagnostics, FrameworkEstimates, RegimeDiagnostics};
use crate::manifold::{median_error, ManifoldModel, ManifoldSpec};
use crate::metrics::{confusion, f1, precision, recall};

/// Row id of the reconstruction-error detector.
pub const RE_ID: &str = "re";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    Standalone,
    WithRe,
    WithIf,
}

impl Mode {
    pub const ALL: [Mode; 3] = [Mode::Standalone, Mode::WithRe, Mode::WithIf];

    pub fn id(self) -> &'static str {
        match self {
            Mode::Standalone => "standalone",
            Mode::WithRe => "with_re",
            Mode::WithIf => "with_if",
        }
    }
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.id())
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Mode::ALL
            .into_iter()
            .find(|m| m.id() == s)
            .ok_or_else(|| Error::Parse(format!("unknown mode '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub detector: String,
    pub mode: Mode,
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub tp: usize,
    pub fp: usize,
    pub seed: u64,
}

/// Flagged points per class for one `(detector, mode, seed)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassCounts {
    pub detector: String,
    pub mode: Mode,
    pub seed: u64,
    pub counts: BTreeMap<u8, usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifoldDiagnostics {
    pub id: String,
    pub latent_dim: usize,
    pub input_dim: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub explained_variance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub final_train_loss: Option<f64>,
    pub median_re_normal: f64,
    pub median_re_anomaly: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PartitionSizes {
    pub tau_rec: f64,
    pub a_plus: usize,
    pub a_minus: usize,
    pub n_plus: usize,
    pub n_minus: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedDiagnostics {
    pub seed: u64,
    pub manifold: ManifoldDiagnostics,
    pub partition: PartitionSizes,
    pub regime: RegimeDiagnostics,
    /// Estimates with A_on the union of every on-manifold detector's flags.
    pub estimates: FrameworkEstimates,
    /// Anomalies flagged by RE and by no on-manifold detector.
    pub exclusive_off_anomalies: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleSummary {
    pub source: String,
    pub n: usize,
    pub dim: usize,
    pub n_anomalies: usize,
    pub class_sizes: BTreeMap<u8, usize>,
    pub sample_seed: u64,
    pub fingerprint: String,
}

impl SampleSummary {
    pub fn of(sample: &ContaminatedSample) -> Self {
        let mut class_sizes = BTreeMap::new();
        for &c in &sample.class_labels {
            *class_sizes.entry(c).or_insert(0) += 1;
        }
        Self {
            source: sample.source.clone(),
            n: sample.len(),
            dim: sample.dim(),
            n_anomalies: sample.n_anomalies(),
            class_sizes,
            sample_seed: sample.seed,
            fingerprint: sample.fingerprint(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub tool_version: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub config_sha256: Option<String>,
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultTable {
    pub name: String,
    pub k: usize,
    pub provenance: Provenance,
    pub config: ExperimentConfig,
    pub sample: SampleSummary,
    /// Configured detector ids in config order.
    pub detectors: Vec<String>,
    pub rows: Vec<ResultRow>,
    pub class_counts: Vec<ClassCounts>,
    pub diagnostics: Vec<SeedDiagnostics>,
}

/// Seed-averaged values for one `(detector, mode)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeanScores {
    pub recall: f64,
    pub precision: f64,
    pub f1: f64,
    pub runs: usize,
}

fn mean_of<'a>(rows: impl Iterator<Item = &'a ResultRow>) -> Option<MeanScores> {
    let rows: Vec<&ResultRow> = rows.collect();
    if rows.is_empty() {
        return None;
    }
    let n = rows.len() as f64;
    Some(MeanScores {
        recall: rows.iter().map(|r| r.recall).sum::<f64>() / n,
        precision: rows.iter().map(|r| r.precision).sum::<f64>() / n,
        f1: rows.iter().map(|r| r.f1).sum::<f64>() / n,
        runs: rows.len(),
    })
}

impl ResultTable {
    pub fn seeds(&self) -> &[u64] {
        &self.provenance.seeds
    }

    pub fn row(&self, detector: &str, mode: Mode, seed: u64) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.detector == detector && r.mode == mode && r.seed == seed)
    }

    /// Mean over seeds for one `(detector, mode)`.
    pub fn mean(&self, detector: &str, mode: Mode) -> Option<MeanScores> {
        mean_of(self.rows.iter().filter(|r| r.detector == detector && r.mode == mode))
    }

    /// Mean over on-manifold detectors (RE excluded) of their seed means.
    pub fn on_manifold_mean(&self, mode: Mode) -> Option<MeanScores> {
        let per_detector: Vec<MeanScores> = self.detectors.iter().filter_map(|d| self.mean(d, mode)).collect();
        if per_detector.is_empty() {
            return None;
        }
        let n = per_detector.len() as f64;
        Some(MeanScores {
            recall: per_detector.iter().map(|m| m.recall).sum::<f64>() / n,
            precision: per_detector.iter().map(|m| m.precision).sum::<f64>() / n,
            f1: per_detector.iter().map(|m| m.f1).sum::<f64>() / n,
            runs: per_detector.len(),
        })
    }

    /// Seed-averaged flagged count of `class` for one `(detector, mode)`.
    pub fn mean_class_count(&self, detector: &str, mode: Mode, class: u8) -> Option<f64> {
        let v: Vec<usize> = self
            .class_counts
            .iter()
            .filter(|c| c.detector == detector && c.mode == mode)
            .map(|c| c.counts.get(&class).copied().unwrap_or(0))
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<usize>() as f64 / v.len() as f64)
    }

    /// `(detector, mode)` pairs the table must hold for every seed.
    pub fn expected_pairs(&self) -> Vec<(String, Mode)> {
        expected_pairs(&self.config)
    }
}

pub fn expected_pairs(config: &ExperimentConfig) -> Vec<(String, Mode)> {
    let mut pairs = Vec::new();
    for d in &config.detectors {
        let id = d.kind().id().to_string();
        pairs.push((id.clone(), Mode::Standalone));
        if config.combination.with_re {
            pairs.push((id.clone(), Mode::WithRe));
        }
        if config.combination.with_if && d.kind() != DetectorKind::Iforest {
            pairs.push((id, Mode::WithIf));
        }
    }
    pairs.push((RE_ID.to_string(), Mode::Standalone));
    pairs
}

/// The fitted manifold and latent codes of one seed.
#[derive(Debug, Clone)]
pub struct SeedArtifacts {
    pub seed: u64,
    pub model: ManifoldModel,
    pub latent: Array2<f64>,
}

pub fn build_sample(dataset: &DatasetSpec) -> Result<ContaminatedSample> {
    match dataset {
        DatasetSpec::Mnist(m) => {
            let raw = load_mnist(&m.data_dir, m.split)?;
            let specs: Vec<(u8, usize)> = m.anomalies.iter().map(|a| (a.class, a.count)).collect();
            build_contaminated_sample(&raw, m.bulk_class, &specs, m.sample_seed)
        }
        DatasetSpec::Pegasus(p) => generate_pegasus(&p.config, p.sample_seed),
    }
}

/// Manifold spec with the repeat seed applied to stochastic training.
pub fn seeded_manifold(spec: &ManifoldSpec, seed: u64) -> ManifoldSpec {
    match spec {
        ManifoldSpec::Ae { config } => {
            let mut config = config.clone();
            config.seed = seed;
            ManifoldSpec::Ae { config }
        }
        other => other.clone(),
    }
}

pub fn run_experiment(config: &ExperimentConfig, config_sha256: Option<String>) -> Result<ResultTable> {
    run_experiment_detailed(config, config_sha256).map(|(t, _)| t)
}

pub fn run_experiment_detailed(
    config: &ExperimentConfig,
    config_sha256: Option<String>,
) -> Result<(ResultTable, Vec<SeedArtifacts>)> {
    config.validate()?;
    let sample = build_sample(&config.dataset)?;
    log::info!("sample {}: {} rows, {} anomalies", sample.source, sample.len(), sample.n_anomalies());
    run_on_sample(config, &sample, config_sha256)
}

/// Run the grid on an already built sample.
pub fn run_on_sample(
    config: &ExperimentConfig,
    sample: &ContaminatedSample,
    config_sha256: Option<String>,
) -> Result<(ResultTable, Vec<SeedArtifacts>)> {
    config.validate()?;
    let mut table = ResultTable {
        name: config.name.clone(),
        k: config.k,
        provenance: Provenance {
            tool_version: crate::VERSION.to_string(),
            config_sha256,
            seeds: config.seeds.clone(),
        },
        config: config.clone(),
        sample: SampleSummary::of(sample),
        detectors: config.detectors.iter().map(|d| d.kind().id().to_string()).collect(),
        rows: Vec::new(),
        class_counts: Vec::new(),
        diagnostics: Vec::new(),
    };
    let mut artifacts = Vec::new();
    for &seed in &config.seeds {
        let out = run_seed(config, sample, seed)?;
        table.rows.extend(out.rows);
        table.class_counts.extend(out.class_counts);
        table.diagnostics.push(out.diagnostics);
        artifacts.push(out.artifacts);
    }
    Ok((table, artifacts))
}

struct SeedOutput {
    rows: Vec<ResultRow>,
    class_counts: Vec<ClassCounts>,
    diagnostics: SeedDiagnostics,
    artifacts: SeedArtifacts,
}

fn run_seed(config: &ExperimentConfig, sample: &ContaminatedSample, seed: u64) -> Result<SeedOutput> {
    let x = sample.features.view();
    let model = seeded_manifold(&config.manifold, seed).fit(x)?;
    log::info!("seed {seed}: fitted {}", model.id());
    let latent = model.encode(x)?;
    let re = re_scores(&model, x)?;

    let manifold = manifold_diagnostics(&model, sample, &re.scores);
    if let Some(gate) = config.gate {
        if !(manifold.median_re_normal <= gate.max_median_re) {
            return Err(Error::DegenerateData(format!(
                "{} median reconstruction error {} over normal points exceeds the gate {}",
                model.id(),
                manifold.median_re_normal,
                gate.max_median_re
            )));
        }
    }

    let scored = config
        .detectors
        .par_iter()
        .map(|spec| {
            let spec = spec.clone().with_seed(seed);
            log::info!("seed {seed}: scoring {}", spec.kind());
            spec.score(latent.view())
        })
        .collect::<Result<Vec<_>>>()?;
    let re_flags = top_k_flags(&re, config.k)?;
    let flags: Vec<(DetectorKind, FlagSet)> = config
        .detectors
        .iter()
        .zip(&scored)
        .map(|(spec, s)| Ok((spec.kind(), top_k_flags(s, config.k)?)))
        .collect::<Result<_>>()?;
    let if_flags = flags.iter().find(|(k, _)| *k == DetectorKind::Iforest).map(|(_, f)| f);

    let mut rows = Vec::new();
    let mut class_counts = Vec::new();
    let mut push = |detector: &str, mode: Mode, f: &FlagSet| -> Result<()> {
        let c = confusion(f, sample)?;
        rows.push(ResultRow {
            detector: detector.to_string(),
            mode,
            recall: recall(&c),
            precision: precision(&c),
            f1: f1(&c),
            tp: c.tp,
            fp: c.fp,
            seed,
        });
        let mut counts = BTreeMap::new();
        for &i in f.indices() {
            *counts.entry(sample.class_labels[i]).or_insert(0) += 1;
        }
        class_counts.push(ClassCounts { detector: detector.to_string(), mode, seed, counts });
        Ok(())
    };
    for (kind, f) in &flags {
        push(kind.id(), Mode::Standalone, f)?;
        if config.combination.with_re {
            push(kind.id(), Mode::WithRe, &combine_flags(&[f, &re_flags])?)?;
        }
        if config.combination.with_if && *kind != DetectorKind::Iforest {
            let if_flags = if_flags.ok_or_else(|| Error::InvalidConfig("with_if needs iforest".into()))?;
            push(kind.id(), Mode::WithIf, &combine_flags(&[f, if_flags])?)?;
        }
    }
    push(RE_ID, Mode::Standalone, &re_flags)?;

    let on_sets: Vec<&FlagSet> = flags.iter().map(|(_, f)| f).collect();
    let on_union = combine_flags(&on_sets)?;
    let partition = partition_by_representation(&re, sample, config.framework.tau)?;
    let regime = regime_diagnostics(&partition, model.latent_dim(), model.input_dim(), config.framework.regime_cutoff);
    let estimates = framework_estimates(&partition, &on_union, &re_flags, sample)?;
    let exclusive_off_anomalies = re_flags
        .indices()
        .iter()
        .filter(|&&i| sample.is_anomaly()[i] && !on_union.contains(i))
        .count();

    Ok(SeedOutput {
        rows,
        class_counts,
        diagnostics: SeedDiagnostics {
            seed,
            manifold,
            partition: PartitionSizes {
                tau_rec: partition.tau_rec,
                a_plus: partition.a_plus.len(),
                a_minus: partition.a_minus.len(),
                n_plus: partition.n_plus.len(),
                n_minus: partition.n_minus.len(),
            },
            regime,
            estimates,
            exclusive_off_anomalies,
        },
        artifacts: SeedArtifacts { seed, model, latent },
    })
}

fn manifold_diagnostics(model: &ManifoldModel, sample: &ContaminatedSample, re: &[f64]) -> ManifoldDiagnostics {
    let errors = ndarray::Array1::from(re.to_vec());
    let (explained_variance, final_train_loss) = match model {
        ManifoldModel::Pca(m) => (Some(m.cumulative_explained_variance()), None),
        ManifoldModel::Ae(m) => (None, Some(m.final_train_loss)),
    };
    ManifoldDiagnostics {
        id: model.id(),
        latent_dim: model.latent_dim(),
        input_dim: model.input_dim(),
        explained_variance,
        final_train_loss,
        median_re_normal: median_error(&errors, &sample.normal_indices()),
        median_re_anomaly: median_error(&errors, &sample.anomaly_indices()),
    }
}
