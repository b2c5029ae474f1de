//! Experiment configuration files.
//!
//! A config is a TOML document with `schema = 1`. Relative paths are resolved
//! against the directory holding the config file; the MNIST directory can
//! be overridden with `PEGASUS_DATA_DIR`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::data::{MnistSplit, PegasusConfig};
use crate::detectors::{DetectorKind, DetectorSpec};
use crate::error::{Error, Result};
use crate::framework::{TauRule, DEFAULT_REGIME_CUTOFF};
use crate::manifold::ManifoldSpec;

pub const SCHEMA_VERSION: u32 = 1;
pub const DATA_DIR_ENV: &str = "PEGASUS_DATA_DIR";
pub const DEFAULT_FLAG_BUDGET: usize = 240;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub schema: u32,
    pub name: String,
    /// Flag budget per detector.
    #[serde(default = "default_k")]
    pub k: usize,
    /// One run per seed; the seed drives manifold training and seeded
    /// detectors. The sample itself is fixed by `dataset.sample_seed`.
    pub seeds: Vec<u64>,
    pub dataset: DatasetSpec,
    pub manifold: ManifoldSpec,
    #[serde(default = "default_detectors")]
    pub detectors: Vec<DetectorSpec>,
    #[serde(default)]
    pub combination: CombinationPlan,
    #[serde(default)]
    pub framework: FrameworkSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gate: Option<ManifoldGate>,
    #[serde(default)]
    pub output: OutputSpec,
}

fn default_k() -> usize {
    DEFAULT_FLAG_BUDGET
}

fn default_detectors() -> Vec<DetectorSpec> {
    [DetectorKind::Lof, DetectorKind::Iforest, DetectorKind::Ee, DetectorKind::Ocsvm]
        .into_iter()
        .map(DetectorSpec::default_for)
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DatasetSpec {
    Mnist(MnistDataset),
    Pegasus(PegasusDataset),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MnistDataset {
    pub data_dir: PathBuf,
    #[serde(default)]
    pub split: MnistSplit,
    #[serde(default = "default_bulk")]
    pub bulk_class: u8,
    #[serde(default = "default_anomalies")]
    pub anomalies: Vec<AnomalyClass>,
    pub sample_seed: u64,
}

fn default_bulk() -> u8 {
    1
}

fn default_anomalies() -> Vec<AnomalyClass> {
    vec![AnomalyClass { class: 7, count: 120 }, AnomalyClass { class: 8, count: 120 }]
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AnomalyClass {
    pub class: u8,
    pub count: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PegasusDataset {
    #[serde(default)]
    pub config: PegasusConfig,
    pub sample_seed: u64,
}

/// Which rows the table carries besides each detector on its own.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CombinationPlan {
    pub with_re: bool,
    pub with_if: bool,
}

impl Default for CombinationPlan {
    fn default() -> Self {
        Self { with_re: true, with_if: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FrameworkSettings {
    pub tau: TauRule,
    pub regime_cutoff: f64,
}

impl Default for FrameworkSettings {
    fn default() -> Self {
        Self { tau: TauRule::default(), regime_cutoff: DEFAULT_REGIME_CUTOFF }
    }
}

/// Refuse manifolds whose median reconstruction error over normal points
/// exceeds `max_median_re`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifoldGate {
    pub max_median_re: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ReportFormat {
    Csv,
    Json,
    Markdown,
}

impl ReportFormat {
    pub fn extension(self) -> &'static str {
        match self {
            ReportFormat::Csv => "csv",
            ReportFormat::Json => "json",
            ReportFormat::Markdown => "md",
        }
    }
}

impl std::str::FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "csv" => Ok(Self::Csv),
            "json" => Ok(Self::Json),
            "markdown" | "md" => Ok(Self::Markdown),
            other => Err(Error::InvalidConfig(format!("unknown report format '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OutputSpec {
    pub dir: PathBuf,
    pub formats: Vec<ReportFormat>,
    /// Also write `embeddings_seed<s>.csv` per seed.
    pub embeddings: bool,
}

impl Default for OutputSpec {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            formats: vec![ReportFormat::Csv, ReportFormat::Json, ReportFormat::Markdown],
            embeddings: false,
        }
    }
}

/// A parsed config with the bytes it came from.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    /// Paths resolved and overrides applied.
    pub config: ExperimentConfig,
    /// As written in the file; reports echo this so they do not depend on
    /// the working directory.
    pub as_written: ExperimentConfig,
    pub sha256: String,
    pub path: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Parse `path`, resolve relative paths against its directory and apply
    /// the data directory override.
    pub fn load(path: &Path) -> Result<LoadedConfig> {
        let text = fs::read_to_string(path)?;
        let mut config = Self::parse(&text)?;
        let as_written = config.clone();
        let base = path.parent().unwrap_or(Path::new("."));
        config.resolve_paths(base, std::env::var_os(DATA_DIR_ENV).map(PathBuf::from));
        Ok(LoadedConfig { config, as_written, sha256: sha256_hex(text.as_bytes()), path: Some(path.to_path_buf()) })
    }

    pub fn resolve_paths(&mut self, base: &Path, data_dir_override: Option<PathBuf>) {
        if let DatasetSpec::Mnist(m) = &mut self.dataset {
            if let Some(dir) = data_dir_override {
                m.data_dir = dir;
            } else if m.data_dir.is_relative() {
                m.data_dir = base.join(&m.data_dir);
            }
        }
        if self.output.dir.is_relative() {
            self.output.dir = base.join(&self.output.dir);
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.schema != SCHEMA_VERSION {
            return bad(format!("unsupported schema {} (expected {SCHEMA_VERSION})", self.schema));
        }
        if self.k == 0 {
            return bad("k must be at least 1".into());
        }
        if self.seeds.is_empty() {
            return bad("at least one seed is required".into());
        }
        if self.detectors.is_empty() {
            return bad("at least one detector is required".into());
        }
        let mut kinds: Vec<DetectorKind> = self.detectors.iter().map(|d| d.kind()).collect();
        kinds.sort();
        if kinds.windows(2).any(|w| w[0] == w[1]) {
            return bad("each detector may be configured once".into());
        }
        if self.combination.with_if && !kinds.contains(&DetectorKind::Iforest) {
            return bad("combination with_if needs an iforest detector".into());
        }
        if self.output.formats.is_empty() {
            return bad("at least one output format is required".into());
        }
        if let DatasetSpec::Mnist(m) = &self.dataset {
            if m.anomalies.is_empty() {
                return bad("at least one anomaly class is required".into());
            }
        }
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::InvalidConfig(e.to_string()))
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    crate::data::hex_digest(&Sha256::digest(bytes))
}
