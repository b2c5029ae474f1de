use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use pegasus::data::{build_contaminated_sample, generate_pegasus, load_mnist, ContaminatedSample, MnistSplit, PegasusConfig};
use pegasus::detectors::{combine_flags, re_scores, top_k_flags, AnomalyScores, DetectorKind, DetectorSpec, FlagSet, LofParams};
use pegasus::experiment::config::{ExperimentConfig, ReportFormat, DATA_DIR_ENV};
use pegasus::experiment::report::{emit_report, write_embeddings, write_provenance};
use pegasus::experiment::run::{run_experiment_detailed, Provenance, ResultTable};
use pegasus::experiment::run_pegasus_demo;
use pegasus::framework::{curse_of_dim_demo, framework_estimates, partition_by_representation, regime_diagnostics, TauRule, DEFAULT_REGIME_CUTOFF};
use pegasus::manifold::io::{load_model, save_model};
use pegasus::manifold::{AeConfig, ManifoldSpec, PcaTarget};
use pegasus::metrics::{confusion, Scores};
use pegasus::{Error, Result, VERSION};

#[derive(Parser)]
#[command(name = "pegasus", version, about = "On- and off-manifold anomaly detection")]
struct Cli {
    /// Worker threads; 1 gives bit-reproducible runs.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Log progress to stderr.
    #[arg(short, long, global = true)]
    verbose: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config and write its reports.
    Run {
        #[arg(long)]
        config: PathBuf,
        /// Output directory, overriding the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Also write per-seed embeddings.
        #[arg(long)]
        embeddings: bool,
    },
    /// Horse example: on/off-manifold membership of the special points.
    PegasusDemo {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 20)]
        k_neighbors: usize,
        /// TOML file with a horse dataset config.
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Squared distances of uniform pairs and the Gaussian radial mode.
    CodDemo(CodArgs),
    /// Write a contaminated sample as CSV.
    Sample {
        #[command(flatten)]
        source: SampleSource,
        #[arg(long)]
        out: PathBuf,
    },
    /// Fit a PCA or autoencoder manifold to a sample CSV.
    FitManifold {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long, value_parser = ["pca", "ae"])]
        method: String,
        /// Latent dimension M.
        #[arg(long)]
        latent: Option<usize>,
        /// PCA only: smallest M reaching this explained variance.
        #[arg(long)]
        variance: Option<f64>,
        #[arg(long)]
        epochs: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Score a sample with one detector and flag the top k.
    Detect {
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        model: PathBuf,
        /// lof, iforest, ee, ocsvm, knn or re.
        #[arg(long)]
        method: String,
        #[arg(long, default_value_t = 240)]
        k: usize,
        /// Detector parameter override, `key=value`.
        #[arg(long = "param", value_parser = parse_key_value)]
        params: Vec<(String, String)>,
        #[arg(long)]
        scores_out: Option<PathBuf>,
        #[arg(long)]
        flags_out: PathBuf,
    },
    /// Union of flag files.
    Combine {
        #[arg(long, num_args = 1.., required = true)]
        inputs: Vec<PathBuf>,
        /// Sample the flags refer to; metrics are printed against its labels.
        #[arg(long)]
        sample: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render a JSON result table.
    Report {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        format: ReportFormat,
        #[arg(long)]
        out: PathBuf,
    },
    /// Representation partition, estimators and the dimensionality demo.
    Framework {
        #[command(subcommand)]
        command: FrameworkCommand,
    },
}

#[derive(Subcommand)]
enum FrameworkCommand {
    /// Split anomalies and normals by reconstruction error.
    Partition {
        #[command(flatten)]
        input: PartitionArgs,
    },
    /// Recall/precision estimates from the partition and measured flags.
    Estimates {
        #[command(flatten)]
        input: PartitionArgs,
        /// On-manifold flag file.
        #[arg(long)]
        on: PathBuf,
        /// Off-manifold flag file.
        #[arg(long)]
        off: PathBuf,
    },
    CodDemo(CodArgs),
}

#[derive(Args)]
struct PartitionArgs {
    #[arg(long)]
    sample: PathBuf,
    #[arg(long)]
    model: PathBuf,
    /// Quantile of normal-point error used as threshold.
    #[arg(long, conflicts_with = "tau")]
    quantile: Option<f64>,
    /// Absolute threshold.
    #[arg(long)]
    tau: Option<f64>,
    #[arg(long, default_value_t = DEFAULT_REGIME_CUTOFF)]
    regime_cutoff: f64,
}

#[derive(Args)]
struct CodArgs {
    #[arg(long)]
    dim: usize,
    #[arg(long, default_value_t = 100_000)]
    pairs: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Write the radial histogram here as CSV.
    #[arg(long)]
    histogram: Option<PathBuf>,
}

#[derive(Args)]
struct SampleSource {
    /// Generate the horse dataset instead of reading MNIST.
    #[arg(long)]
    pegasus: bool,
    #[arg(long, env = DATA_DIR_ENV, default_value = "data/mnist")]
    data_dir: PathBuf,
    #[arg(long, default_value = "test")]
    split: MnistSplit,
    #[arg(long, default_value_t = 1)]
    bulk_class: u8,
    /// Anomaly class and count, `class:count`; repeatable.
    #[arg(long = "anomaly", value_parser = parse_anomaly, default_values = ["7:120", "8:120"])]
    anomalies: Vec<(u8, usize)>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn parse_key_value(s: &str) -> std::result::Result<(String, String), String> {
    s.split_once('=')
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .ok_or_else(|| format!("expected key=value, got '{s}'"))
}

fn parse_anomaly(s: &str) -> std::result::Result<(u8, usize), String> {
    let (c, n) = s.split_once(':').ok_or_else(|| format!("expected class:count, got '{s}'"))?;
    Ok((c.parse().map_err(|_| format!("bad class '{c}'"))?, n.parse().map_err(|_| format!("bad count '{n}'"))?))
}

fn read_sample(path: &Path) -> Result<ContaminatedSample> {
    ContaminatedSample::read_csv(fs::File::open(path)?, 0, &path.display().to_string())
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let text = serde_json::to_string_pretty(value)? + "\n";
    match out {
        Some(path) => fs::write(path, text)?,
        None => std::io::stdout().write_all(text.as_bytes())?,
    }
    Ok(())
}

fn provenance(seeds: Vec<u64>) -> Provenance {
    Provenance { tool_version: VERSION.to_string(), config_sha256: None, seeds }
}

fn cod(args: &CodArgs) -> Result<()> {
    let report = curse_of_dim_demo(args.dim, args.pairs, args.seed)?;
    if let Some(path) = &args.histogram {
        report.write_histogram_csv(fs::File::create(path)?)?;
        write_provenance(path, &provenance(vec![args.seed]), None)?;
    }
    write_json(&report, None)
}

fn partition_inputs(a: &PartitionArgs) -> Result<(ContaminatedSample, AnomalyScores, pegasus::framework::PartitionReport, pegasus::manifold::ManifoldModel)> {
    let sample = read_sample(&a.sample)?;
    let model = load_model(&a.model)?;
    let re = re_scores(&model, sample.features.view())?;
    let rule = match (a.quantile, a.tau) {
        (_, Some(t)) => TauRule::Absolute(t),
        (Some(q), None) => TauRule::NormalQuantile(q),
        (None, None) => TauRule::default(),
    };
    let p = partition_by_representation(&re, &sample, rule)?;
    Ok((sample, re, p, model))
}

fn execute(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, out, embeddings } => {
            let loaded = ExperimentConfig::load(&config)?;
            let cfg = &loaded.config;
            let out_dir = out.unwrap_or_else(|| cfg.output.dir.clone());
            let (mut table, artifacts) = run_experiment_detailed(cfg, Some(loaded.sha256.clone()))?;
            table.config = loaded.as_written.clone();
            fs::create_dir_all(&out_dir)?;
            for &format in &cfg.output.formats {
                let path = out_dir.join(format!("results.{}", format.extension()));
                emit_report(&table, format, &path)?;
                println!("{}", path.display());
            }
            if embeddings || cfg.output.embeddings {
                let sample = pegasus::experiment::run::build_sample(&cfg.dataset)?;
                for a in &artifacts {
                    let path = out_dir.join(format!("embeddings_seed{}.csv", a.seed));
                    write_embeddings(&a.latent, &sample, &path)?;
                    write_provenance(&path, &table.provenance, Some(&table.sample.fingerprint))?;
                    println!("{}", path.display());
                }
            }
            Ok(())
        }
        Command::PegasusDemo { seed, k_neighbors, config, out } => {
            let cfg: PegasusConfig = match config {
                Some(path) => toml::from_str(&fs::read_to_string(path)?)?,
                None => PegasusConfig::default(),
            };
            let lof = LofParams { k_neighbors, ..Default::default() };
            let result = run_pegasus_demo(&cfg, &lof, seed)?;
            eprintln!("{:<10} {:>5} {:>5}", "point", "A_on", "A_off");
            for p in &result.points {
                eprintln!("{:<10} {:>5} {:>5}", p.name, p.on_manifold, p.off_manifold);
            }
            write_json(&result, out.as_deref())
        }
        Command::CodDemo(args) | Command::Framework { command: FrameworkCommand::CodDemo(args) } => cod(&args),
        Command::Sample { source, out } => {
            let sample = if source.pegasus {
                generate_pegasus(&PegasusConfig::default(), source.seed)?
            } else {
                let raw = load_mnist(&source.data_dir, source.split)?;
                build_contaminated_sample(&raw, source.bulk_class, &source.anomalies, source.seed)?
            };
            sample.write_csv(fs::File::create(&out)?)?;
            write_provenance(&out, &provenance(vec![source.seed]), Some(&sample.fingerprint()))
        }
        Command::FitManifold { sample, method, latent, variance, epochs, seed, out } => {
            let sample = read_sample(&sample)?;
            let spec = match method.as_str() {
                "pca" => {
                    let target = match (latent, variance) {
                        (Some(m), None) => PcaTarget::Latent(m),
                        (None, Some(v)) => PcaTarget::Variance(v),
                        _ => return Err(Error::InvalidConfig("pca needs exactly one of --latent, --variance".into())),
                    };
                    ManifoldSpec::Pca { target }
                }
                _ => {
                    let mut config = AeConfig { seed, ..Default::default() };
                    config.latent = latent.ok_or_else(|| Error::InvalidConfig("ae needs --latent".into()))?;
                    if let Some(e) = epochs {
                        config.epochs = e;
                    }
                    ManifoldSpec::Ae { config }
                }
            };
            let model = spec.fit(sample.features.view())?;
            save_model(&model, &out)?;
            println!("{}", model.id());
            Ok(())
        }
        Command::Detect { sample, model, method, k, params, scores_out, flags_out } => {
            let sample = read_sample(&sample)?;
            let model = load_model(&model)?;
            let scores = if method.eq_ignore_ascii_case("re") {
                if !params.is_empty() {
                    return Err(Error::InvalidParams("re takes no parameters".into()));
                }
                re_scores(&model, sample.features.view())?
            } else {
                let spec = DetectorSpec::from_overrides(method.parse::<DetectorKind>()?, &params)?;
                spec.score(model.encode(sample.features.view())?.view())?
            };
            if let Some(path) = scores_out {
                scores.write_csv(fs::File::create(&path)?)?;
            }
            let flags = top_k_flags(&scores, k)?;
            flags.write_csv(fs::File::create(&flags_out)?)?;
            write_json(&Scores::from(&confusion(&flags, &sample)?), None)
        }
        Command::Combine { inputs, sample, out } => {
            let sample = read_sample(&sample)?;
            let sets = inputs
                .iter()
                .map(|p| FlagSet::read_csv(fs::File::open(p)?, sample.len()))
                .collect::<Result<Vec<_>>>()?;
            let refs: Vec<&FlagSet> = sets.iter().collect();
            let union = combine_flags(&refs)?;
            union.write_csv(fs::File::create(&out)?)?;
            write_json(&Scores::from(&confusion(&union, &sample)?), None)
        }
        Command::Report { input, format, out } => {
            let table: ResultTable = serde_json::from_slice(&fs::read(&input)?)?;
            emit_report(&table, format, &out)
        }
        Command::Framework { command } => match command {
            FrameworkCommand::Partition { input } => {
                let (_, _, p, model) = partition_inputs(&input)?;
                let regime = regime_diagnostics(&p, model.latent_dim(), model.input_dim(), input.regime_cutoff);
                write_json(
                    &serde_json::json!({
                        "manifold": p.manifold_id,
                        "tau_rec": p.tau_rec,
                        "a_plus": p.a_plus.len(),
                        "a_minus": p.a_minus.len(),
                        "n_plus": p.n_plus.len(),
                        "n_minus": p.n_minus.len(),
                        "regime": regime,
                    }),
                    None,
                )
            }
            FrameworkCommand::Estimates { input, on, off } => {
                let (sample, _, p, _) = partition_inputs(&input)?;
                let on = FlagSet::read_csv(fs::File::open(on)?, sample.len())?;
                let off = FlagSet::read_csv(fs::File::open(off)?, sample.len())?;
                write_json(&framework_estimates(&p, &on, &off, &sample)?, None)
            }
            FrameworkCommand::CodDemo(_) => unreachable!(),
        },
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    let level = if cli.verbose { "info" } else { "warn" };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n).build_global() {
            eprintln!("error: {e}");
            return ExitCode::from(2);
        }
    }
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(if e.is_validation() { 1 } else { 2 })
        }
    }
}
