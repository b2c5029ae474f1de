//! Report files: long-form CSV, JSON, Markdown tables, latent embeddings and
//! provenance sidecars.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use ndarray::{Array2, Axis};
use serde::{Deserialize, Serialize};

use super::config::ReportFormat;
use super::run::{Mode, Provenance, ResultRow, ResultTable, RE_ID};
use crate::data::ContaminatedSample;
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::manifold::{pca_fit, ManifoldModel, PcaTarget};

pub const CSV_HEADER: [&str; 8] = ["detector", "mode", "recall", "precision", "f1", "tp", "fp", "seed"];

pub fn write_rows_csv<W: Write>(rows: &[ResultRow], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(CSV_HEADER)?;
    for r in rows {
        w.write_record([
            r.detector.clone(),
            r.mode.to_string(),
            r.recall.to_string(),
            r.precision.to_string(),
            r.f1.to_string(),
            r.tp.to_string(),
            r.fp.to_string(),
            r.seed.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_rows_csv<R: Read>(reader: R) -> Result<Vec<ResultRow>> {
    let mut r = csv::Reader::from_reader(reader);
    if r.headers()?.iter().ne(CSV_HEADER) {
        return Err(Error::Parse(format!("expected header {}", CSV_HEADER.join(","))));
    }
    let field = |rec: &csv::StringRecord, i: usize| -> Result<String> {
        rec.get(i).map(str::to_string).ok_or_else(|| Error::Parse(format!("missing column {}", CSV_HEADER[i])))
    };
    fn num<T: std::str::FromStr>(s: String) -> Result<T> {
        s.parse().map_err(|_| Error::Parse(format!("cannot parse '{s}'")))
    }
    r.records()
        .map(|rec| {
            let rec = rec?;
            Ok(ResultRow {
                detector: field(&rec, 0)?,
                mode: field(&rec, 1)?.parse()?,
                recall: num(field(&rec, 2)?)?,
                precision: num(field(&rec, 3)?)?,
                f1: num(field(&rec, 4)?)?,
                tp: num(field(&rec, 5)?)?,
                fp: num(field(&rec, 6)?)?,
                seed: num(field(&rec, 7)?)?,
            })
        })
        .collect()
}

fn label(detector: &str) -> String {
    detector
        .parse::<DetectorKind>()
        .map(|k| k.label().to_string())
        .unwrap_or_else(|_| detector.to_uppercase())
}

fn cell(v: Option<(f64, f64)>) -> String {
    match v {
        Some((r, f)) => format!("{r:.2} | {f:.2}"),
        None => "n/a | n/a".into(),
    }
}

pub fn render_markdown(table: &ResultTable) -> Result<String> {
    if table.detectors.is_empty() || table.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let plan = table.config.combination;
    let mut modes = vec![Mode::Standalone];
    if plan.with_re {
        modes.push(Mode::WithRe);
    }
    if plan.with_if {
        modes.push(Mode::WithIf);
    }
    let heading = |m: Mode| match m {
        Mode::Standalone => "Standalone",
        Mode::WithRe => "+RE",
        Mode::WithIf => "+IF",
    };
    let seeds = table.seeds();
    let mut s = String::new();
    let _ = writeln!(s, "# {}\n", table.name);
    let _ = writeln!(
        s,
        "{} rows ({} anomalies), k = {}, seeds {:?}, tool {}.\n",
        table.sample.n, table.sample.n_anomalies, table.k, seeds, table.provenance.tool_version
    );
    if seeds.len() > 1 {
        let _ = writeln!(s, "Values are means over {} seeds.\n", seeds.len());
    }

    let mut head = String::from("| Model |");
    let mut rule = String::from("|---|");
    for &m in &modes {
        let _ = write!(head, " {0} Rec. | {0} F1 |", heading(m));
        rule.push_str("---:|---:|");
    }
    let _ = writeln!(s, "{head}\n{rule}");
    let line = |name: String, vals: Vec<Option<(f64, f64)>>| {
        format!("| {name} | {} |", vals.into_iter().map(cell).collect::<Vec<_>>().join(" | "))
    };
    for d in &table.detectors {
        let vals = modes.iter().map(|&m| table.mean(d, m).map(|v| (v.recall, v.f1))).collect();
        let _ = writeln!(s, "{}", line(label(d), vals));
    }
    let vals = modes.iter().map(|&m| table.on_manifold_mean(m).map(|v| (v.recall, v.f1))).collect();
    let _ = writeln!(s, "{}", line("**Mean**".into(), vals));
    let re = table.mean(RE_ID, Mode::Standalone).map(|v| (v.recall, v.f1));
    let _ = writeln!(s, "\n| Model | Rec. | F1 |\n|---|---:|---:|\n| RE | {} |", cell(re));

    let anomaly_classes: Vec<u8> = match &table.config.dataset {
        super::config::DatasetSpec::Mnist(m) => m.anomalies.iter().map(|a| a.class).collect(),
        super::config::DatasetSpec::Pegasus(p) => (1..=p.config.special_points.len() as u8).collect(),
    };
    let _ = writeln!(s, "\n## Flagged anomalies by class\n");
    let mut head = String::from("| Model | Mode |");
    let mut rule = String::from("|---|---|");
    for c in &anomaly_classes {
        let _ = write!(head, " class {c} |");
        rule.push_str("---:|");
    }
    let _ = writeln!(s, "{head}\n{rule}");
    let mut pairs: Vec<(String, Mode)> = table.expected_pairs();
    pairs.sort_by_key(|(d, _)| d == RE_ID);
    for (d, m) in pairs {
        let counts: Vec<String> = anomaly_classes
            .iter()
            .map(|&c| table.mean_class_count(&d, m, c).map_or("-".into(), |v| format!("{v:.1}")))
            .collect();
        let _ = writeln!(s, "| {} | {} | {} |", label(&d), heading(m), counts.join(" | "));
    }

    if seeds.len() > 1 {
        let _ = writeln!(s, "\n## Recall per seed\n");
        let _ = writeln!(
            s,
            "| Model | Mode | {} |\n|---|---|{}",
            seeds.iter().map(|x| format!("seed {x}")).collect::<Vec<_>>().join(" | "),
            "---:|".repeat(seeds.len())
        );
        for (d, m) in table.expected_pairs() {
            let vals: Vec<String> = seeds
                .iter()
                .map(|&sd| table.row(&d, m, sd).map_or("-".into(), |r| format!("{:.3}", r.recall)))
                .collect();
            let _ = writeln!(s, "| {} | {} | {} |", label(&d), heading(m), vals.join(" | "));
        }
    }

    let _ = writeln!(s, "\n## Manifold diagnostics\n");
    let _ = writeln!(
        s,
        "| Seed | Manifold | Fit | Median RE (normal) | Median RE (anomaly) | tau | A+ | A- | N+ | N- | Regime | RE-only anomalies |\n\
         |---:|---|---:|---:|---:|---:|---:|---:|---:|---:|---|---:|"
    );
    for d in &table.diagnostics {
        let fit = match (d.manifold.explained_variance, d.manifold.final_train_loss) {
            (Some(v), _) => format!("EV {v:.4}"),
            (None, Some(l)) => format!("loss {l:.5}"),
            _ => "-".into(),
        };
        let _ = writeln!(
            s,
            "| {} | {} | {} | {:.5} | {:.5} | {:.5} | {} | {} | {} | {} | {} | {} |",
            d.seed,
            d.manifold.id,
            fit,
            d.manifold.median_re_normal,
            d.manifold.median_re_anomaly,
            d.partition.tau_rec,
            d.partition.a_plus,
            d.partition.a_minus,
            d.partition.n_plus,
            d.partition.n_minus,
            d.regime.regime.label(),
            d.exclusive_off_anomalies
        );
    }
    Ok(s)
}

pub fn render_json(table: &ResultTable) -> Result<String> {
    if table.detectors.is_empty() || table.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    Ok(serde_json::to_string_pretty(table)? + "\n")
}

/// Provenance sidecar for `path`: `<path>.provenance.json`.
pub fn provenance_path(path: &Path) -> PathBuf {
    let mut name = path.file_name().unwrap_or_default().to_os_string();
    name.push(".provenance.json");
    path.with_file_name(name)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProvenanceRecord {
    pub file: String,
    #[serde(flatten)]
    pub provenance: Provenance,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub sample_fingerprint: Option<String>,
}

pub fn write_provenance(path: &Path, provenance: &Provenance, sample_fingerprint: Option<&str>) -> Result<()> {
    let record = ProvenanceRecord {
        file: path.file_name().map(|f| f.to_string_lossy().into_owned()).unwrap_or_default(),
        provenance: provenance.clone(),
        sample_fingerprint: sample_fingerprint.map(str::to_string),
    };
    fs::write(provenance_path(path), serde_json::to_string_pretty(&record)? + "\n")?;
    Ok(())
}

/// Write `table` to `path` in `format` with its provenance sidecar.
pub fn emit_report(table: &ResultTable, format: ReportFormat, path: &Path) -> Result<()> {
    if table.detectors.is_empty() || table.rows.is_empty() {
        return Err(Error::EmptyReport);
    }
    let bytes = match format {
        ReportFormat::Csv => {
            let mut buf = Vec::new();
            write_rows_csv(&table.rows, &mut buf)?;
            buf
        }
        ReportFormat::Json => render_json(table)?.into_bytes(),
        ReportFormat::Markdown => render_markdown(table)?.into_bytes(),
    };
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    fs::write(path, bytes)?;
    write_provenance(path, &table.provenance, Some(&table.sample.fingerprint))
}

/// Two plotting coordinates per row: the latent codes when `M <= 2`
/// (padded with zeros), otherwise their first two principal components.
pub fn embedding_coordinates(latent: &Array2<f64>) -> Result<Array2<f64>> {
    let (n, m) = latent.dim();
    match m {
        0 => Err(Error::ShapeMismatch { expected: 1, found: 0 }),
        1 | 2 => {
            let mut out = Array2::zeros((n, 2));
            out.slice_mut(ndarray::s![.., ..m]).assign(latent);
            Ok(out)
        }
        _ => Ok(pca_fit(latent.view(), PcaTarget::Latent(2))?.encode(latent.view())),
    }
}

/// CSV `index,is_anomaly,class,z0,z1` of the sample's latent codes.
pub fn emit_embeddings(model: &ManifoldModel, truth: &ContaminatedSample, path: &Path) -> Result<()> {
    let latent = model.encode(truth.features.view())?;
    write_embeddings(&latent, truth, path)
}

pub fn write_embeddings(latent: &Array2<f64>, truth: &ContaminatedSample, path: &Path) -> Result<()> {
    if latent.nrows() != truth.len() {
        return Err(Error::CoverageMismatch { expected: truth.len(), found: latent.nrows() });
    }
    let coords = embedding_coordinates(latent)?;
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["index", "is_anomaly", "class", "z0", "z1"])?;
    for (i, row) in coords.axis_iter(Axis(0)).enumerate() {
        w.write_record([
            i.to_string(),
            u8::from(truth.is_anomaly()[i]).to_string(),
            truth.class_labels[i].to_string(),
            row[0].to_string(),
            row[1].to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
