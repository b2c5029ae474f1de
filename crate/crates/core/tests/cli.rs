mod common;

use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use pegasus::experiment::render_markdown;
use pegasus::experiment::run::ResultTable;

fn pegasus(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pegasus"))
        .args(args)
        .current_dir(dir)
        .env_remove("PEGASUS_DATA_DIR")
        .output()
        .unwrap()
}

fn ok(out: &Output) -> String {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
    String::from_utf8(out.stdout.clone()).unwrap()
}

const HORSE_CONFIG: &str = r#"
schema = 1
name = "horses"
k = 8
seeds = [0, 1]

[dataset]
kind = "pegasus"
sample_seed = 3

[dataset.config]
n_normal = 200

[manifold]
method = "pca"
target = { latent = 2 }

[[detectors]]
method = "lof"
k_neighbors = 10

[[detectors]]
method = "iforest"

[output]
dir = "reports"
"#;

#[test]
fn exit_codes_follow_error_class() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(pegasus(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(pegasus(&[], dir.path()).status.code(), Some(1));
    assert_eq!(pegasus(&["run", "--bogus"], dir.path()).status.code(), Some(1));

    fs::write(dir.path().join("bad.cfg"), "schema = 1\nname = \"x\"\nk = 0\nseeds = [0]\n[dataset]\nkind = \"pegasus\"\n[manifold]\nmethod = \"pca\"\ntarget = { latent = 2 }\n").unwrap();
    let out = pegasus(&["run", "--config", "bad.cfg"], dir.path());
    assert_eq!(out.status.code(), Some(1), "{}", String::from_utf8_lossy(&out.stderr));

    let out = pegasus(&["sample", "--data-dir", "missing", "--out", "s.csv"], dir.path());
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_writes_every_format_and_report_rerenders() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("horses.cfg"), HORSE_CONFIG).unwrap();
    ok(&pegasus(&["--threads", "1", "run", "--config", "horses.cfg", "--embeddings"], dir.path()));
    let reports = dir.path().join("reports");
    for name in ["results.csv", "results.json", "results.md", "results.json.provenance.json"] {
        assert!(reports.join(name).exists(), "{name}");
    }
    assert!(fs::read_dir(&reports).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with("embeddings")));

    let table: ResultTable = serde_json::from_str(&fs::read_to_string(reports.join("results.json")).unwrap()).unwrap();
    assert_eq!(table.detectors, ["lof", "iforest"]);
    assert_eq!(table.seeds(), [0, 1]);
    let md = fs::read_to_string(reports.join("results.md")).unwrap();
    assert_eq!(md, render_markdown(&table).unwrap());

    ok(&pegasus(&["report", "--input", "reports/results.json", "--format", "md", "--out", "again.md"], dir.path()));
    assert_eq!(fs::read_to_string(dir.path().join("again.md")).unwrap(), md);
}

#[test]
fn step_by_step_pipeline() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    ok(&pegasus(&["sample", "--pegasus", "--seed", "2", "--out", "sample.csv"], d));
    ok(&pegasus(&["fit-manifold", "--sample", "sample.csv", "--method", "pca", "--latent", "2", "--out", "model.json"], d));
    ok(&pegasus(
        &["detect", "--sample", "sample.csv", "--model", "model.json", "--method", "lof", "--k", "4", "--param", "k_neighbors=10", "--flags-out", "lof.csv"],
        d,
    ));
    let re = ok(&pegasus(
        &["detect", "--sample", "sample.csv", "--model", "model.json", "--method", "re", "--k", "4", "--scores-out", "re_scores.csv", "--flags-out", "re.csv"],
        d,
    ));
    assert!(serde_json::from_str::<serde_json::Value>(&re).unwrap().get("recall").is_some());
    assert!(d.join("re_scores.csv").exists());

    let combined = ok(&pegasus(&["combine", "--inputs", "lof.csv", "re.csv", "--sample", "sample.csv", "--out", "both.csv"], d));
    let scores: serde_json::Value = serde_json::from_str(&combined).unwrap();
    assert_eq!(scores["recall"], 1.0, "{combined}");

    let part = ok(&pegasus(&["framework", "partition", "--sample", "sample.csv", "--model", "model.json"], d));
    assert!(part.contains("a_minus"), "{part}");
    ok(&pegasus(&["framework", "estimates", "--sample", "sample.csv", "--model", "model.json", "--on", "lof.csv", "--off", "re.csv"], d));

    let out = pegasus(&["detect", "--sample", "sample.csv", "--model", "model.json", "--method", "lof", "--param", "bogus=1", "--flags-out", "x.csv"], d);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn demos_print_json() {
    let dir = tempfile::tempdir().unwrap();
    let demo = ok(&pegasus(&["pegasus-demo", "--seed", "0"], dir.path()));
    let v: serde_json::Value = serde_json::from_str(&demo).unwrap();
    assert_eq!(v["points"].as_array().unwrap().len(), 4);
    let cod = ok(&pegasus(&["cod-demo", "--dim", "6", "--pairs", "2000", "--histogram", "h.csv"], dir.path()));
    assert!(serde_json::from_str::<serde_json::Value>(&cod).unwrap()["mean_sq_dist"].is_number());
    assert!(dir.path().join("h.csv").exists());
}
