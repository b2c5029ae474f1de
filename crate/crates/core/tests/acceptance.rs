//! Acceptance gate: one PASS/FAIL line per criterion.

mod common;

use std::collections::BTreeSet;
use std::fs;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::process::Command;
use std::time::{Duration, Instant};

use ndarray::Array2;
use proptest::prelude::*;
use proptest::test_runner::{Config as ProptestConfig, TestRunner};
use rand::Rng;

use pegasus::data::{build_contaminated_sample, load_mnist, ContaminatedSample, MnistSplit, PegasusConfig};
use pegasus::detectors::{fast_mcd, iforest_scores, lof_scores, ocsvm_fit, re_scores, top_k_flags, EeParams, IForestParams, LofParams, OcsvmParams};
use pegasus::experiment::config::ExperimentConfig;
use pegasus::experiment::run::{build_sample, run_experiment_detailed, Mode, ResultTable, RE_ID};
use pegasus::experiment::run_pegasus_demo;
use pegasus::framework::curse_of_dim_demo;
use pegasus::manifold::{AeConfig, AeModel, ManifoldModel, PcaSpectrum};
use pegasus::metrics::{confusion_from_mask, f1, precision, recall};
use pegasus::rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn within(elapsed: Duration, limit: Duration, detail: String) -> Verdict {
    check(elapsed <= limit, format!("{detail}; {:.1} s (limit {} s)", elapsed.as_secs_f64(), limit.as_secs()))
}

fn metrics_property_suite() -> Verdict {
    let start = Instant::now();
    let cases = 10_000;
    let mut runner = TestRunner::new(ProptestConfig { cases, failure_persistence: None, ..ProptestConfig::default() });
    let strategy = (1usize..200).prop_flat_map(|n| {
        (
            proptest::collection::vec(any::<bool>(), n),
            proptest::collection::vec(0..n, 0..n),
            proptest::collection::vec(0..n, 0..n),
        )
    });
    let result = runner.run(&strategy, |(truth, flags, more)| {
        let c = confusion_from_mask(&flags, &truth).unwrap();
        let n_anom = truth.iter().filter(|&&a| a).count();
        let flagged: BTreeSet<usize> = flags.iter().copied().collect();
        prop_assert_eq!(c.tp + c.fp + c.fn_ + c.tn, truth.len());
        prop_assert_eq!(c.tp + c.fn_, n_anom);
        prop_assert_eq!(c.tp + c.fp, flagged.len());
        let (r, p, f) = (recall(&c), precision(&c), f1(&c));
        prop_assert!([r, p, f].iter().all(|v| (0.0..=1.0).contains(v)));
        if r + p > 0.0 {
            prop_assert!((f - 2.0 * r * p / (r + p)).abs() < 1e-12);
        }
        if r == p {
            prop_assert!((f - r).abs() < 1e-12);
        }
        if flagged.len() == n_anom {
            prop_assert_eq!(c.fp, c.fn_);
            prop_assert!(r == p && (f - r).abs() < 1e-12);
        }
        let grown: Vec<usize> = flagged.iter().chain(&more).copied().collect();
        let g = confusion_from_mask(&grown, &truth).unwrap();
        prop_assert!(g.tp >= c.tp && recall(&g) >= r);
        Ok(())
    });
    match result {
        Ok(()) => within(start.elapsed(), Duration::from_secs(10), format!("{cases} randomized instances")),
        Err(e) => Err(format!("{e}")),
    }
}

fn random_points(r: &mut rng::Rng, n: usize, dim: usize, lo: f64, hi: f64) -> Vec<Vec<f64>> {
    (0..n).map(|_| (0..dim).map(|_| r.random_range(lo..hi)).collect()).collect()
}

fn to_array(pts: &[Vec<f64>]) -> Array2<f64> {
    Array2::from_shape_fn((pts.len(), pts[0].len()), |(i, j)| pts[i][j])
}

fn min_pairwise_distance(pts: &[Vec<f64>]) -> f64 {
    let mut best = f64::INFINITY;
    for i in 0..pts.len() {
        for j in 0..i {
            let d: f64 = pts[i].iter().zip(&pts[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            best = best.min(d);
        }
    }
    best
}

fn detector_oracles() -> Verdict {
    let start = Instant::now();
    let mut r = rng::seeded(2024);

    let mut lof_err: f64 = 0.0;
    for case in 0..200 {
        let n = r.random_range(5..=12);
        let k = r.random_range(1..=3);
        let pts = random_points(&mut r, n, 1 + case % 3, -5.0, 5.0);
        let got = lof_scores(to_array(&pts).view(), &LofParams { k_neighbors: k, ..Default::default() }).map_err(|e| e.to_string())?;
        for (a, b) in got.scores.iter().zip(common::lof_brute_force(&pts, k)) {
            lof_err = lof_err.max((a - b).abs() / b.abs().max(1.0));
        }
    }

    let mut mcd_err: f64 = 0.0;
    for _ in 0..60 {
        let n = r.random_range(5..=12);
        let pts = random_points(&mut r, n, 2, -5.0, 5.0);
        let params = EeParams { n_initial_subsets: 1000, ..Default::default() };
        let h = params.support_size(n, 2);
        let (fit, _) = fast_mcd(to_array(&pts).view(), &params).map_err(|e| e.to_string())?;
        let oracle = common::mcd_min_determinant(&pts, h);
        mcd_err = mcd_err.max((fit.raw_log_determinant.exp() - oracle).abs() / oracle);
    }

    let mut svm_err: f64 = 0.0;
    let mut svm_cases = 0;
    while svm_cases < 24 {
        let n = r.random_range(4..=8);
        let pts = random_points(&mut r, n, 2, -2.0, 2.0);
        if min_pairwise_distance(&pts) <= 0.3 {
            continue;
        }
        let nu = [0.3, 0.5, 0.7][svm_cases % 3];
        let params = OcsvmParams { nu, gamma: Some(0.5), tolerance: 1e-12, ..Default::default() };
        let fit = ocsvm_fit(to_array(&pts).view(), &params).map_err(|e| e.to_string())?;
        let oracle = common::ocsvm_dual_projected_gradient(&pts, nu, 0.5, 200_000);
        for (a, b) in fit.alpha.iter().zip(&oracle) {
            svm_err = svm_err.max((a - b).abs());
        }
        svm_cases += 1;
    }

    let mut planted = Array2::zeros((101, 2));
    planted[[100, 0]] = 10.0;
    planted[[100, 1]] = 10.0;
    let s = iforest_scores(planted.view(), &IForestParams { n_trees: 200, ..Default::default() }).map_err(|e| e.to_string())?;
    let argmax = (0..101).max_by(|&a, &b| s.scores[a].total_cmp(&s.scores[b]).then(b.cmp(&a))).unwrap();

    let detail = format!(
        "LOF max rel err {lof_err:.1e} (200 cases); MCD det rel err {mcd_err:.1e} (60 cases); OCSVM alpha err {svm_err:.1e} (24 cases); IF argmax {argmax}"
    );
    if lof_err > 1e-9 || mcd_err > 1e-9 || svm_err > 1e-6 || argmax != 100 {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(60), detail)
}

fn ae_gradient_check() -> Verdict {
    let config = AeConfig { hidden: 1, latent: 1, seed: 5, ..Default::default() };
    let mut model = AeModel::init(1, &config);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        layer.bias.mapv_inplace(|_| 0.1 * (l as f64 + 1.0));
        layer.weight.mapv_inplace(|w| w + 0.3);
    }
    let x = ndarray::array![[0.2], [0.9], [0.55]];
    let params = model.parameter_count();
    let analytic = model.loss_and_gradient(x.view()).1.flatten();
    let h = 1e-5;
    let mut worst: f64 = 0.0;
    for i in 0..params {
        let p = model.parameter(i);
        let mut plus = model.clone();
        plus.set_parameter(i, p + h);
        let mut minus = model.clone();
        minus.set_parameter(i, p - h);
        let numeric = (plus.loss_and_gradient(x.view()).0 - minus.loss_and_gradient(x.view()).0) / (2.0 * h);
        worst = worst.max((analytic[i] - numeric).abs() / analytic[i].abs().max(numeric.abs()).max(1e-8));
    }
    check(params <= 10 && worst <= 1e-4, format!("{params} parameters, max relative error {worst:.1e}"))
}

fn mnist_sample() -> Result<ContaminatedSample, String> {
    let dir = common::mnist_dir().ok_or("MNIST files not found (run scripts/fetch_mnist.sh)")?;
    let raw = load_mnist(&dir, MnistSplit::Train).map_err(|e| e.to_string())?;
    build_contaminated_sample(&raw, 1, &[(7, 120), (8, 120)], 0).map_err(|e| e.to_string())
}

fn pca_structure() -> Verdict {
    let start = Instant::now();
    let sample = mnist_sample()?;
    let spectrum = PcaSpectrum::compute(sample.features.view()).map_err(|e| e.to_string())?;
    let m95 = spectrum.components_for_variance(0.95);
    let m995 = spectrum.components_for_variance(0.995);

    let full = spectrum.model(m995);
    let gram = full.components.dot(&full.components.t());
    let ortho = gram
        .indexed_iter()
        .map(|((i, j), v)| (v - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0, f64::max);

    let sweep = [1, 2, 5, 10, 20, 50, 84, 150, 245, 400];
    let mut errors = Vec::new();
    for m in sweep {
        let model = ManifoldModel::Pca(spectrum.model(m));
        let re = model.reconstruction_error(sample.features.view()).map_err(|e| e.to_string())?;
        errors.push(re.mean().unwrap());
    }
    let monotone = errors.windows(2).all(|w| w[1] <= w[0]);

    let detail = format!(
        "M(0.95) = {m95}, M(0.995) = {m995}, orthonormality err {ortho:.1e}, RE over M sweep non-increasing: {monotone}"
    );
    if m95.abs_diff(84) > 5 || m995.abs_diff(245) > 10 || ortho > 1e-8 || !monotone {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(120), detail)
}

fn curse_of_dimensionality() -> Verdict {
    let start = Instant::now();
    let d6 = curse_of_dim_demo(6, 100_000, 0).map_err(|e| e.to_string())?;
    let d600 = curse_of_dim_demo(600, 100_000, 0).map_err(|e| e.to_string())?;
    let d101 = curse_of_dim_demo(101, 100_000, 0).map_err(|e| e.to_string())?;
    let mean_ok = (d6.mean_sq_dist - 1.0).abs() <= 3.0 * d6.standard_error;
    let target = 0.2 * 600f64.sqrt();
    let std_ok = (d600.std_sq_dist - target).abs() <= 0.1 * target;
    let mode_ok = d101.bin_width == 0.25 && (d101.gaussian_peak_radius - 10.0).abs() <= d101.bin_width;
    let detail = format!(
        "D=6 mean {:.4} (SE {:.4}); D=600 std {:.3} vs {:.3}; D=101 Gaussian mode {:.3} (bin {})",
        d6.mean_sq_dist, d6.standard_error, d600.std_sq_dist, target, d101.gaussian_peak_radius, d101.bin_width
    );
    if !(mean_ok && std_ok && mode_ok) {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(30), detail)
}

fn pegasus_demo() -> Verdict {
    let start = Instant::now();
    let a = run_pegasus_demo(&PegasusConfig::default(), &LofParams::default(), 0).map_err(|e| e.to_string())?;
    let b = run_pegasus_demo(&PegasusConfig::default(), &LofParams::default(), 0).map_err(|e| e.to_string())?;
    let grid = |name: &str| a.point(name).map(|p| (p.on_manifold, p.off_manifold));
    let ok = grid("Eohippus") == Some((true, false))
        && grid("Sampson") == Some((true, false))
        && grid("Pegasus_m") == Some((false, true))
        && grid("Pegasus_h") == Some((true, true))
        && a == b;
    let detail = a
        .points
        .iter()
        .map(|p| format!("{} on={} off={}", p.name, p.on_manifold, p.off_manifold))
        .collect::<Vec<_>>()
        .join(", ");
    if !ok {
        return Err(detail);
    }
    within(start.elapsed(), Duration::from_secs(5), format!("{detail}; repeat run identical"))
}

fn pca_m84_table() -> Result<(ResultTable, Duration, usize), String> {
    common::mnist_dir().ok_or("MNIST files not found (run scripts/fetch_mnist.sh)")?;
    let start = Instant::now();
    let path = common::repo_root().join("tables/pca_m84.cfg");
    let loaded = ExperimentConfig::load(&path).map_err(|e| e.to_string())?;
    let (table, artifacts) = run_experiment_detailed(&loaded.config, Some(loaded.sha256)).map_err(|e| e.to_string())?;
    let elapsed = start.elapsed();

    // RE-only anomalies recomputed from the fitted manifold and fresh scores.
    let sample = build_sample(&loaded.config.dataset).map_err(|e| e.to_string())?;
    let art = &artifacts[0];
    let re = re_scores(&art.model, sample.features.view()).map_err(|e| e.to_string())?;
    let re_flags = top_k_flags(&re, table.k).map_err(|e| e.to_string())?;
    let mut on: BTreeSet<usize> = BTreeSet::new();
    for spec in &loaded.config.detectors {
        let s = spec.clone().with_seed(art.seed).score(art.latent.view()).map_err(|e| e.to_string())?;
        on.extend(top_k_flags(&s, table.k).map_err(|e| e.to_string())?.indices());
    }
    let exclusive = re_flags
        .indices()
        .iter()
        .filter(|&&i| sample.is_anomaly()[i] && !on.contains(&i))
        .count();
    Ok((table, elapsed, exclusive))
}

fn mnist_pca_reproduction(table: &ResultTable, elapsed: Duration) -> Verdict {
    let re = table.mean(RE_ID, Mode::Standalone).ok_or("no RE row")?;
    let sevens = table.mean_class_count(RE_ID, Mode::Standalone, 7).unwrap_or(0.0);
    let eights = table.mean_class_count(RE_ID, Mode::Standalone, 8).unwrap_or(0.0);
    let alone = table.on_manifold_mean(Mode::Standalone).ok_or("no standalone rows")?.recall;
    let with_re = table.on_manifold_mean(Mode::WithRe).ok_or("no with-RE rows")?.recall;
    let m = table.diagnostics[0].manifold.latent_dim;
    let detail = format!(
        "M = {m}; RE recall {:.3}; RE top-{} holds {sevens} sevens, {eights} eights; mean recall standalone {alone:.3}, with RE {with_re:.3} (delta {:.3})",
        re.recall,
        table.k,
        with_re - alone
    );
    let ok = (re.recall - 0.65).abs() <= 0.10
        && (sevens - 89.0).abs() <= 15.0
        && (eights - 67.0).abs() <= 15.0
        && with_re - alone >= 0.15;
    if !ok {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(600), detail)
}

fn off_manifold_exclusivity(table: &ResultTable, exclusive: usize) -> Verdict {
    let reported = table.diagnostics[0].exclusive_off_anomalies;
    check(
        exclusive > 0 && exclusive == reported,
        format!("{exclusive} anomalies flagged by RE and by none of {:?} (report says {reported})", table.detectors),
    )
}

fn run_cli_ae_m30(out: &Path) -> Result<Duration, String> {
    let start = Instant::now();
    let status = Command::new(env!("CARGO_BIN_EXE_pegasus"))
        .args(["--threads", "1", "run", "--config"])
        .arg(common::repo_root().join("tables/ae_m30.cfg"))
        .arg("--out")
        .arg(out)
        .output()
        .map_err(|e| e.to_string())?;
    if !status.status.success() {
        return Err(format!("run exited with {}: {}", status.status, String::from_utf8_lossy(&status.stderr)));
    }
    Ok(start.elapsed())
}

fn mnist_ae_trend(out: &Path, elapsed: Duration) -> Verdict {
    let table: ResultTable = serde_json::from_slice(&fs::read(out.join("results.json")).map_err(|e| e.to_string())?)
        .map_err(|e| e.to_string())?;
    let alone = table.on_manifold_mean(Mode::Standalone).ok_or("no standalone rows")?.recall;
    let with_re = table.on_manifold_mean(Mode::WithRe).ok_or("no with-RE rows")?.recall;
    let with_if = table.on_manifold_mean(Mode::WithIf).ok_or("no with-IF rows")?.recall;
    let eights = table.mean_class_count(RE_ID, Mode::Standalone, 8).unwrap_or(0.0);
    let detail = format!(
        "seeds {:?}; mean recall standalone {alone:.3}, with RE {with_re:.3}, with IF {with_if:.3}; RE top-{} holds {eights:.1} eights",
        table.seeds(),
        table.k
    );
    let ok = table.seeds().len() >= 3 && with_re >= with_if + 0.05 && with_re >= alone + 0.20 && eights >= 75.0;
    if !ok {
        return Err(detail);
    }
    within(elapsed, Duration::from_secs(1800), detail)
}

fn reproducibility(a: &Path, b: &Path) -> Verdict {
    let mut names: Vec<String> = fs::read_dir(a)
        .map_err(|e| e.to_string())?
        .map(|e| e.unwrap().file_name().to_string_lossy().into_owned())
        .collect();
    names.sort();
    if names.is_empty() {
        return Err("no report files".into());
    }
    for name in &names {
        let x = fs::read(a.join(name)).map_err(|e| e.to_string())?;
        let y = fs::read(b.join(name)).map_err(|e| format!("{name}: {e}"))?;
        if x != y {
            return Err(format!("{name} differs between runs"));
        }
    }
    Ok(format!("{} files byte-identical: {}", names.len(), names.join(", ")))
}

fn guarded<T>(f: impl FnOnce() -> Result<T, String>) -> Result<T, String> {
    catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let msg = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {msg}"))
    })
}

fn main() {
    let mut failures = 0;
    let mut report = |id: usize, name: &str, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failures += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {id:>2}. {name}: {detail}");
    };

    report(1, "metrics property suite", guarded(metrics_property_suite));
    report(2, "detector oracle equivalence", guarded(detector_oracles));
    report(3, "autoencoder gradient check", guarded(ae_gradient_check));
    report(4, "PCA structure", guarded(pca_structure));
    report(5, "curse-of-dimensionality demo", guarded(curse_of_dimensionality));
    report(6, "horse demo membership grid", guarded(pegasus_demo));

    match guarded(pca_m84_table) {
        Ok((table, elapsed, exclusive)) => {
            report(7, "MNIST PCA reproduction", guarded(|| mnist_pca_reproduction(&table, elapsed)));
            report(9, "off-manifold exclusivity", guarded(|| off_manifold_exclusivity(&table, exclusive)));
        }
        Err(e) => {
            report(7, "MNIST PCA reproduction", Err(e.clone()));
            report(9, "off-manifold exclusivity", Err(e));
        }
    }

    let dir = tempfile::tempdir().expect("temp dir");
    let (first, second) = (dir.path().join("first"), dir.path().join("second"));
    let runs = common::mnist_dir()
        .ok_or_else(|| "MNIST files not found (run scripts/fetch_mnist.sh)".to_string())
        .and_then(|_| Ok((run_cli_ae_m30(&first)?, run_cli_ae_m30(&second)?)));
    match runs {
        Ok((elapsed, _)) => {
            report(8, "MNIST autoencoder trends", guarded(|| mnist_ae_trend(&first, elapsed)));
            report(10, "reproducibility with --threads 1", guarded(|| reproducibility(&first, &second)));
        }
        Err(e) => {
            report(8, "MNIST autoencoder trends", Err(e.clone()));
            report(10, "reproducibility with --threads 1", Err(e));
        }
    }

    println!("{} of 10 criteria passed", 10 - failures);
    if failures > 0 {
        std::process::exit(1);
    }
}
