use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use cohortshift_cli::manifest::{sha256_hex, RunManifest};
use cohortshift_core::cohort::save_cohort;
use cohortshift_core::{fit_cox, load_cohort, CsvSchema, ModelCard};

fn run(args: &[&str]) -> anyhow::Result<String> {
    let mut out = Vec::new();
    let mut full = vec!["cohortshift"];
    full.extend_from_slice(args);
    cohortshift_cli::run(full, &mut out)?;
    Ok(String::from_utf8(out)?)
}

fn s(p: &Path) -> String {
    p.to_string_lossy().into_owned()
}

/// Simulated graded cohorts under `<tmp>/sim`.
fn simulated(n: usize) -> (tempfile::TempDir, PathBuf) {
    let tmp = tempfile::tempdir().unwrap();
    let sim = tmp.path().join("sim");
    run(&["--seed", "3", "--out", &s(&sim), "simulate", "--n", &n.to_string()]).unwrap();
    (tmp, sim)
}

fn cohort_path(sim: &Path, k: usize) -> PathBuf {
    sim.join("cohorts").join(format!("site{k}.csv"))
}

#[test]
fn simulate_writes_cohorts_truth_and_manifest() {
    let (_tmp, sim) = simulated(200);
    for k in 1..=5 {
        assert!(cohort_path(&sim, k).is_file());
        assert!(sim.join("truth").join(format!("site{k}.csv")).is_file());
    }
    let manifest = RunManifest::load(&sim).unwrap();
    assert_eq!(manifest.seed, 3);
    assert!(manifest.outputs.contains_key("cohorts/site1.csv"));
    assert!(manifest.outputs.contains_key("meta.json"));
    let bytes = fs::read(sim.join("meta.json")).unwrap();
    assert_eq!(manifest.outputs["meta.json"], sha256_hex(&bytes));
}

#[test]
fn unweighted_train_matches_direct_fit() {
    let (tmp, sim) = simulated(300);
    let path = cohort_path(&sim, 2);
    let json = run(&["train", "--cohort", &s(&path)]).unwrap();
    let card = ModelCard::from_json(&json).unwrap();
    let cohort = load_cohort(&path, &CsvSchema::default()).unwrap();
    assert_eq!(card.model, fit_cox(&cohort, None).unwrap());
    assert_eq!(card.training.cohort_name, "site2");

    // with --out the card lands next to a manifest listing the input digest
    let out = tmp.path().join("card");
    run(&["--out", &s(&out), "train", "--cohort", &s(&path)]).unwrap();
    let manifest = RunManifest::load(&out).unwrap();
    let digest = sha256_hex(&fs::read(&path).unwrap());
    assert!(manifest.inputs.values().any(|d| *d == digest));
    assert!(manifest.outputs.contains_key("card.json"));
}

#[test]
fn concept_weighting_against_own_summary_barely_moves_the_model() {
    let (tmp, sim) = simulated(600);
    let path = cohort_path(&sim, 3);
    let cohort = load_cohort(&path, &CsvSchema::default()).unwrap();
    // summary of the training cohort itself
    let rows = cohort.covariate_rows();
    let stats: Vec<serde_json::Value> = cohort
        .covariate_names
        .iter()
        .enumerate()
        .map(|(j, name)| {
            let v: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            let m = v.iter().sum::<f64>() / v.len() as f64;
            let sd = (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / v.len() as f64).sqrt();
            serde_json::json!({"name": name, "mean": m, "sd": sd})
        })
        .collect();
    let base = fit_cox(&cohort, None).unwrap();
    let risks = base.predict_cohort(&cohort, 60.0).unwrap();
    let mean = risks.iter().sum::<f64>() / risks.len() as f64;
    let sd = (risks.iter().map(|r| (r - mean).powi(2)).sum::<f64>() / risks.len() as f64).sqrt();
    let meta = tmp.path().join("own.json");
    let doc = serde_json::json!({"outcome": {"mean": mean, "sd": sd}, "covariates": stats});
    fs::write(&meta, doc.to_string()).unwrap();

    let json = run(&["train", "--cohort", &s(&path), "--meta", &s(&meta), "--weighting", "concept"]).unwrap();
    let card = ModelCard::from_json(&json).unwrap();
    for (a, b) in card.model.coefficients.iter().zip(&base.coefficients) {
        assert!((a - b).abs() < 0.1, "{a} vs {b}");
    }
}

#[test]
fn weights_have_mean_one() {
    let (tmp, sim) = simulated(300);
    let meta = sim.join("meta.json");
    for kind in ["concept", "covariate", "joint"] {
        let out = tmp.path().join(kind);
        run(&[
            "--out",
            &s(&out),
            "weights",
            "--cohort",
            &s(&cohort_path(&sim, 1)),
            "--meta",
            &s(&meta),
            "--weighting",
            kind,
            "--n-meta",
            "2000",
        ])
        .unwrap();
        let mut rdr = csv::Reader::from_path(out.join("weights.csv")).unwrap();
        let w: Vec<f64> = rdr.records().map(|r| r.unwrap()[1].parse().unwrap()).collect();
        assert_eq!(w.len(), 300);
        assert!(w.iter().all(|&v| v > 0.0));
        assert!((w.iter().sum::<f64>() / 300.0 - 1.0).abs() < 1e-12, "{kind}");
        let prov: serde_json::Value = serde_json::from_slice(&fs::read(out.join("provenance.json")).unwrap()).unwrap();
        assert_eq!(prov["kind"], kind);
    }
}

#[test]
fn missing_meta_is_reported() {
    let (_tmp, sim) = simulated(200);
    let err = run(&["train", "--cohort", &s(&cohort_path(&sim, 1)), "--weighting", "joint"]).unwrap_err();
    assert!(format!("{err:#}").contains("--meta is required"));
}

#[test]
fn evaluate_reports_metrics_and_curves() {
    let (tmp, sim) = simulated(400);
    let card = tmp.path().join("card.json");
    fs::write(&card, run(&["train", "--cohort", &s(&cohort_path(&sim, 1))]).unwrap()).unwrap();
    let curves = tmp.path().join("curves");
    let json = run(&[
        "evaluate",
        "--model",
        &s(&card),
        "--cohort",
        &s(&cohort_path(&sim, 5)),
        "--curves",
        &s(&curves),
    ])
    .unwrap();
    let metrics: serde_json::Value = serde_json::from_str(&json).unwrap();
    let mut keys: Vec<&str> = metrics.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort_unstable();
    assert_eq!(keys, ["c_index", "excluded", "ici", "n"]);
    let ici = metrics["ici"].as_f64().unwrap();
    let c = metrics["c_index"].as_f64().unwrap();
    assert!(ici > 0.0 && ici < 0.5 && c > 0.5 && c < 1.0);
    for f in ["calibration.csv", "calibration.svg", "dca.csv", "dca.json", "dca.svg", "manifest.json"] {
        assert!(curves.join(f).is_file(), "{f}");
    }
    let rows = csv::Reader::from_path(curves.join("calibration.csv")).unwrap().records().count();
    assert_eq!(rows, 101);
}

#[test]
fn dca_table_and_summary() {
    let (tmp, sim) = simulated(300);
    let card = tmp.path().join("card.json");
    fs::write(&card, run(&["train", "--cohort", &s(&cohort_path(&sim, 2))]).unwrap()).unwrap();
    let out = tmp.path().join("dca");
    run(&["--out", &s(&out), "dca", "--model", &s(&card), "--cohort", &s(&cohort_path(&sim, 4))]).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("dca.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["threshold", "nb_model", "nb_treat_all", "nb_treat_none"]);
    assert_eq!(rdr.records().count(), 99);
    let summary: serde_json::Value = serde_json::from_slice(&fs::read(out.join("dca.json")).unwrap()).unwrap();
    assert!(summary["max_net_benefit"].as_f64().unwrap() <= summary["prevalence"].as_f64().unwrap());
}

#[test]
fn kl_self_divergence_and_matrix() {
    let (tmp, sim) = simulated(300);
    let a = s(&cohort_path(&sim, 1));
    let json = run(&["kl", "--a", &a, "--b", &a]).unwrap();
    let report: serde_json::Value = serde_json::from_str(&json).unwrap();
    assert_eq!(report["value"].as_f64().unwrap(), 0.0);

    let out = tmp.path().join("kl");
    run(&["--out", &s(&out), "kl", "--matrix", &s(&sim.join("cohorts"))]).unwrap();
    let mut rdr = csv::Reader::from_path(out.join("kl_matrix.csv")).unwrap();
    let header: Vec<String> = rdr.headers().unwrap().iter().map(str::to_string).collect();
    assert_eq!(header, ["source", "site1", "site2", "site3", "site4", "site5"]);
    for (i, row) in rdr.records().enumerate() {
        let row = row.unwrap();
        for j in 0..5 {
            let v: f64 = row[j + 1].parse().unwrap();
            if i == j {
                assert_eq!(v, 0.0);
            } else {
                assert!(v > 0.0);
            }
        }
    }
}

#[test]
fn select_breaks_ties_and_audits() {
    let (tmp, sim) = simulated(300);
    let registry = tmp.path().join("registry");
    fs::create_dir_all(&registry).unwrap();
    // the same cohort under two file names gives two cards at equal distance
    let cohort = load_cohort(cohort_path(&sim, 2), &CsvSchema::default()).unwrap();
    let mut twin = cohort.clone();
    twin.name = "alpha".into();
    let twin_path = tmp.path().join("alpha.csv");
    save_cohort(&twin, &twin_path).unwrap();
    for (name, path) in [("b", cohort_path(&sim, 2)), ("a", twin_path), ("c", cohort_path(&sim, 5))] {
        let json = run(&["train", "--cohort", &s(&path)]).unwrap();
        fs::write(registry.join(format!("{name}.json")), json).unwrap();
    }
    let target = s(&cohort_path(&sim, 1));
    let plain = run(&["select", "--registry", &s(&registry), "--target", &target]).unwrap();
    let lines: Vec<&str> = plain.lines().collect();
    assert_eq!(lines[0], "rank,training_cohort,weighting,n_train,km_train,distance,observed_ici");
    assert!(lines[1].starts_with("1,alpha,"));
    assert!(lines[2].starts_with("2,site2,"));
    assert!(lines[3].starts_with("3,site5,"));
    assert!(lines[1].ends_with(','));

    let audited = run(&["select", "--registry", &s(&registry), "--target", &target, "--audit"]).unwrap();
    for line in audited.lines().skip(1) {
        let ici: f64 = line.rsplit(',').next().unwrap().parse().unwrap();
        assert!(ici > 0.0);
    }
}

#[test]
fn suite_report_figures() {
    let tmp = tempfile::tempdir().unwrap();
    let bundle = tmp.path().join("bundle");
    run(&["--seed", "2", "--out", &s(&bundle), "suite", "--n", "300"]).unwrap();
    run(&["report", "--bundle", &s(&bundle)]).unwrap();
    let report = bundle.join("report");

    let svg = fs::read_to_string(report.join("fig_kl_ici.svg")).unwrap();
    assert_eq!(svg.matches("class=\"panel\"").count(), 5);
    assert_eq!(svg.matches("class=\"bar\"").count(), 20);
    let rows = csv::Reader::from_path(report.join("fig_kl_ici.csv")).unwrap().records().count();
    assert_eq!(rows, 20);
    let scatter = fs::read_to_string(report.join("fig_kl_ici_scatter.svg")).unwrap();
    assert_eq!(scatter.matches("class=\"point\"").count(), 20);
    for f in [
        "fig_ici_weighting.svg",
        "fig_c_weighting.svg",
        "fig_distance_ici.svg",
        "fig_calibration_site1.svg",
        "fig_dca_site5.svg",
        "manifest.json",
    ] {
        assert!(report.join(f).is_file(), "{f}");
    }
    let weighting = fs::read_to_string(report.join("fig_ici_weighting.csv")).unwrap();
    assert_eq!(weighting.lines().count(), 1 + 5 * 3);
}

#[test]
fn report_lists_missing_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let err = run(&["report", "--bundle", &s(tmp.path())]).unwrap_err();
    let msg = format!("{err:#}");
    assert!(msg.contains("incomplete bundle"));
    for t in ["kl_ici.csv", "weighting.csv", "selection.csv", "summary.json"] {
        assert!(msg.contains(t), "{msg}");
    }
}

#[test]
fn binary_exit_codes() {
    let bin = env!("CARGO_BIN_EXE_cohortshift");
    let ok = Command::new(bin).arg("--help").output().unwrap();
    assert!(ok.status.success());
    assert!(String::from_utf8_lossy(&ok.stdout).contains("suite"));

    let tmp = tempfile::tempdir().unwrap();
    let missing = tmp.path().join("nope.csv");
    let bad = Command::new(bin).args(["train", "--cohort", &s(&missing)]).output().unwrap();
    assert!(!bad.status.success());
    assert!(String::from_utf8_lossy(&bad.stderr).starts_with("error:"));

    let horizon = Command::new(bin)
        .args(["--horizon", "0", "train", "--cohort", &s(&missing)])
        .output()
        .unwrap();
    assert!(!horizon.status.success());
    assert!(String::from_utf8_lossy(&horizon.stderr).contains("--horizon"));
}
