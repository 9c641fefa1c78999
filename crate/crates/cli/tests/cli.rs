use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;
use uqpe::simulation::{simulate_dataset, Dgp, DgpSpec, Sparsity};

fn uqpe(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_uqpe"))
        .args(args)
        .output()
        .expect("run binary")
}

fn write_sample(dir: &Path) -> String {
    let spec = DgpSpec {
        dgp: Dgp::Quadratic,
        sparsity: Sparsity::I,
        n: 300,
        p: 6,
        seed: 4,
    };
    let data = simulate_dataset(&spec, 1).unwrap();
    let path = dir.join("sample.csv");
    let mut w = csv::Writer::from_path(&path).unwrap();
    w.write_record(["wage", "days", "c1", "c2", "c3", "c4", "c5"]).unwrap();
    let x = data.covariates();
    for i in 0..data.n() {
        let mut row = vec![format!("{}", data.outcome()[i])];
        row.extend((0..6).map(|j| format!("{}", x.get(i, j))));
        w.write_record(&row).unwrap();
    }
    w.flush().unwrap();
    path.to_str().unwrap().to_string()
}

fn estimate(data: &str, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec![
        "estimate",
        "--data",
        data,
        "--outcome",
        "wage",
        "--treatment",
        "days",
        "--bootstrap",
        "200",
        "--seed",
        "5",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    uqpe(&args)
}

fn error_json(out: &Output) -> Value {
    let text = String::from_utf8_lossy(&out.stderr);
    let line = text.lines().find(|l| l.starts_with('{')).expect("json error line");
    serde_json::from_str(line).unwrap()
}

#[test]
fn estimate_writes_all_artifacts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path());
    let out = dir.path().join("run");
    let res = estimate(&data, &out, &["--save-model", "--report-scale", "1000"]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    for file in ["results.json", "bands.csv", "manifest.json", "model.json"] {
        assert!(out.join(file).exists(), "missing {file}");
    }

    let results: Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    let rows = results["estimate"]["rows"].as_array().unwrap();
    assert!(rows.len() >= 4);

    let mut bands = csv::Reader::from_path(out.join("bands.csv")).unwrap();
    let header: Vec<String> = bands.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["tau", "estimate", "pw_lo", "pw_hi", "unif_lo", "unif_hi"]);
    let records: Vec<csv::StringRecord> = bands.records().map(|r| r.unwrap()).collect();
    // Every tau of the uniform band: the requested taus plus a 0.05 grid over [0.2, 0.8].
    assert_eq!(records.len(), 13);
    for tau in ["0.2", "0.4", "0.6", "0.8"] {
        assert!(records
            .iter()
            .any(|r| r[0].parse::<f64>().unwrap() == tau.parse::<f64>().unwrap()));
    }
    for rec in &records {
        let v: Vec<f64> = rec.iter().map(|s| s.parse().unwrap()).collect();
        assert!(v[4] <= v[2] && v[2] <= v[1] && v[1] <= v[3] && v[3] <= v[5]);
        let tau = v[0];
        let row = rows
            .iter()
            .find(|r| (r["tau"].as_f64().unwrap() - tau).abs() < 1e-9)
            .unwrap();
        assert!((v[1] - 1000.0 * row["uqpe_hat"].as_f64().unwrap()).abs() < 1e-6 * v[1].abs().max(1.0));
    }

    let manifest: Value = serde_json::from_slice(&std::fs::read(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "estimate");
    assert!(manifest["input_digest"].as_str().unwrap().starts_with("sha256:"));
}

#[test]
fn results_are_identical_across_thread_counts() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(estimate(&data, &a, &["--threads", "1"]).status.success());
    assert!(estimate(&data, &b, &["--threads", "3"]).status.success());
    let ra = std::fs::read(a.join("results.json")).unwrap();
    let rb = std::fs::read(b.join("results.json")).unwrap();
    assert_eq!(ra, rb);
    assert_eq!(
        std::fs::read(a.join("bands.csv")).unwrap(),
        std::fs::read(b.join("bands.csv")).unwrap()
    );
}

#[test]
fn plugin_only_is_flagged_in_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path());
    let out = dir.path().join("run");
    assert!(estimate(&data, &out, &["--estimator", "plugin-only"]).status.success());
    let manifest = std::fs::read_to_string(out.join("manifest.json")).unwrap();
    assert!(manifest.contains("no debiasing"));
    let results: Value = serde_json::from_slice(&std::fs::read(out.join("results.json")).unwrap()).unwrap();
    assert_eq!(results["estimate"]["debiased"], false);
}

#[test]
fn missing_column_is_a_schema_error() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path());
    let out = dir.path().join("run");
    let res = uqpe(&[
        "estimate",
        "--data",
        &data,
        "--outcome",
        "salary",
        "--treatment",
        "days",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(1));
    let err = error_json(&res);
    assert!(err["error"]["message"].as_str().unwrap().contains("salary"));
}

#[test]
fn unknown_dgp_is_a_usage_error() {
    let res = uqpe(&["true-uqpe", "--dgp", "4", "--sparsity", "i"]);
    assert_eq!(res.status.code(), Some(2));
    let err = error_json(&res);
    assert!(err["error"]["message"].is_string());
}

#[test]
fn invalid_configuration_exits_with_usage_status() {
    let dir = tempfile::tempdir().unwrap();
    let data = write_sample(dir.path());
    let out = dir.path().join("run");
    let res = estimate(&data, &out, &["--alpha", "1.5"]);
    assert_eq!(res.status.code(), Some(2));
    assert!(error_json(&res)["error"]["stage"].is_string());
}

#[test]
fn linear_design_oracle_is_one() {
    let res = uqpe(&["true-uqpe", "--dgp", "1", "--sparsity", "ii", "--oracle-n", "100000"]);
    assert!(res.status.success());
    let text = String::from_utf8(res.stdout).unwrap();
    let values: Vec<&str> = text.lines().skip(1).map(|l| l.split('\t').nth(1).unwrap()).collect();
    assert_eq!(values, ["1.0000"; 4]);
}

#[test]
fn simulate_writes_metrics() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("sim");
    let res = uqpe(&[
        "simulate",
        "--dgp",
        "1",
        "--sparsity",
        "i",
        "--n",
        "300",
        "--p",
        "10",
        "--reps",
        "2",
        "--bootstrap",
        "100",
        "--estimator",
        "debiased,plugin-only",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert!(res.status.success(), "{}", String::from_utf8_lossy(&res.stderr));
    let mut reader = csv::Reader::from_path(out.join("metrics.csv")).unwrap();
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header[..6], ["dgp", "sparsity", "n", "p", "estimator", "tau"]);
    assert_eq!(reader.records().count(), 8);
    assert!(out.join("metrics.json").exists());
    assert!(out.join("manifest.json").exists());
}
