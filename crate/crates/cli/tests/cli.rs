use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn ratspn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_ratspn"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

/// Two well-separated balanced classes over four features, label last.
fn blobs(dir: &Path, name: &str, n: usize) -> PathBuf {
    let mut text = String::new();
    for i in 0..n {
        let c = i % 2;
        let base = if c == 0 { 0.2 } else { 0.8 };
        let jitter = |k: usize| ((i * 7 + k * 13) % 10) as f64 / 100.0;
        text += &format!(
            "{},{},{},{},{c}\n",
            base + jitter(0),
            base - jitter(1),
            1.0 - base + jitter(2),
            base + jitter(3)
        );
    }
    let path = dir.join(name);
    fs::write(&path, text).unwrap();
    path
}

fn csv(path: &Path) -> String {
    format!("csv:{}", path.display())
}

fn train_blobs(dir: &TempDir, out: &str, extra: &[&str]) -> (Output, PathBuf) {
    let data = blobs(dir.path(), "train.csv", 40);
    let out = dir.path().join(out);
    let data = csv(&data);
    let mut args = vec![
        "train",
        "--data",
        &data,
        "--depth",
        "1",
        "--repetitions",
        "2",
        "--sums",
        "2",
        "--leaves",
        "2",
        "--epochs",
        "4",
        "--batch-size",
        "10",
        "--lr",
        "0.05",
        "--seed",
        "3",
        "--out",
        out.to_str().unwrap(),
    ];
    args.extend_from_slice(extra);
    (ratspn(&args), out)
}

fn read_csv_rows(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .skip(1)
        .map(|l| l.split(',').map(str::to_owned).collect())
        .collect()
}

#[test]
fn train_writes_model_metrics_and_manifest() {
    let dir = TempDir::new().unwrap();
    let (o, out) = train_blobs(&dir, "run", &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv_rows(&out.join("metrics.csv"));
    assert_eq!(rows.len(), 4);
    assert_eq!(rows[3][0], "4");
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["command"], "train");
    assert_eq!(manifest["seeds"]["seed"], 3);
    assert_eq!(
        manifest["data"][0]["files"][0]["sha256"]
            .as_str()
            .unwrap()
            .len(),
        64
    );
    assert!(out.join("model.json").exists());
}

#[test]
fn identical_runs_are_identical() {
    let dir = TempDir::new().unwrap();
    let (_, a) = train_blobs(&dir, "a", &[]);
    let (_, b) = train_blobs(&dir, "b", &[]);
    for f in ["metrics.csv", "model.json"] {
        assert_eq!(
            fs::read(a.join(f)).unwrap(),
            fs::read(b.join(f)).unwrap(),
            "{f}"
        );
    }
}

#[test]
fn lambda_out_of_range_is_a_usage_error() {
    let dir = TempDir::new().unwrap();
    let (o, out) = train_blobs(&dir, "bad", &["--lambda", "1.5"]);
    assert_eq!(code(&o), 2);
    assert!(!out.exists(), "no work before the usage check");
    assert_eq!(code(&ratspn(&["train", "--bogus"])), 2);
}

#[test]
fn missing_and_malformed_data_are_data_errors() {
    let dir = TempDir::new().unwrap();
    let out = dir.path().join("o");
    let o = ratspn(&[
        "train",
        "--data",
        "idx:/definitely/not/here",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let ragged = dir.path().join("ragged.csv");
    fs::write(&ragged, "1,2,0\n3,1\n").unwrap();
    let o = ratspn(&[
        "train",
        "--data",
        &csv(&ragged),
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stderr).contains("row 2"));
}

#[test]
fn non_finite_objective_is_a_numeric_failure() {
    let dir = TempDir::new().unwrap();
    let huge = dir.path().join("huge.csv");
    fs::write(&huge, "1e200,0,0\n-1e200,0,1\n").unwrap();
    let out = dir.path().join("o");
    let o = ratspn(&[
        "train",
        "--data",
        &csv(&huge),
        "--scale",
        "none",
        "--depth",
        "1",
        "--epochs",
        "1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 4, "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn eval_and_sweep_agree_at_zero_missing() {
    let dir = TempDir::new().unwrap();
    let (_, run) = train_blobs(&dir, "run", &[]);
    let test = blobs(dir.path(), "test.csv", 20);
    let model = run.join("model.json");
    let m = model.to_str().unwrap();
    let eval_out = dir.path().join("eval");
    let o = ratspn(&[
        "eval",
        "--model",
        m,
        "--data",
        &csv(&test),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let eval = read_csv_rows(&eval_out.join("eval.csv"));

    let emp_out = dir.path().join("eval-emp");
    let o = ratspn(&[
        "eval",
        "--model",
        m,
        "--data",
        &csv(&test),
        "--prior",
        "empirical",
        "--out",
        emp_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let emp = read_csv_rows(&emp_out.join("eval.csv"));
    // Balanced labels make the empirical prior uniform up to rounding.
    assert_eq!(eval[0][1], emp[0][1]);

    let sweep_out = dir.path().join("sweep");
    let o = ratspn(&[
        "sweep-missing",
        "--model",
        m,
        "--data",
        &csv(&test),
        "--p",
        "0,0.5,0.99",
        "--out",
        sweep_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let sweep = read_csv_rows(&sweep_out.join("sweep_missing.csv"));
    assert_eq!(sweep.len(), 3);
    assert_eq!(sweep[0][1], eval[0][1]);
    assert_eq!(sweep[2][0], "0.99");

    let empty = dir.path().join("empty.csv");
    fs::write(&empty, "").unwrap();
    let o = ratspn(&[
        "eval",
        "--model",
        m,
        "--data",
        &csv(&empty),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
    let wide = dir.path().join("wide.csv");
    fs::write(&wide, "1,2,3,4,5,6,0\n").unwrap();
    let o = ratspn(&[
        "eval",
        "--model",
        m,
        "--data",
        &csv(&wide),
        "--out",
        eval_out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 3);
}

#[test]
fn ood_outputs_conserve_counts() {
    let dir = TempDir::new().unwrap();
    let (_, run) = train_blobs(&dir, "run", &[]);
    let test = blobs(dir.path(), "test.csv", 30);
    let out = dir.path().join("ood");
    let model = run.join("model.json");
    let o = ratspn(&[
        "ood",
        "--model",
        model.to_str().unwrap(),
        "--in-domain",
        &csv(&test),
        "--out-domain",
        &csv(&test),
        "--bins",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["auroc"], 0.5);
    let hist = read_csv_rows(&out.join("histogram.csv"));
    assert_eq!(hist.len(), 7);
    let total = |col: usize| {
        hist.iter()
            .map(|r| r[col].parse::<usize>().unwrap())
            .sum::<usize>()
    };
    assert_eq!((total(2), total(3)), (30, 30));
    assert_eq!(read_csv_rows(&out.join("scores.csv")).len(), 60);

    let o = ratspn(&[
        "ood",
        "--model",
        model.to_str().unwrap(),
        "--in-domain",
        &csv(&test),
        "--out-domain",
        "noise:25,1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0);
    let summary: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("summary.json")).unwrap()).unwrap();
    assert_eq!(summary["out_domain_samples"], 25);
}

#[test]
fn warm_start_and_lambda_sweep() {
    let dir = TempDir::new().unwrap();
    let (_, run) = train_blobs(&dir, "run", &[]);
    let model = run.join("model.json");
    let (o, warm) = train_blobs(
        &dir,
        "warm",
        &["--warm-start", model.to_str().unwrap(), "--lambda", "0.2"],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv_rows(&warm.join("metrics.csv"));
    assert_eq!(rows.first().unwrap()[0], "5");
    assert_eq!(rows.last().unwrap()[0], "8");
    let saved: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(warm.join("model.json")).unwrap()).unwrap();
    assert_eq!(saved["provenance"]["epochs"], 8);

    let train = blobs(dir.path(), "train.csv", 40);
    let test = blobs(dir.path(), "test.csv", 20);
    let out = dir.path().join("sweep");
    let o = ratspn(&[
        "sweep-lambda",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &csv(&train),
        "--test",
        &csv(&test),
        "--lambdas",
        "0,1",
        "--epochs",
        "2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let rows = read_csv_rows(&out.join("lambda_sweep.csv"));
    assert_eq!(rows.len(), 2);
    assert!(Path::new(&rows[1][5]).exists());
    let o = ratspn(&[
        "sweep-lambda",
        "--model",
        model.to_str().unwrap(),
        "--data",
        &csv(&train),
        "--test",
        &csv(&test),
        "--lambdas",
        "0,2",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code(&o), 2);
}
