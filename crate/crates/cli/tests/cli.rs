use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hnne(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hnne"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn p(dir: &Path, name: &str) -> PathBuf {
    dir.join(name)
}

fn s(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Fits the example blobs and returns (dir, data, labels, embedding, model).
fn fitted_blobs(n: usize) -> (tempfile::TempDir, PathBuf, PathBuf, PathBuf, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "data.csv");
    let labels = p(dir.path(), "labels.txt");
    let emb = p(dir.path(), "emb.csv");
    let model = p(dir.path(), "m.hnne");
    let spec = format!("blobs,n={n},dim=16,clusters=6");
    let o = hnne(&["synth", "--spec", &spec, "--out", s(&data), "--labels-out", s(&labels)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let o = hnne(&["fit", "--input", s(&data), "--dim", "2", "--out", s(&emb), "--model", s(&model)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    (dir, data, labels, emb, model)
}

#[test]
fn fit_synthetic_writes_outputs_and_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let emb = p(dir.path(), "emb.csv");
    let model = p(dir.path(), "m.hnne");
    let args = [
        "fit", "--input", "blobs", "--synthetic", "blobs,n=5000,dim=64,clusters=10",
        "--dim", "2", "--out", s(&emb), "--model", s(&model),
    ];
    let o = hnne(&args);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    assert!(emb.exists() && model.exists());
    let manifest: Value =
        serde_json::from_str(&fs::read_to_string(p(dir.path(), "emb.csv.json")).unwrap()).unwrap();
    let levels = manifest["hierarchy_levels"].as_array().unwrap();
    assert!(levels.len() >= 2, "{manifest}");
    assert_eq!(manifest["rows"], 5000);
    assert_eq!(manifest["params"]["seed"], 0);
    assert_eq!(manifest["params"]["init"], "pca-centroids");
    assert!(manifest["wall_clock_seconds"].as_f64().unwrap() >= 0.0);

    let first = fs::read(&emb).unwrap();
    let o = hnne(&args);
    assert_eq!(code(&o), 0);
    assert_eq!(fs::read(&emb).unwrap(), first, "same seed must give identical output");
}

#[test]
fn thread_count_does_not_change_output() {
    let dir = tempfile::tempdir().unwrap();
    let run = |threads: &str, name: &str| {
        let out = p(dir.path(), name);
        let o = hnne(&[
            "--threads", threads, "fit", "--synthetic", "blobs,n=3000,dim=32,clusters=5",
            "--dim", "3", "--out", s(&out),
        ]);
        assert_eq!(code(&o), 0, "{}", stderr(&o));
        fs::read(out).unwrap()
    };
    assert_eq!(run("1", "a.csv"), run("3", "b.csv"));
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "e.csv");
    let o = hnne(&["fit", "--synthetic", "blobs,n=100", "--dim", "0", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
    let o = hnne(&["fit", "--dim", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = hnne(&["fit", "--synthetic", "blobs,n=100", "--dim", "2", "--shrink", "0.9", "--guarantee", "--out", s(&out)]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = hnne(&["frobnicate"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn runtime_errors_exit_1() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "e.csv");
    let o = hnne(&["fit", "--input", s(&p(dir.path(), "missing.csv")), "--dim", "2", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    let bad = p(dir.path(), "bad.csv");
    fs::write(&bad, "1,2\n3,oops\n").unwrap();
    let o = hnne(&["fit", "--input", s(&bad), "--dim", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("line 2"), "{}", stderr(&o));
}

#[test]
fn transform_round_trip_and_errors() {
    let (dir, data, _, emb, model) = fitted_blobs(600);
    let out = p(dir.path(), "t.csv");
    let o = hnne(&["transform", "--model", s(&model), "--input", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let t = fs::read_to_string(&out).unwrap();
    assert_eq!(t.lines().count(), 600);
    assert_eq!(t.lines().next().unwrap().split(',').count(), 2);
    assert_eq!(fs::read_to_string(&emb).unwrap().lines().count(), 600);

    let o = hnne(&["transform", "--model", s(&p(dir.path(), "nope.hnne")), "--input", s(&data), "--out", s(&out)]);
    assert_eq!(code(&o), 1);

    let empty = p(dir.path(), "empty.csv");
    fs::write(&empty, "").unwrap();
    let o = hnne(&["transform", "--model", s(&model), "--input", s(&empty), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("no data rows"), "{}", stderr(&o));

    let narrow = p(dir.path(), "narrow.csv");
    fs::write(&narrow, "1,2,3\n").unwrap();
    let o = hnne(&["transform", "--model", s(&model), "--input", s(&narrow), "--out", s(&out)]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("columns"), "{}", stderr(&o));
}

#[test]
fn metrics_report_keys_and_identity() {
    let (dir, data, labels, emb, _) = fitted_blobs(600);
    let o = hnne(&["metrics", "--high", s(&data), "--low", s(&data), "--metrics", "trust"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let stdout = String::from_utf8(o.stdout).unwrap();
    assert_eq!(stdout.lines().count(), 1);
    let v: Value = serde_json::from_str(&stdout).unwrap();
    assert_eq!(v["trustworthiness"], 1.0);

    let o = hnne(&["metrics", "--high", s(&data), "--low", s(&emb), "--labels", s(&labels), "--knn-k", "1,5"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    let mut keys: Vec<&str> = v.as_object().unwrap().keys().map(String::as_str).collect();
    keys.sort();
    assert_eq!(keys, ["cta", "knn_accuracy", "runtime_seconds", "trustworthiness", "trustworthiness_k"]);
    let knn = v["knn_accuracy"].as_array().unwrap();
    assert_eq!(knn.len(), 2);
    assert_eq!(knn[0]["k"], 1);
    assert_eq!(knn[0]["folds"], 10);
    assert!(knn[0]["accuracy"].as_f64().unwrap() > 0.95);
    assert!(v["cta"].as_f64().unwrap() >= 0.0);
    drop(dir);
}

#[test]
fn metrics_label_requirements_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let data = p(dir.path(), "d.csv");
    let labels = p(dir.path(), "l.txt");
    let rows: String = (0..40).map(|i| format!("{},{}\n", i % 2 * 100 + i, i)).collect();
    fs::write(&data, rows).unwrap();
    fs::write(&labels, (0..40).map(|i| format!("{}\n", i % 2)).collect::<String>()).unwrap();
    let o = hnne(&["metrics", "--high", s(&data), "--low", s(&data), "--labels", s(&labels), "--metrics", "cta"]);
    assert_eq!(code(&o), 2, "{}", stderr(&o));
    let o = hnne(&["metrics", "--high", s(&data), "--low", s(&data), "--metrics", "knn"]);
    assert_eq!(code(&o), 2);
    // without an explicit list, CTA is left out for two classes
    let o = hnne(&["metrics", "--high", s(&data), "--low", s(&data), "--labels", s(&labels), "--knn-k", "1"]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let v: Value = serde_json::from_slice(&o.stdout).unwrap();
    assert!(v["cta"].is_null());
}

#[test]
fn plot_writes_svg() {
    let dir = tempfile::tempdir().unwrap();
    let emb = p(dir.path(), "e.csv");
    fs::write(&emb, "0,0\n1,1\n2,0.5\n").unwrap();
    let svg = p(dir.path(), "p.svg");
    let o = hnne(&["plot", "--input", s(&emb), "--out", s(&svg)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&svg).unwrap();
    assert_eq!(text.matches("<circle").count(), 3);
    let three = p(dir.path(), "3d.csv");
    fs::write(&three, "0,0,0\n1,1,1\n").unwrap();
    let o = hnne(&["plot", "--input", s(&three), "--out", s(&svg)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn bench_tables() {
    let o = hnne(&["bench"]);
    assert_eq!(code(&o), 0);
    let out = String::from_utf8(o.stdout).unwrap();
    assert_eq!(out.lines().count(), 1, "header only: {out}");

    let dir = tempfile::tempdir().unwrap();
    let manifest = p(dir.path(), "bench.json");
    let o = hnne(&["bench", "blobs,n=500,dim=8,clusters=4", "--manifest", s(&manifest)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let out = String::from_utf8(o.stdout).unwrap();
    let row: Vec<&str> = out.lines().nth(1).unwrap().split('\t').collect();
    assert_eq!(row[1], "500");
    assert_eq!(row[4], "3");
    let v: Value = serde_json::from_str(&fs::read_to_string(&manifest).unwrap()).unwrap();
    assert_eq!(v["results"][0]["seconds"].as_array().unwrap().len(), 3);
    assert!(v["results"][0]["std_seconds"].as_f64().unwrap() >= 0.0);
}

#[test]
fn labels_export_levels() {
    let dir = tempfile::tempdir().unwrap();
    let out = p(dir.path(), "lv.txt");
    let o = hnne(&["labels", "--synthetic", "square,n=2000", "--level", "1", "--out", s(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let l: Vec<usize> = fs::read_to_string(&out).unwrap().lines().map(|x| x.parse().unwrap()).collect();
    assert_eq!(l.len(), 2000);
    let groups = l.iter().max().unwrap() + 1;
    assert!((3..2000 / 3).contains(&groups), "{groups}");
    let o = hnne(&["labels", "--synthetic", "square,n=2000", "--level", "99", "--out", s(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn synth_and_raw_format() {
    let dir = tempfile::tempdir().unwrap();
    let raw = p(dir.path(), "x.f32");
    let o = hnne(&["synth", "--spec", "square,n=100", "--seed", "3", "--out", s(&raw)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let bytes = fs::read(&raw).unwrap();
    assert_eq!(&bytes[..4], b"HNND");
    assert_eq!(bytes.len(), 12 + 100 * 2 * 4);
    let o = hnne(&["synth", "--spec", "square,n=100", "--out", s(&raw), "--labels-out", s(&p(dir.path(), "l"))]);
    assert_eq!(code(&o), 2);
    let emb = p(dir.path(), "e.csv");
    let o = hnne(&["fit", "--input", s(&raw), "--dim", "1", "--out", s(&emb)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
}
