use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use dinids::bundle::ModelBundle;
use dinids::dataset::{write_matrix, FeatureMatrix};

fn dinids(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dinids"))
        .args(args)
        .current_dir(dir)
        .env_remove("DINIDS_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("exited normally")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn stdout(out: &Output) -> String {
    String::from_utf8_lossy(&out.stdout).into_owned()
}

/// Synthetic pair plus a short-training config named `quick.conf`.
fn workspace(extra: &str) -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    let out = dinids(dir.path(), &["synth", "--out", "syn", "--rows", "300", "--seed", "2"]);
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    let mut conf = fs::read_to_string(dir.path().join("syn/synthetic.conf")).unwrap();
    conf.push_str("dann.epochs=20\n");
    conf.push_str(extra);
    fs::write(dir.path().join("syn/quick.conf"), conf).unwrap();
    dir
}

fn train(dir: &Path, out: &str, extra: &[&str]) -> PathBuf {
    let mut args = vec!["train", "--config", "syn/quick.conf", "--out", out];
    args.extend_from_slice(extra);
    let res = dinids(dir, &args);
    assert_eq!(code(&res), 0, "{}", stderr(&res));
    dir.join(out).join("bundle")
}

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut v: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    v.sort();
    v
}

#[test]
fn missing_dataset_exits_with_input_error() {
    let dir = tempfile::tempdir().unwrap();
    let out = dinids(dir.path(), &["ingest", "no-such-flows.csv"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("no-such-flows.csv"), "{}", stderr(&out));
}

#[test]
fn data_dir_fallback_resolves_relative_names() {
    let dir = workspace("");
    let out = Command::new(env!("CARGO_BIN_EXE_dinids"))
        .args(["ingest", "source.csv", "--out", "ing"])
        .current_dir(dir.path())
        .env("DINIDS_DATA_DIR", dir.path().join("syn"))
        .output()
        .unwrap();
    assert_eq!(code(&out), 0, "{}", stderr(&out));
    assert!(stdout(&out).contains("flows           300"));
    assert!(dir.path().join("ing/source.matrix").exists());
}

#[test]
fn empty_or_broken_ledger_exits_with_ledger_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.jsonl"), "\n").unwrap();
    fs::write(dir.path().join("broken.jsonl"), "{not json}\n").unwrap();
    for ledger in ["empty.jsonl", "broken.jsonl", "absent.jsonl"] {
        let out = dinids(dir.path(), &["report", "--ledger", ledger]);
        assert_eq!(code(&out), 3, "{ledger}: {}", stderr(&out));
    }
}

#[test]
fn train_eval_report_embed_flow() {
    let dir = workspace("");
    let d = dir.path();
    train(d, "run", &[]);

    let own = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "syn/source.csv", "--direction", "self", "--out", "ev"]);
    assert_eq!(code(&own), 0, "{}", stderr(&own));
    let cross = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "syn/target.csv", "--direction", "cross", "--out", "ev"]);
    assert_eq!(code(&cross), 0, "{}", stderr(&cross));
    let wrong = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "syn/target.csv", "--direction", "self", "--out", "ev"]);
    assert_eq!(code(&wrong), 2);

    let ledger = fs::read_to_string(d.join("ev/ledger.jsonl")).unwrap();
    let lines: Vec<&str> = ledger.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].contains("\"direction\":\"self\""));
    assert!(lines[1].contains("\"direction\":\"cross\""));
    let metrics = fs::read_to_string(d.join("ev/metrics-DI-NIDS-source-target.json")).unwrap();
    let entry: serde_json::Value = serde_json::from_str(&metrics).unwrap();
    let f1 = entry["record"]["metrics"]["f1"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&f1));

    let hash = ModelBundle::load(d.join("run/bundle")).unwrap().provenance.config_hash;
    let rep = dinids(d, &["report", "--ledger", "ev/ledger.jsonl", "--reference", "--out", "rep"]);
    assert_eq!(code(&rep), 0, "{}", stderr(&rep));
    assert!(stdout(&rep).contains("Degradation"));
    let text = fs::read_to_string(d.join("rep/report.txt")).unwrap();
    assert!(text.starts_with(&format!("# config_hash={hash}")));
    assert!(fs::read_to_string(d.join("rep/report.json")).unwrap().contains(&hash));

    let emb = dinids(d, &["embed", "--bundle", "run/bundle", "--source", "syn/source.csv", "--target", "syn/target.csv", "--sample", "200", "--out", "emb"]);
    assert_eq!(code(&emb), 0, "{}", stderr(&emb));
    for name in ["embed-raw.csv", "embed-features.csv"] {
        let csv = fs::read_to_string(d.join("emb").join(name)).unwrap();
        let mut lines = csv.lines();
        assert!(lines.next().unwrap().contains(&hash));
        assert_eq!(lines.next().unwrap(), "x,y,domain");
        assert_eq!(lines.count(), 200);
    }
}

#[test]
fn same_config_gives_identical_bundles() {
    let dir = workspace("");
    let a = train(dir.path(), "a", &[]);
    let b = train(dir.path(), "b", &[]);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let c = train(dir.path(), "c", &["--seed", "9"]);
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
}

#[test]
fn zero_reversal_weight_matches_feedforward() {
    let dir = workspace("");
    let d = dir.path();
    fs::write(
        d.join("syn/ff.conf"),
        fs::read_to_string(d.join("syn/quick.conf")).unwrap() + "pipeline.kind=FeedForward\n",
    )
    .unwrap();
    fs::write(
        d.join("syn/dann.conf"),
        fs::read_to_string(d.join("syn/quick.conf")).unwrap() + "pipeline.kind=DANN\n",
    )
    .unwrap();
    for (conf, out) in [("syn/ff.conf", "ff"), ("syn/dann.conf", "dann")] {
        let res = dinids(d, &["train", "--config", conf, "--out", out, "--lambda-fixed", "0"]);
        assert_eq!(code(&res), 0, "{}", stderr(&res));
    }
    let ff = ModelBundle::load(d.join("ff/bundle")).unwrap().pipeline.dann.unwrap();
    let dann = ModelBundle::load(d.join("dann/bundle")).unwrap().pipeline.dann.unwrap();
    assert_eq!(ff.feature_extractor, dann.feature_extractor);
    assert_eq!(ff.label_classifier, dann.label_classifier);
}

#[test]
fn tampered_bundle_is_rejected_before_scoring() {
    let dir = workspace("");
    let d = dir.path();
    let bundle = train(d, "run", &[]);
    let path = bundle.join("osvm.txt");
    let text = fs::read_to_string(&path).unwrap();
    let (head, body) = text.split_once("end_header\n").unwrap();
    let mut lines: Vec<String> = body.lines().map(String::from).collect();
    let k = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let (alpha, rest) = lines[k].split_once(',').unwrap();
    lines[k] = format!("{},{rest}", alpha.parse::<f64>().unwrap() + 0.5);
    fs::write(&path, format!("{head}end_header\n{}\n", lines.join("\n"))).unwrap();

    let out = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "syn/source.csv", "--out", "ev"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("validation"), "{}", stderr(&out));
    assert!(!d.join("ev").exists());
}

#[test]
fn feature_width_change_is_reported_as_schema_drift() {
    let dir = workspace("");
    let d = dir.path();
    train(d, "run", &[]);
    let x = FeatureMatrix::with_width(vec![0.5; 38 * 4], 38, "f").unwrap();
    write_matrix(d.join("narrow.matrix"), &x).unwrap();
    fs::write(d.join("narrow.labels"), "Benign\nBenign\nDoS\nBenign\n").unwrap();
    let out = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "narrow.matrix", "--out", "ev"]);
    assert_eq!(code(&out), 2);
    assert!(stderr(&out).contains("schema drift"), "{}", stderr(&out));
}

#[test]
fn ingested_cache_scores_like_the_csv() {
    let dir = workspace("");
    let d = dir.path();
    train(d, "run", &[]);
    let ing = dinids(d, &["ingest", "syn/target.csv", "--out", "ing"]);
    assert_eq!(code(&ing), 0, "{}", stderr(&ing));
    let summary = fs::read_to_string(d.join("ing/target.summary.json")).unwrap();
    assert!(summary.contains("config_hash"));

    let from_csv = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "syn/target.csv", "--out", "a"]);
    let from_cache = dinids(d, &["eval", "--bundle", "run/bundle", "--dataset", "ing/target.matrix", "--out", "b"]);
    assert_eq!(code(&from_cache), 0, "{}", stderr(&from_cache));
    let f1 = |o: &Output| stdout(o).lines().next().unwrap().split("F1").nth(1).unwrap().to_string();
    assert_eq!(f1(&from_csv), f1(&from_cache));
}
