use std::fs;
use std::path::Path;

use dinids::bundle::{ModelBundle, Provenance};
use dinids::config::PipelineConfig;
use dinids::dataset::LabeledSet;
use dinids::pipeline::{train_pipeline, PipelineKind};
use dinids::synthetic::{shifted_domains, ShiftConfig};
use dinids::Error;

fn fixture() -> (LabeledSet, LabeledSet) {
    let d = shifted_domains(&ShiftConfig {
        n_source: 100,
        n_target: 100,
        seed: 7,
        ..ShiftConfig::default()
    })
    .unwrap();
    (d.source, d.target)
}

fn bundle(kind: PipelineKind) -> ModelBundle {
    let (src, tgt) = fixture();
    let mut cfg = PipelineConfig::synthetic();
    cfg.kind = kind;
    cfg.settings.dann.epochs = 5;
    let pipeline = train_pipeline(kind, &src, Some(&tgt.x), &cfg.settings).unwrap();
    ModelBundle {
        pipeline,
        provenance: Provenance::new(cfg.hash(), cfg.seeds(), Vec::new()),
        config: cfg.canonical(),
    }
}

fn files(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().to_string_lossy().into_owned(), fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

#[test]
fn reload_reproduces_predictions_bit_for_bit() {
    let (_, tgt) = fixture();
    for kind in PipelineKind::ALL {
        let b = bundle(kind);
        let dir = tempfile::tempdir().unwrap();
        b.save(dir.path()).unwrap();
        let back = ModelBundle::load(dir.path()).unwrap();
        assert_eq!(back.provenance, b.provenance, "{kind}");
        assert_eq!(back.config, b.config);
        assert_eq!(back.pipeline.predict(&tgt.x).unwrap(), b.pipeline.predict(&tgt.x).unwrap());
        let bits = |s: Option<Vec<f64>>| s.map(|v| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        assert_eq!(
            bits(back.pipeline.scores(&tgt.x).unwrap()),
            bits(b.pipeline.scores(&tgt.x).unwrap()),
            "{kind}"
        );
    }
}

#[test]
fn saving_twice_gives_identical_bytes() {
    let b = bundle(PipelineKind::DiNids);
    let one = tempfile::tempdir().unwrap();
    let two = tempfile::tempdir().unwrap();
    b.save(one.path()).unwrap();
    b.save(two.path()).unwrap();
    assert_eq!(files(one.path()), files(two.path()));

    // retraining from the same config reproduces the bundle as well
    let again = tempfile::tempdir().unwrap();
    bundle(PipelineKind::DiNids).save(again.path()).unwrap();
    assert_eq!(files(one.path()), files(again.path()));
}

#[test]
fn every_artifact_carries_the_config_hash() {
    let b = bundle(PipelineKind::DiNids);
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let hash = b.provenance.config_hash.as_bytes();
    let all = files(dir.path());
    assert!(all.len() > 5);
    for (name, bytes) in all {
        assert!(bytes.windows(hash.len()).any(|w| w == hash), "{name} lacks the hash");
    }
}

#[test]
fn tampered_weights_fail_validation() {
    let b = bundle(PipelineKind::DiNids);
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    let path = dir.path().join("osvm.txt");
    let text = fs::read_to_string(&path).unwrap();
    let (header, body) = text.split_once("end_header\n").unwrap();
    let mut lines: Vec<String> = body.lines().map(String::from).collect();
    // scale the first alpha so the alphas no longer sum to one
    let first = lines.iter().position(|l| !l.starts_with('#')).unwrap();
    let (alpha, rest) = lines[first].split_once(',').unwrap();
    let bumped = alpha.parse::<f64>().unwrap() * 3.0;
    lines[first] = format!("{bumped},{rest}");
    fs::write(&path, format!("{header}end_header\n{}\n", lines.join("\n"))).unwrap();
    match ModelBundle::load(dir.path()) {
        Err(Error::Validation(msg)) => assert!(!msg.is_empty()),
        other => panic!("expected a validation error, got {other:?}"),
    }
}

#[test]
fn missing_tensor_is_reported() {
    let b = bundle(PipelineKind::FeedForward);
    let dir = tempfile::tempdir().unwrap();
    b.save(dir.path()).unwrap();
    fs::remove_file(dir.path().join("g_c.0.weights.tensor")).unwrap();
    assert!(ModelBundle::load(dir.path()).is_err());
}
