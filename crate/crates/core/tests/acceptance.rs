//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! non-zero if any required criterion fails.

mod common;

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use common::*;
use dinids::bundle::{ModelBundle, Provenance};
use dinids::config::{PipelineConfig, DATA_DIR_ENV};
use dinids::dann::{DannModel, DomainLabel, LambdaMode};
use dinids::dataset::{self, FeatureMatrix, LabeledSet, LoadOptions, Schema, MODEL_FEATURES};
use dinids::eval::{
    self, build_comparison_report, confusion, degradation, metrics, pca_embed, separation_ratio, ProtocolConfig,
};
use dinids::nn::grl_backward;
use dinids::osvm::{self, OsvmConfig};
use dinids::pipeline::{train_pipeline, PipelineKind};
use dinids::synthetic::{shifted_domains, ShiftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

enum Outcome {
    Pass(String),
    Fail(String),
    Skip(String),
}

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Outcome::Pass(detail)
    } else {
        Outcome::Fail(detail)
    }
}

fn random_batch(rng: &mut ChaCha8Rng, n: usize) -> Vec<Vec<f64>> {
    (0..n)
        .map(|_| (0..MODEL_FEATURES).map(|_| rng.gen::<f64>()).collect())
        .collect()
}

fn gradient_correctness() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut worst: f64 = 0.0;
    for _ in 0..25 {
        let model_seed = rng.gen();
        let mut model = DannModel::new(model_seed, LambdaMode::Fixed(1.0));
        let n = rng.gen_range(1..=6);
        let rows = random_batch(&mut rng, n);
        let refs: Vec<&[f64]> = rows.iter().map(Vec::as_slice).collect();
        let labels: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let doms: Vec<DomainLabel> = (0..n)
            .map(|_| if rng.gen_bool(0.5) { DomainLabel::Source } else { DomainLabel::Target })
            .collect();

        let lg = model.label_gradients(&refs, &labels, 0.0, &mut rng).unwrap();
        let ly = |m: &DannModel| m.mean_label_loss(&refs, &labels).unwrap();
        let nc = numeric_gradient(&mut model, |m| &mut m.label_classifier, ly);
        let nf = numeric_gradient(&mut model, |m| &mut m.feature_extractor, ly);
        worst = worst
            .max(relative_error(&flat(&lg.label_classifier), &nc))
            .max(relative_error(&flat(&lg.feature_extractor), &nf));

        let dg = model.domain_gradients(&refs, &doms, 1.0, 0.0, &mut rng).unwrap();
        let ld = |m: &DannModel| m.mean_domain_loss(&refs, &doms).unwrap();
        let nd = numeric_gradient(&mut model, |m| &mut m.domain_classifier, ld);
        let nfd: Vec<f64> = numeric_gradient(&mut model, |m| &mut m.feature_extractor, ld)
            .into_iter()
            .map(|g| -g)
            .collect();
        worst = worst
            .max(relative_error(&flat(&dg.domain_classifier), &nd))
            .max(relative_error(&flat(&dg.feature_extractor), &nfd));
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst < 1e-4 && secs < 10.0,
        format!("25 networks, worst relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn grl_identity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut bad = 0;
    for _ in 0..1000 {
        let len = rng.gen_range(1..64);
        let g: Vec<f64> = (0..len).map(|_| rng.gen_range(-1e3..1e3)).collect();
        let lambda = rng.gen_range(0.0..5.0);
        let out = grl_backward(&g, lambda);
        if out.len() != g.len() || out.iter().zip(&g).any(|(o, v)| *o != -lambda * v) {
            bad += 1;
        }
    }
    check(bad == 0, format!("1000 pairs, {bad} mismatches"))
}

fn gaussian(rng: &mut ChaCha8Rng, n: usize, d: usize) -> FeatureMatrix {
    let values = (0..n * d).map(|_| StandardNormal.sample(rng)).collect();
    FeatureMatrix::with_width(values, d, "x").unwrap()
}

fn osvm_oracle() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut worst_obj: f64 = 0.0;
    let mut kkt_violations = 0;
    for case in 0..50 {
        let n = rng.gen_range(3..=20);
        let d = rng.gen_range(1..=4);
        let nu = rng.gen_range(0.05..0.95);
        let gamma = rng.gen_range(0.05..3.0);
        let x = gaussian(&mut rng, n, d);
        let cfg = OsvmConfig {
            nu,
            gamma: Some(gamma),
            tolerance: 1e-9,
            seed: case,
            ..OsvmConfig::default()
        };
        let (model, stats) = osvm::train_osvm_with_stats(&x, &cfg).unwrap();
        let (oracle, _) = qp_oracle(&gram(&x, gamma), 1.0 / (nu * n as f64));
        worst_obj = worst_obj.max((stats.objective - oracle).abs());

        let ub = model.upper_bound();
        let sum: f64 = model.alphas.iter().sum();
        if (sum - 1.0).abs() > 1e-9 || model.alphas.iter().any(|&a| a <= 0.0 || a > ub + 1e-12) {
            kkt_violations += 1;
        }
        let svs: Vec<&[f64]> = model.support_vectors.rows().collect();
        let tol = 1e-6;
        for row in x.rows() {
            let dec = model.decision_function(row).unwrap();
            let ok = match svs.iter().position(|s| *s == row) {
                None => dec >= -tol,
                Some(k) if model.alphas[k] < ub - 1e-9 => dec.abs() <= tol,
                Some(_) => dec <= tol,
            };
            if !ok {
                kkt_violations += 1;
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    check(
        worst_obj <= 1e-6 && kkt_violations == 0 && secs < 30.0,
        format!("50 instances, worst objective gap {worst_obj:.2e}, {kkt_violations} KKT violations, {secs:.1}s"),
    )
}

fn nu_property() -> Outcome {
    let mut details = Vec::new();
    let mut ok = true;
    for seed in 0..5 {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = gaussian(&mut rng, 1000, 2);
        let cfg = OsvmConfig {
            nu: 0.1,
            seed,
            ..OsvmConfig::default()
        };
        let model = osvm::train_osvm(&x, &cfg).unwrap();
        let scores = model.decision_batch(&x).unwrap();
        let outliers = scores.iter().filter(|&&s| s < 0.0).count() as f64 / 1000.0;
        let sv = model.alphas.len() as f64 / 1000.0;
        ok &= (0.05..=0.15).contains(&outliers) && sv >= 0.08;
        details.push(format!("{outliers:.3}/{sv:.3}"));
    }
    check(ok, format!("outlier/SV fractions per seed {}", details.join(" ")))
}

/// Per-seed results of the synthetic shift experiment.
#[derive(serde::Serialize)]
struct ShiftRun {
    seed: u64,
    ff_source: (usize, usize, usize, usize, f64),
    ff_target: (usize, usize, usize, usize, f64),
    dinids_source: f64,
    dinids_target: f64,
    raw_separation: f64,
    feature_separation: f64,
    bundle_digest: String,
}

fn digest_dir(dir: &Path) -> String {
    let mut entries: Vec<PathBuf> = std::fs::read_dir(dir).unwrap().map(|e| e.unwrap().path()).collect();
    entries.sort();
    let mut all = Vec::new();
    for p in entries {
        all.extend_from_slice(p.file_name().unwrap().to_string_lossy().as_bytes());
        all.extend(std::fs::read(&p).unwrap());
    }
    dinids::config::hex_sha256(&all)
}

fn shift_run(seed: u64) -> ShiftRun {
    let data = shifted_domains(&ShiftConfig {
        seed,
        ..ShiftConfig::default()
    })
    .unwrap();
    let (src, tgt) = (data.source, data.target);
    let mut cfg = PipelineConfig::synthetic();
    cfg.data_seed = seed;
    cfg.set_seed(seed);

    let ff = train_pipeline(PipelineKind::FeedForward, &src, Some(&tgt.x), &cfg.settings).unwrap();
    // probe oracle: hand-counted F1 from the raw predictions
    let probe = |set: &LabeledSet| naive_f1(&set.y, &ff.predict(&set.x).unwrap());
    let ff_source = probe(&src);
    let ff_target = probe(&tgt);
    let lib_target = metrics(&confusion(&tgt.y, &ff.predict(&tgt.x).unwrap()).unwrap()).f1;
    assert!((lib_target - ff_target.4).abs() < 1e-12, "library and probe F1 disagree");

    cfg.kind = PipelineKind::DiNids;
    let di = train_pipeline(PipelineKind::DiNids, &src, Some(&tgt.x), &cfg.settings).unwrap();
    let f1 = |set: &LabeledSet| naive_f1(&set.y, &di.predict(&set.x).unwrap()).4;

    let xs = dataset::apply_scaler(&di.scaler, &src.x).unwrap();
    let xt = dataset::apply_scaler(&di.scaler, &tgt.x).unwrap();
    let all = xs.vstack(&xt).unwrap();
    let doms: Vec<DomainLabel> = (0..all.n_rows())
        .map(|i| if i < xs.n_rows() { DomainLabel::Source } else { DomainLabel::Target })
        .collect();
    let embed = |x: &FeatureMatrix| separation_ratio(&pca_embed(x, &doms, 2, 1000, seed).unwrap()).unwrap();
    let raw_separation = embed(&all);
    let feature_separation = embed(&di.dann.as_ref().unwrap().extract_features(&all).unwrap());

    let dir = tempfile::tempdir().unwrap();
    ModelBundle {
        pipeline: di.clone(),
        provenance: Provenance::new(cfg.hash(), cfg.seeds(), Vec::new()),
        config: cfg.canonical(),
    }
    .save(dir.path())
    .unwrap();

    ShiftRun {
        seed,
        ff_source,
        ff_target,
        dinids_source: f1(&src),
        dinids_target: f1(&tgt),
        raw_separation,
        feature_separation,
        bundle_digest: digest_dir(dir.path()),
    }
}

fn shift_report() -> (Vec<ShiftRun>, f64) {
    let start = Instant::now();
    let runs: Vec<ShiftRun> = (0..3).map(shift_run).collect();
    (runs, start.elapsed().as_secs_f64())
}

fn synthetic_shift(runs: &[ShiftRun], secs: f64) -> Outcome {
    let mut ok = secs < 300.0;
    let mut parts = Vec::new();
    for r in runs {
        let drop = r.ff_source.4 - r.ff_target.4;
        let gap = r.dinids_source - r.dinids_target;
        ok &= drop >= 0.25 && gap <= 0.10;
        parts.push(format!("seed {}: FF drop {drop:.3}, DI-NIDS gap {gap:.3}", r.seed));
    }
    check(ok, format!("{} ({secs:.0}s)", parts.join("; ")))
}

fn drift_reduction(runs: &[ShiftRun]) -> Outcome {
    let ok = runs.iter().all(|r| r.feature_separation < r.raw_separation);
    let parts: Vec<String> = runs
        .iter()
        .map(|r| format!("seed {}: raw {:.3} -> features {:.3}", r.seed, r.raw_separation, r.feature_separation))
        .collect();
    check(ok, parts.join("; "))
}

fn find_dataset(dir: &Path, key: &str) -> Option<PathBuf> {
    std::fs::read_dir(dir).ok()?.filter_map(|e| e.ok()).map(|e| e.path()).find(|p| {
        let name = p.file_name().unwrap_or_default().to_string_lossy().to_ascii_lowercase();
        name.contains(key) && name.ends_with(".csv")
    })
}

fn desk_scale() -> Outcome {
    let Some(dir) = std::env::var_os(DATA_DIR_ENV).map(PathBuf::from) else {
        return Outcome::Skip(format!("{DATA_DIR_ENV} not set"));
    };
    let (Some(cic), Some(unsw)) = (find_dataset(&dir, "cic"), find_dataset(&dir, "unsw")) else {
        return Outcome::Skip(format!("NFv2 CIC-2018 and UNSW-NB15 CSVs not found in {}", dir.display()));
    };
    let start = Instant::now();
    let schema = Schema::nfv2();
    let load = |p: &Path, name: &str| -> dinids::Result<LabeledSet> {
        let opts = LoadOptions {
            name: Some(name.to_string()),
            ..LoadOptions::default()
        };
        let table = dataset::load_netflow_csv(p, &schema, &opts)?;
        let n = table.len().min(50_000);
        dataset::stratified_sample(&table, n, 1)?.to_labeled()
    };
    let sets = match (load(&cic, "NF-CIC-2018-v2"), load(&unsw, "NF-UNSW-NB15-v2")) {
        (Ok(a), Ok(b)) => [("NF-CIC-2018-v2", a), ("NF-UNSW-NB15-v2", b)],
        (Err(e), _) | (_, Err(e)) => return Outcome::Fail(format!("loading failed: {e}")),
    };
    let cfg = ProtocolConfig {
        folds: 1,
        ..ProtocolConfig::default()
    };
    let mut records = Vec::new();
    for kind in [PipelineKind::FeedForward, PipelineKind::Osvm, PipelineKind::DiNids] {
        for (i, (name, set)) in sets.iter().enumerate() {
            let (other, other_set) = &sets[1 - i];
            let run = eval::run_domain_specific(kind, name, set, &cfg)
                .and_then(|ds| Ok((ds, eval::run_cross_domain(kind, (name, set), (other, other_set), &cfg)?)));
            match run {
                Ok((ds, cd)) => records.extend([ds, cd]),
                Err(e) => return Outcome::Fail(format!("{kind} on {name}: {e}")),
            }
        }
    }
    let report = build_comparison_report(&records).unwrap();
    let summary = |k: PipelineKind| report.models.iter().find(|m| m.model == k).unwrap();
    let (di, os, ff) = (
        summary(PipelineKind::DiNids),
        summary(PipelineKind::Osvm),
        summary(PipelineKind::FeedForward),
    );
    let (Some(di_f1), Some(os_f1), Some(ff_f1), Some(di_deg)) =
        (di.avg_cd_f1, os.avg_cd_f1, ff.avg_cd_f1, di.avg_degradation)
    else {
        return Outcome::Fail("averages missing from report".into());
    };
    let secs = start.elapsed().as_secs_f64();
    check(
        di_f1 > os_f1 && di_f1 > ff_f1 && di_deg < 20.0 && secs < 1800.0,
        format!(
            "avg cross-domain F1 DI-NIDS {di_f1:.2}, OSVM {os_f1:.2}, FF {ff_f1:.2}; DI-NIDS degradation {di_deg:.2}; {secs:.0}s"
        ),
    )
}

fn determinism(first: &[ShiftRun]) -> Outcome {
    let again: Vec<ShiftRun> = (0..3).map(shift_run).collect();
    let a = serde_json::to_string(first).unwrap();
    let b = serde_json::to_string(&again).unwrap();
    let same_bundles = first.iter().zip(&again).all(|(x, y)| x.bundle_digest == y.bundle_digest);
    check(
        a == b && same_bundles,
        format!("3 seeds rerun; bundles identical: {same_bundles}; reports identical: {}", a == b),
    )
}

fn metric_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut bad = 0;
    for _ in 0..200 {
        let n = rng.gen_range(0..40);
        let y: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let p: Vec<u8> = (0..n).map(|_| rng.gen_range(0..2)).collect();
        let cm = confusion(&y, &p).unwrap();
        let (tp, fp, tn, fn_, f1) = naive_f1(&y, &p);
        let m = metrics(&cm);
        let acc = if n == 0 { 0.0 } else { (tp + tn) as f64 / n as f64 };
        if (cm.tp, cm.fp, cm.tn, cm.fn_) != (tp, fp, tn, fn_) || (m.f1 - f1).abs() > 1e-12 || (m.accuracy - acc).abs() > 1e-12 {
            bad += 1;
        }
        let (a, b) = (rng.gen_range(0.0..100.0), rng.gen_range(0.0..100.0));
        if (degradation(a, b) - (a - b)).abs() > 1e-12 {
            bad += 1;
        }
    }
    let table = degradation(93.23, 85.79);
    let table_ok = (table - 7.44).abs() < 1e-9;
    check(
        bad == 0 && table_ok,
        format!("200 cases, {bad} mismatches; degradation(93.23, 85.79) = {table:.2}"),
    )
}

fn main() {
    let mut results: BTreeMap<u8, (&str, Outcome)> = BTreeMap::new();
    results.insert(1, ("gradient correctness", gradient_correctness()));
    results.insert(2, ("gradient reversal identity", grl_identity()));
    results.insert(3, ("one-class SVM oracle equivalence", osvm_oracle()));
    results.insert(4, ("nu property", nu_property()));
    let (runs, secs) = shift_report();
    results.insert(5, ("synthetic domain shift", synthetic_shift(&runs, secs)));
    results.insert(6, ("drift reduction", drift_reduction(&runs)));
    results.insert(7, ("desk-scale replication", desk_scale()));
    results.insert(8, ("determinism", determinism(&runs)));
    results.insert(9, ("metric unit suite", metric_suite()));

    let mut failed = 0;
    for (id, (name, outcome)) in &results {
        let (tag, detail) = match outcome {
            Outcome::Pass(d) => ("PASS", d),
            Outcome::Fail(d) => {
                failed += 1;
                ("FAIL", d)
            }
            Outcome::Skip(d) => ("SKIPPED", d),
        };
        println!("[{tag}] criterion {id}: {name}: {detail}");
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
