use std::collections::BTreeSet;
use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use dinids::bundle::{ModelBundle, Provenance};
use dinids::config::PipelineConfig;
use dinids::dann::{DomainLabel, LambdaMode};
use dinids::dataset::{self, FlowTable, Schema};
use dinids::eval::{build_comparison_report, confusion, metrics, pca_embed, separation_ratio, EvalRecord};
use dinids::pipeline::{train_pipeline, PipelineKind};
use dinids::synthetic::{shifted_domains, write_flows_csv, ShiftConfig};
use dinids::Error;

use crate::ledger::{self, LedgerEntry};
use crate::{data, DataArgs, Direction};

#[derive(Debug)]
pub enum CliError {
    Core(Error),
    Io { path: PathBuf, source: std::io::Error },
    Ledger(String),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 2 for bad input, 3 for an unusable ledger, 4 when training diverged.
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Core(e) if matches!(e.root(), Error::Divergence { .. }) => 4,
            CliError::Ledger(_) => 3,
            _ => 2,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io { path, source } => write!(f, "{}: {source}", path.display()),
            CliError::Ledger(msg) => write!(f, "ledger: {msg}"),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

type Result<T> = std::result::Result<T, CliError>;

fn seeds_field(cfg: &PipelineConfig) -> String {
    cfg.seeds()
        .iter()
        .map(|(k, v)| format!("{k}:{v}"))
        .collect::<Vec<_>>()
        .join(",")
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))
}

fn write_file(path: &Path, contents: &str) -> Result<()> {
    fs::write(path, contents).map_err(|e| CliError::io(path, e))
}

/// Keeps generated file names portable.
fn slug(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || c == '-' || c == '.' { c } else { '_' })
        .collect()
}

pub fn ingest(dataset_path: &Path, args: &DataArgs, out: &Path) -> Result<()> {
    let cfg = data::config(args)?;
    let schema = data::schema(&cfg)?;
    let table = data::load(dataset_path, &schema, &cfg)?;
    let meta = table.meta();
    println!("dataset         {}", meta.name);
    println!("flows           {}", meta.n_flows);
    println!("benign fraction {:.4}", meta.benign_fraction);
    println!("attack classes  {}", meta.attack_classes());
    for (class, n) in &meta.attack_class_counts {
        println!("  {class:<24} {n}");
    }

    create_dir(out)?;
    let (hash, seeds) = (cfg.hash(), seeds_field(&cfg));
    let stem = slug(&meta.name);
    let summary = serde_json::json!({
        "config_hash": hash,
        "seeds": seeds,
        "meta": meta,
        "features": table.feature_names(),
    });
    let summary_path = out.join(format!("{stem}.summary.json"));
    write_file(&summary_path, &serde_json::to_string_pretty(&summary).expect("summary serializes"))?;
    let x = dataset::select_features(&table)?;
    dataset::write_matrix_annotated(
        out.join(format!("{stem}.matrix")),
        &x,
        &[("config_hash", &hash), ("seeds", &seeds)],
    )?;
    let mut labels = format!("{}\n", table.labels().join("\n"));
    if table.is_empty() {
        labels.clear();
    }
    write_file(&out.join(format!("{stem}.labels")), &labels)?;
    println!("wrote {} and the feature cache {stem}.matrix", summary_path.display());
    Ok(())
}

pub fn train(args: &DataArgs, lambda_fixed: Option<f64>, out: Option<&Path>) -> Result<()> {
    let mut cfg = data::config(args)?;
    if let Some(l) = lambda_fixed {
        cfg.settings.dann.lambda = LambdaMode::Fixed(l);
    }
    if let Some(dir) = out {
        cfg.output_dir = dir.to_path_buf();
    }
    cfg.validate()?;
    let source_path = cfg
        .source
        .clone()
        .ok_or_else(|| Error::Argument("the config sets no data.source".into()))?;
    let schema = data::schema(&cfg)?;

    let source = data::load(&source_path, &schema, &cfg)?;
    let (train_idx, _) = data::source_split(&source, &cfg)?;
    let train_set = source.subset(&train_idx).to_labeled()?;
    let mut metas = vec![source.meta().clone()];
    let pool = match &cfg.target {
        Some(path) => {
            let target = data::load(path, &schema, &cfg)?;
            data::check_width(&target, source.feature_names().len())?;
            let (pool_idx, _) = data::target_split(&target, &cfg)?;
            metas.push(target.meta().clone());
            Some(dataset::select_features(&target.subset(&pool_idx))?)
        }
        None => None,
    };

    log::info!(
        "training {} on {} rows of {} with {} unlabelled target rows",
        cfg.kind,
        train_set.len(),
        source.meta().name,
        pool.as_ref().map_or(0, |p| p.n_rows())
    );
    let pipeline = train_pipeline(cfg.kind, &train_set, pool.as_ref(), &cfg.settings).map_err(|e| e.in_stage("train"))?;
    if let Some(h) = &pipeline.history {
        let best = h.records.iter().find(|r| r.epoch == h.best_epoch);
        println!(
            "{} epochs, kept epoch {} (validation F1 {:.4})",
            h.records.len(),
            h.best_epoch,
            best.map_or(f64::NAN, |r| r.validation_f1)
        );
    }
    let bundle = ModelBundle {
        pipeline,
        provenance: Provenance::new(cfg.hash(), cfg.seeds(), metas),
        config: cfg.canonical(),
    };
    let dir = cfg.output_dir.join("bundle");
    bundle.save(&dir)?;
    println!("saved {} bundle to {} (config {})", cfg.kind, dir.display(), &cfg.hash()[..12]);
    Ok(())
}

/// Config stored in a bundle, with command-line overrides.
fn bundle_config(bundle: &ModelBundle, args: &DataArgs) -> Result<PipelineConfig> {
    let mut cfg = PipelineConfig::parse(&bundle.config)?;
    data::apply_overrides(&mut cfg, args);
    Ok(cfg)
}

pub fn eval(
    bundle_dir: &Path,
    dataset_path: &Path,
    direction: Option<Direction>,
    args: &DataArgs,
    ledger_path: Option<&Path>,
    out: &Path,
) -> Result<()> {
    let bundle = ModelBundle::load(bundle_dir)?;
    let cfg = bundle_config(&bundle, args)?;
    let schema = data::schema(&cfg)?;
    let table = data::load(dataset_path, &schema, &cfg)?;
    data::check_width(&table, bundle.pipeline.input_width())?;

    let name = table.meta().name.clone();
    let trained_on = bundle.provenance.datasets.first().map(|m| m.name.clone());
    let pool_name = bundle.provenance.datasets.get(1).map(|m| m.name.clone());
    let actual = if trained_on.as_deref() == Some(name.as_str()) {
        Direction::SelfEval
    } else {
        Direction::Cross
    };
    if let Some(d) = direction.filter(|d| *d != actual) {
        let trained = trained_on.as_deref().unwrap_or("an unrecorded dataset");
        return Err(Error::Argument(format!(
            "--direction {} does not fit: {name} {} the training dataset {trained}",
            if d == Direction::SelfEval { "self" } else { "cross" },
            if actual == Direction::SelfEval { "is" } else { "is not" },
        ))
        .into());
    }
    let rows = match actual {
        Direction::SelfEval => data::source_split(&table, &cfg)?.1,
        Direction::Cross if pool_name.as_deref() == Some(name.as_str()) => data::target_split(&table, &cfg)?.1,
        Direction::Cross => (0..table.len()).collect(),
    };
    let test = table.subset(&rows).to_labeled()?;
    let pred = bundle.pipeline.predict(&test.x)?;
    let m = metrics(&confusion(&test.y, &pred)?);
    if m.zero_division {
        log::warn!("some metrics had a zero denominator and are reported as 0");
    }

    let kind = bundle.pipeline.kind;
    let train_name = trained_on.unwrap_or_else(|| "unknown".into());
    let entry = LedgerEntry {
        direction: if actual == Direction::SelfEval { "self" } else { "cross" }.into(),
        seeds: bundle.provenance.seeds_field(),
        record: EvalRecord {
            model: kind,
            train_dataset: train_name.clone(),
            test_dataset: name.clone(),
            metrics: m,
            fold_f1: vec![m.f1],
            seeds: vec![cfg.settings.dann.sgd.seed],
            config_hash: bundle.provenance.config_hash.clone(),
        },
    };
    create_dir(out)?;
    let report_path = out.join(format!("metrics-{}-{}-{}.json", slug(kind.name()), slug(&train_name), slug(&name)));
    write_file(&report_path, &serde_json::to_string_pretty(&entry).expect("entry serializes"))?;
    let ledger_path = ledger_path.map_or_else(|| out.join("ledger.jsonl"), Path::to_path_buf);
    ledger::append(&ledger_path, &entry)?;
    println!(
        "{kind} {train_name} -> {name} ({}, {} rows): F1 {:.4} precision {:.4} recall {:.4} accuracy {:.4}",
        entry.direction,
        test.len(),
        m.f1,
        m.precision,
        m.recall,
        m.accuracy
    );
    println!("wrote {} and appended to {}", report_path.display(), ledger_path.display());
    Ok(())
}

pub fn report(ledger_path: &Path, reference: bool, out: &Path) -> Result<()> {
    let entries = match ledger::read(ledger_path) {
        Err(CliError::Io { source, .. }) if source.kind() == std::io::ErrorKind::NotFound => {
            return Err(CliError::Ledger(format!("{} does not exist", ledger_path.display())));
        }
        other => other?,
    };
    let records: Vec<EvalRecord> = entries.iter().map(|e| e.record.clone()).collect();
    let report = build_comparison_report(&records)?;
    let hashes: BTreeSet<&str> = entries.iter().map(|e| e.record.config_hash.as_str()).collect();
    let seeds: BTreeSet<&str> = entries.iter().map(|e| e.seeds.as_str()).collect();
    let hashes: Vec<&str> = hashes.into_iter().collect();
    let seeds: Vec<&str> = seeds.into_iter().collect();

    let text = report.render_text(reference);
    create_dir(out)?;
    let header = format!("# config_hash={} seeds={}\n", hashes.join(","), seeds.join(";"));
    write_file(&out.join("report.txt"), &format!("{header}{text}"))?;
    let json = serde_json::json!({
        "config_hashes": hashes,
        "seeds": seeds,
        "report": report,
    });
    write_file(&out.join("report.json"), &serde_json::to_string_pretty(&json).expect("report serializes"))?;
    print!("{text}");
    Ok(())
}

fn write_embedding(path: &Path, header: &str, e: &dinids::eval::EmbeddingExport) -> Result<()> {
    let file = File::create(path).map_err(|err| CliError::io(path, err))?;
    let mut w = BufWriter::new(file);
    let io = |err| CliError::io(path, err);
    w.write_all(header.as_bytes()).map_err(io)?;
    e.write_csv(&mut w).map_err(io)?;
    w.flush().map_err(io)
}

pub fn embed(
    bundle_dir: &Path,
    source_path: &Path,
    target_path: &Path,
    args: &DataArgs,
    sample: usize,
    out: &Path,
) -> Result<()> {
    let bundle = ModelBundle::load(bundle_dir)?;
    let cfg = bundle_config(&bundle, args)?;
    let schema: Schema = data::schema(&cfg)?;
    let width = bundle.pipeline.input_width();
    let scaled = |t: &FlowTable| -> Result<dataset::FeatureMatrix> {
        data::check_width(t, width)?;
        Ok(dataset::apply_scaler(&bundle.pipeline.scaler, &dataset::select_features(t)?)?)
    };
    let xs = scaled(&data::load(source_path, &schema, &cfg)?)?;
    let xt = scaled(&data::load(target_path, &schema, &cfg)?)?;
    let all = xs.vstack(&xt)?;
    let domains: Vec<DomainLabel> = (0..all.n_rows())
        .map(|i| if i < xs.n_rows() { DomainLabel::Source } else { DomainLabel::Target })
        .collect();
    let n = sample.min(all.n_rows());

    create_dir(out)?;
    let header = format!(
        "# config_hash={} seeds={}\n",
        bundle.provenance.config_hash,
        bundle.provenance.seeds_field()
    );
    let raw = pca_embed(&all, &domains, 2, n, cfg.data_seed)?;
    write_embedding(&out.join("embed-raw.csv"), &header, &raw)?;
    println!("raw features       separation {:.4}", separation_ratio(&raw)?);
    if let Some(dann) = &bundle.pipeline.dann {
        let feats = dann.extract_features(&all)?;
        let e = pca_embed(&feats, &domains, 2, n, cfg.data_seed)?;
        write_embedding(&out.join("embed-features.csv"), &header, &e)?;
        println!("extracted features separation {:.4}", separation_ratio(&e)?);
    }
    for w in raw.warnings {
        eprintln!("warning: {w}");
    }
    println!("wrote embeddings to {}", out.display());
    Ok(())
}

pub fn synth(out: &Path, seed: u64, rows: usize) -> Result<()> {
    let domains = shifted_domains(&ShiftConfig {
        n_source: rows,
        n_target: rows,
        seed,
        ..ShiftConfig::default()
    })?;
    create_dir(out)?;
    let schema = Schema::nfv2();
    for (name, set) in [("source.csv", &domains.source), ("target.csv", &domains.target)] {
        let path = out.join(name);
        let file = File::create(&path).map_err(|e| CliError::io(&path, e))?;
        write_flows_csv(BufWriter::new(file), &schema, set)?;
    }
    let mut cfg = PipelineConfig::synthetic();
    cfg.kind = PipelineKind::DiNids;
    cfg.source = Some("source.csv".into());
    cfg.target = Some("target.csv".into());
    let conf = out.join("synthetic.conf");
    write_file(
        &conf,
        &format!("# synthetic shifted pair, seed {seed}, {rows} rows per domain\n{}", cfg.canonical()),
    )?;
    println!("wrote source.csv, target.csv and synthetic.conf to {}", out.display());
    Ok(())
}
