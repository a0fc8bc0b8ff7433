//! Metrics, the domain-specific and cross-domain protocols, degradation
//! reporting, and a PCA embedding for eyeballing domain drift.
//!
//! Attack is the positive class throughout. F1 values inside records are
//! fractions; the comparison report works in percent.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dann::DomainLabel;
use crate::dataset::{self, FeatureMatrix, LabeledSet};
use crate::error::{Error, Result};
use crate::par;
use crate::pipeline::{self, PipelineKind, TrainSettings};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: usize,
    pub fp: usize,
    pub tn: usize,
    pub fn_: usize,
}

impl ConfusionMatrix {
    pub fn total(&self) -> usize {
        self.tp + self.fp + self.tn + self.fn_
    }
}

pub fn confusion(y_true: &[u8], y_pred: &[u8]) -> Result<ConfusionMatrix> {
    if y_true.len() != y_pred.len() {
        return Err(Error::Shape(format!(
            "{} labels vs {} predictions",
            y_true.len(),
            y_pred.len()
        )));
    }
    let mut cm = ConfusionMatrix::default();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        match (t, p) {
            (1, 1) => cm.tp += 1,
            (0, 1) => cm.fp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fn_ += 1,
            _ => return Err(Error::Data(format!("non-binary label pair ({t}, {p})"))),
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub accuracy: f64,
    pub support_benign: usize,
    pub support_attack: usize,
    /// Set when some ratio had a zero denominator and was taken as 0.
    pub zero_division: bool,
}

fn ratio(num: usize, den: usize, flag: &mut bool) -> f64 {
    if den == 0 {
        *flag = true;
        0.0
    } else {
        num as f64 / den as f64
    }
}

pub fn metrics(cm: &ConfusionMatrix) -> MetricsReport {
    let mut zero_division = false;
    let precision = ratio(cm.tp, cm.tp + cm.fp, &mut zero_division);
    let recall = ratio(cm.tp, cm.tp + cm.fn_, &mut zero_division);
    let f1 = if precision + recall > 0.0 {
        2.0 * precision * recall / (precision + recall)
    } else {
        zero_division = true;
        0.0
    };
    let accuracy = ratio(cm.tp + cm.tn, cm.total(), &mut zero_division);
    if zero_division {
        log::debug!("zero denominator in metrics for {cm:?}; treated as 0");
    }
    MetricsReport {
        precision,
        recall,
        f1,
        accuracy,
        support_benign: cm.tn + cm.fp,
        support_attack: cm.tp + cm.fn_,
        zero_division,
    }
}

impl MetricsReport {
    /// Element-wise mean of the ratios; supports are summed.
    pub fn mean(reports: &[MetricsReport]) -> Option<MetricsReport> {
        if reports.is_empty() {
            return None;
        }
        let n = reports.len() as f64;
        let avg = |f: fn(&MetricsReport) -> f64| reports.iter().map(f).sum::<f64>() / n;
        Some(MetricsReport {
            precision: avg(|r| r.precision),
            recall: avg(|r| r.recall),
            f1: avg(|r| r.f1),
            accuracy: avg(|r| r.accuracy),
            support_benign: reports.iter().map(|r| r.support_benign).sum(),
            support_attack: reports.iter().map(|r| r.support_attack).sum(),
            zero_division: reports.iter().any(|r| r.zero_division),
        })
    }
}

/// Domain-specific minus cross-domain F1 (percent points).
pub fn degradation(ds_f1: f64, cd_f1: f64) -> f64 {
    ds_f1 - cd_f1
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProtocolConfig {
    pub settings: TrainSettings,
    /// Held-out fraction of each dataset used for scoring.
    pub test_fraction: f64,
    pub folds: usize,
    pub seed: u64,
}

impl Default for ProtocolConfig {
    fn default() -> Self {
        Self {
            settings: TrainSettings::default(),
            test_fraction: 0.3,
            folds: 5,
            seed: 1,
        }
    }
}

impl ProtocolConfig {
    fn fold_seeds(&self) -> Vec<u64> {
        (0..self.folds as u64).map(|k| self.seed.wrapping_add(k)).collect()
    }

    fn settings_for(&self, seed: u64) -> TrainSettings {
        let mut s = self.settings.clone();
        s.dann.sgd.seed = seed;
        s.osvm.seed = seed;
        s
    }
}

/// One evaluated (model, train dataset, test dataset) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalRecord {
    pub model: PipelineKind,
    pub train_dataset: String,
    pub test_dataset: String,
    /// Mean over folds.
    pub metrics: MetricsReport,
    pub fold_f1: Vec<f64>,
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub config_hash: String,
}

impl EvalRecord {
    pub fn is_cross_domain(&self) -> bool {
        self.train_dataset != self.test_dataset
    }
}

fn run_folds<F>(cfg: &ProtocolConfig, fold: F) -> Result<(Vec<MetricsReport>, Vec<u64>)>
where
    F: Fn(u64) -> Result<MetricsReport> + Sync + Send,
{
    if cfg.folds == 0 {
        return Err(Error::Argument("folds must be positive".into()));
    }
    let seeds = cfg.fold_seeds();
    let results = par::map_slice(&seeds, |&s| fold(s));
    let mut reports = Vec::with_capacity(results.len());
    for (k, r) in results.into_iter().enumerate() {
        reports.push(r.map_err(|e| e.in_stage(format!("fold {k}")))?);
    }
    Ok((reports, seeds))
}

fn record(model: PipelineKind, train: &str, test: &str, reports: Vec<MetricsReport>, seeds: Vec<u64>) -> EvalRecord {
    EvalRecord {
        model,
        train_dataset: train.to_string(),
        test_dataset: test.to_string(),
        fold_f1: reports.iter().map(|r| r.f1).collect(),
        metrics: MetricsReport::mean(&reports).expect("folds > 0"),
        seeds,
        config_hash: String::new(),
    }
}

/// Train and test on seeded splits of the same dataset, averaged over folds.
pub fn run_domain_specific(
    kind: PipelineKind,
    name: &str,
    data: &LabeledSet,
    cfg: &ProtocolConfig,
) -> Result<EvalRecord> {
    let (reports, seeds) = run_folds(cfg, |seed| {
        let (train_idx, test_idx) = dataset::split_indices(&data.y, cfg.test_fraction, seed)?;
        let train = data.subset(&train_idx);
        let test = data.subset(&test_idx);
        let model = pipeline::train_pipeline(kind, &train, None, &cfg.settings_for(seed))?;
        let pred = model.predict(&test.x)?;
        Ok(metrics(&confusion(&test.y, &pred)?))
    })?;
    Ok(record(kind, name, name, reports, seeds))
}

/// Train on `source` (plus unlabelled target rows for the adversarial
/// pipelines) and score held-out `target` rows. Target labels are read
/// only when scoring.
pub fn run_cross_domain(
    kind: PipelineKind,
    source: (&str, &LabeledSet),
    target: (&str, &LabeledSet),
    cfg: &ProtocolConfig,
) -> Result<EvalRecord> {
    let (src_name, src) = source;
    let (tgt_name, tgt) = target;
    if src_name == tgt_name {
        return Err(Error::Argument("cross-domain evaluation needs two distinct datasets".into()));
    }
    let (reports, seeds) = run_folds(cfg, |seed| {
        let (src_train, _) = dataset::split_indices(&src.y, cfg.test_fraction, seed)?;
        // an unstratified split keeps target labels out of the training pool
        let (tgt_train, tgt_test) = dataset::split_indices(&vec![0; tgt.len()], cfg.test_fraction, seed)?;
        let train = src.subset(&src_train);
        let unlabeled = tgt.x.select_rows(&tgt_train);
        let model = pipeline::train_pipeline(kind, &train, Some(&unlabeled), &cfg.settings_for(seed))?;
        let test = tgt.subset(&tgt_test);
        let pred = model.predict(&test.x)?;
        Ok(metrics(&confusion(&test.y, &pred)?))
    })?;
    Ok(record(kind, src_name, tgt_name, reports, seeds))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DirectionResult {
    pub train_dataset: String,
    pub test_dataset: String,
    pub cd_f1: f64,
    /// Absent when the training domain has no domain-specific result.
    pub ds_f1: Option<f64>,
    pub degradation: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSummary {
    pub model: PipelineKind,
    pub domain_specific: BTreeMap<String, f64>,
    pub cross_domain: Vec<DirectionResult>,
    /// Present once two or more directions were evaluated.
    pub avg_cd_f1: Option<f64>,
    pub avg_degradation: Option<f64>,
}

/// Comparison tables in percent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProtocolReport {
    pub datasets: Vec<String>,
    pub models: Vec<ModelSummary>,
}

/// Assembles per-model domain-specific, cross-domain and degradation cells.
/// Later records for the same cell replace earlier ones.
pub fn build_comparison_report(results: &[EvalRecord]) -> Result<ProtocolReport> {
    if results.is_empty() {
        return Err(Error::Data("no evaluation results to report".into()));
    }
    let mut datasets: Vec<String> = Vec::new();
    // per model: domain-specific F1 by dataset, cross-domain F1 by (train, test)
    type Cells = (BTreeMap<String, f64>, BTreeMap<(String, String), f64>);
    let mut per_model: BTreeMap<PipelineKind, Cells> = BTreeMap::new();
    for r in results {
        for d in [&r.train_dataset, &r.test_dataset] {
            if !datasets.contains(d) {
                datasets.push(d.clone());
            }
        }
        let entry = per_model.entry(r.model).or_default();
        let pct = 100.0 * r.metrics.f1;
        if r.is_cross_domain() {
            entry.1.insert((r.train_dataset.clone(), r.test_dataset.clone()), pct);
        } else {
            entry.0.insert(r.train_dataset.clone(), pct);
        }
    }

    let models = PipelineKind::ALL
        .iter()
        .filter_map(|kind| per_model.remove(kind).map(|cells| (*kind, cells)))
        .map(|(model, (ds, cd))| {
            let cross_domain: Vec<DirectionResult> = cd
                .into_iter()
                .map(|((train, test), cd_f1)| {
                    let ds_f1 = ds.get(&train).copied();
                    DirectionResult {
                        degradation: ds_f1.map(|d| degradation(d, cd_f1)),
                        train_dataset: train,
                        test_dataset: test,
                        cd_f1,
                        ds_f1,
                    }
                })
                .collect();
            let mean = |vals: Vec<f64>| (vals.len() >= 2).then(|| vals.iter().sum::<f64>() / vals.len() as f64);
            let avg_cd_f1 = mean(cross_domain.iter().map(|d| d.cd_f1).collect());
            let degr: Vec<f64> = cross_domain.iter().filter_map(|d| d.degradation).collect();
            let avg_degradation = if degr.len() == cross_domain.len() { mean(degr) } else { None };
            ModelSummary {
                model,
                domain_specific: ds,
                cross_domain,
                avg_cd_f1,
                avg_degradation,
            }
        })
        .collect();
    Ok(ProtocolReport { datasets, models })
}

/// Published full-scale F1 values (percent) for the two NFv2 benchmarks.
pub mod reference {
    use crate::pipeline::PipelineKind;

    #[derive(Debug, Clone, Copy, PartialEq, Eq)]
    pub enum Benchmark {
        Cic2018,
        UnswNb15,
    }

    impl Benchmark {
        /// Recognises dataset names such as `NF-CIC-2018-v2` or `nfv2_unsw`.
        pub fn from_name(name: &str) -> Option<Self> {
            let n = name.to_ascii_lowercase();
            if n.contains("cic") {
                Some(Benchmark::Cic2018)
            } else if n.contains("unsw") {
                Some(Benchmark::UnswNb15)
            } else {
                None
            }
        }
    }

    use Benchmark::*;
    use PipelineKind::*;

    /// (model, dataset, domain-specific F1).
    pub const DOMAIN_SPECIFIC: [(PipelineKind, Benchmark, f64); 8] = [
        (FeedForward, Cic2018, 97.72),
        (FeedForward, UnswNb15, 92.24),
        (Osvm, Cic2018, 92.97),
        (Osvm, UnswNb15, 98.28),
        (Dann, Cic2018, 97.81),
        (Dann, UnswNb15, 93.38),
        (DiNids, Cic2018, 93.23),
        (DiNids, UnswNb15, 98.68),
    ];

    /// (model, train, test, cross-domain F1, printed degradation).
    pub const CROSS_DOMAIN: [(PipelineKind, Benchmark, Benchmark, f64, f64); 8] = [
        (FeedForward, Cic2018, UnswNb15, 3.09, 94.63),
        (Osvm, Cic2018, UnswNb15, 86.15, 6.79),
        (Dann, Cic2018, UnswNb15, 17.31, 80.50),
        (DiNids, Cic2018, UnswNb15, 85.79, 7.44),
        (FeedForward, UnswNb15, Cic2018, 30.79, 61.45),
        (Osvm, UnswNb15, Cic2018, 15.74, 82.54),
        (Dann, UnswNb15, Cic2018, 61.94, 31.44),
        (DiNids, UnswNb15, Cic2018, 93.29, 5.39),
    ];

    pub fn domain_specific(model: PipelineKind, ds: Benchmark) -> Option<f64> {
        DOMAIN_SPECIFIC
            .iter()
            .find(|(m, d, _)| *m == model && *d == ds)
            .map(|r| r.2)
    }

    pub fn cross_domain(model: PipelineKind, train: Benchmark, test: Benchmark) -> Option<(f64, f64)> {
        CROSS_DOMAIN
            .iter()
            .find(|(m, a, b, _, _)| *m == model && *a == train && *b == test)
            .map(|r| (r.3, r.4))
    }

    /// Printed degradations that disagree with the subtraction of the
    /// printed F1 values by more than rounding.
    pub fn inconsistencies() -> Vec<String> {
        CROSS_DOMAIN
            .iter()
            .filter_map(|&(m, a, b, cd, printed)| {
                let ds = domain_specific(m, a)?;
                let computed = ds - cd;
                ((computed - printed).abs() > 0.005 + 1e-9).then(|| {
                    format!("{m} {a:?}->{b:?}: printed degradation {printed:.2}, {ds:.2} - {cd:.2} = {computed:.2}")
                })
            })
            .collect()
    }
}

/// Renders an aligned plain-text table.
pub fn render_table(headers: &[String], rows: &[Vec<String>]) -> String {
    let mut widths: Vec<usize> = headers.iter().map(String::len).collect();
    for row in rows {
        for (w, cell) in widths.iter_mut().zip(row) {
            *w = (*w).max(cell.len());
        }
    }
    let line = |cells: &[String]| {
        let mut s = String::new();
        for (i, (cell, w)) in cells.iter().zip(&widths).enumerate() {
            if i > 0 {
                s.push_str(" | ");
            }
            if i == 0 {
                let _ = write!(s, "{cell:<w$}");
            } else {
                let _ = write!(s, "{cell:>w$}");
            }
        }
        s.trim_end().to_string()
    };
    let mut out = line(headers);
    out.push('\n');
    out.push_str(&widths.iter().map(|w| "-".repeat(*w)).collect::<Vec<_>>().join("-+-"));
    out.push('\n');
    for row in rows {
        out.push_str(&line(row));
        out.push('\n');
    }
    out
}

fn pct(v: Option<f64>) -> String {
    v.map(|v| format!("{v:.2}")).unwrap_or_else(|| "-".into())
}

impl ProtocolReport {
    /// Tables for domain-specific F1, each cross-domain direction, the
    /// degradation comparison and average cross-domain F1. With
    /// `with_reference` the published full-scale values are printed in
    /// `ref` columns beside the measured ones.
    pub fn render_text(&self, with_reference: bool) -> String {
        use reference::Benchmark;
        let mut out = String::new();

        let mut headers = vec!["Model".to_string()];
        for d in &self.datasets {
            headers.push(format!("{d} F1(%)"));
            if with_reference {
                headers.push("ref".into());
            }
        }
        let rows: Vec<Vec<String>> = self
            .models
            .iter()
            .filter(|m| !m.domain_specific.is_empty())
            .map(|m| {
                let mut row = vec![m.model.to_string()];
                for d in &self.datasets {
                    row.push(pct(m.domain_specific.get(d).copied()));
                    if with_reference {
                        row.push(pct(Benchmark::from_name(d).and_then(|b| reference::domain_specific(m.model, b))));
                    }
                }
                row
            })
            .collect();
        if !rows.is_empty() {
            out.push_str("Domain-specific performance (F1 %)\n");
            out.push_str(&render_table(&headers, &rows));
            out.push('\n');
        }

        let mut directions: Vec<(String, String)> = Vec::new();
        for m in &self.models {
            for d in &m.cross_domain {
                let key = (d.train_dataset.clone(), d.test_dataset.clone());
                if !directions.contains(&key) {
                    directions.push(key);
                }
            }
        }
        for (train, test) in &directions {
            let mut headers = vec!["Model".to_string(), "F1(%)".into(), "Degradation".into()];
            if with_reference {
                headers.extend(["ref F1".to_string(), "ref Degr.".into()]);
            }
            let rows: Vec<Vec<String>> = self
                .models
                .iter()
                .filter_map(|m| {
                    let d = m.cross_domain.iter().find(|d| &d.train_dataset == train && &d.test_dataset == test)?;
                    let mut row = vec![m.model.to_string(), pct(Some(d.cd_f1)), pct(d.degradation)];
                    if with_reference {
                        let r = Benchmark::from_name(train)
                            .zip(Benchmark::from_name(test))
                            .and_then(|(a, b)| reference::cross_domain(m.model, a, b));
                        row.push(pct(r.map(|r| r.0)));
                        row.push(pct(r.map(|r| r.1)));
                    }
                    Some(row)
                })
                .collect();
            let _ = writeln!(out, "Cross-domain performance: train {train} -> test {test}");
            out.push_str(&render_table(&headers, &rows));
            out.push('\n');
        }

        let headers: Vec<String> = ["Model", "Train", "Test", "F1(%)", "Degr.(%)", "Avg Degr.(%)"]
            .iter()
            .map(|s| s.to_string())
            .collect();
        let mut rows = Vec::new();
        for m in self.models.iter().filter(|m| !m.cross_domain.is_empty()) {
            for (i, d) in m.cross_domain.iter().enumerate() {
                if let Some(ds) = d.ds_f1 {
                    rows.push(vec![
                        m.model.to_string(),
                        d.train_dataset.clone(),
                        d.train_dataset.clone(),
                        pct(Some(ds)),
                        pct(d.degradation),
                        if i == 0 { pct(m.avg_degradation) } else { String::new() },
                    ]);
                }
                rows.push(vec![
                    m.model.to_string(),
                    d.train_dataset.clone(),
                    d.test_dataset.clone(),
                    pct(Some(d.cd_f1)),
                    String::new(),
                    String::new(),
                ]);
            }
        }
        if !rows.is_empty() {
            out.push_str("Cross-domain degradation comparison\n");
            out.push_str(&render_table(&headers, &rows));
            out.push('\n');

            let headers = vec!["Model".to_string(), "Avg cross-domain F1(%)".into(), "Avg degradation".into()];
            let rows: Vec<Vec<String>> = self
                .models
                .iter()
                .filter(|m| !m.cross_domain.is_empty())
                .map(|m| vec![m.model.to_string(), pct(m.avg_cd_f1), pct(m.avg_degradation)])
                .collect();
            out.push_str("Average cross-domain performance\n");
            out.push_str(&render_table(&headers, &rows));
        }

        if with_reference {
            let notes = reference::inconsistencies();
            if !notes.is_empty() {
                out.push_str("\nReference inconsistencies\n");
                for n in notes {
                    let _ = writeln!(out, "  {n}");
                }
            }
        }
        out
    }

    pub fn to_json(&self) -> Result<String> {
        serde_json::to_string_pretty(self).map_err(|e| Error::Data(e.to_string()))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Data(e.to_string()))
    }
}

/// Low-dimensional coordinates for sampled rows, tagged by domain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingExport {
    pub coords: Vec<Vec<f64>>,
    pub domains: Vec<DomainLabel>,
    /// Variance captured by each component.
    pub component_variance: Vec<f64>,
    pub warnings: Vec<String>,
}

impl EmbeddingExport {
    /// CSV with columns `x,y,...,domain`.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let dims = self.component_variance.len();
        const AXES: [&str; 3] = ["x", "y", "z"];
        let names: Vec<String> = (0..dims)
            .map(|i| AXES.get(i).map(|s| s.to_string()).unwrap_or_else(|| format!("c{i}")))
            .collect();
        writeln!(w, "{},domain", names.join(","))?;
        for (c, d) in self.coords.iter().zip(&self.domains) {
            let cells: Vec<String> = c.iter().map(|v| v.to_string()).collect();
            let tag = match d {
                DomainLabel::Source => "source",
                DomainLabel::Target => "target",
            };
            writeln!(w, "{},{tag}", cells.join(","))?;
        }
        Ok(())
    }
}

/// Top principal directions of a symmetric matrix by power iteration with
/// deflation. Returns `(eigenvalue, unit vector)` pairs; a numerically zero
/// eigenvalue yields a zero vector.
pub fn top_eigenvectors(cov: &[f64], d: usize, k: usize, seed: u64) -> Vec<(f64, Vec<f64>)> {
    let mut m = cov.to_vec();
    let trace: f64 = (0..d).map(|i| cov[i * d + i]).sum();
    let floor = trace.abs().max(f64::MIN_POSITIVE) * 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mul = |m: &[f64], v: &[f64]| -> Vec<f64> {
        m.chunks_exact(d).map(|row| row.iter().zip(v).map(|(a, b)| a * b).sum()).collect()
    };
    let norm = |v: &[f64]| v.iter().map(|x| x * x).sum::<f64>().sqrt();
    let mut out = Vec::with_capacity(k);
    for _ in 0..k {
        let mut v: Vec<f64> = (0..d).map(|_| rng.gen::<f64>() - 0.5).collect();
        let n0 = norm(&v);
        v.iter_mut().for_each(|x| *x /= n0);
        let mut lambda = 0.0;
        for _ in 0..10_000 {
            let w = mul(&m, &v);
            let nw = norm(&w);
            if nw <= floor {
                lambda = 0.0;
                v = vec![0.0; d];
                break;
            }
            let next: Vec<f64> = w.iter().map(|x| x / nw).collect();
            let delta = next.iter().zip(&v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            v = next;
            lambda = nw;
            if delta < 1e-12 {
                break;
            }
        }
        if lambda > 0.0 {
            // Rayleigh quotient; sign fixed so the largest entry is positive
            lambda = v.iter().zip(mul(&m, &v)).map(|(a, b)| a * b).sum();
            let pivot = v.iter().copied().fold(0.0f64, |acc, x| if x.abs() > acc.abs() { x } else { acc });
            if pivot < 0.0 {
                v.iter_mut().for_each(|x| *x = -*x);
            }
            for i in 0..d {
                for j in 0..d {
                    m[i * d + j] -= lambda * v[i] * v[j];
                }
            }
        }
        out.push((lambda, v));
    }
    out
}

/// Projects a seeded, domain-stratified sample of rows onto the top `dims`
/// principal directions of the sample.
pub fn pca_embed(
    x: &FeatureMatrix,
    domains: &[DomainLabel],
    dims: usize,
    sample_n: usize,
    seed: u64,
) -> Result<EmbeddingExport> {
    if domains.len() != x.n_rows() {
        return Err(Error::Shape(format!("{} rows but {} domain tags", x.n_rows(), domains.len())));
    }
    if dims == 0 || dims > x.n_cols() {
        return Err(Error::Argument(format!("cannot embed {} columns into {dims} dimensions", x.n_cols())));
    }
    if sample_n == 0 || sample_n > x.n_rows() {
        return Err(Error::Argument(format!("sample size {sample_n} outside 1..={}", x.n_rows())));
    }
    let gammas: Vec<u8> = domains.iter().map(|d| d.gamma()).collect();
    let idx = dataset::stratified_indices(&gammas, sample_n, seed)?;
    let sample = x.select_rows(&idx);
    let d = sample.n_cols();
    let means = sample.column_means();
    let centered: Vec<f64> = sample
        .values()
        .iter()
        .enumerate()
        .map(|(k, v)| v - means[k % d])
        .collect();
    let n = sample.n_rows() as f64;
    let mut cov = vec![0.0; d * d];
    for row in centered.chunks_exact(d) {
        for i in 0..d {
            for j in i..d {
                cov[i * d + j] += row[i] * row[j] / n;
            }
        }
    }
    for i in 0..d {
        for j in 0..i {
            cov[i * d + j] = cov[j * d + i];
        }
    }
    let comps = top_eigenvectors(&cov, d, dims, seed);
    let mut warnings = Vec::new();
    for (k, (lambda, _)) in comps.iter().enumerate() {
        if *lambda == 0.0 {
            let msg = format!("component {k} is degenerate (rank-deficient data); coordinates set to 0");
            log::warn!("{msg}");
            warnings.push(msg);
        }
    }
    let coords = centered
        .chunks_exact(d)
        .map(|row| {
            comps
                .iter()
                .map(|(_, v)| row.iter().zip(v).map(|(a, b)| a * b).sum())
                .collect()
        })
        .collect();
    Ok(EmbeddingExport {
        coords,
        domains: idx.iter().map(|&i| domains[i]).collect(),
        component_variance: comps.iter().map(|c| c.0).collect(),
        warnings,
    })
}

/// Between-domain centroid distance divided by the pooled within-domain
/// RMS spread.
pub fn separation_ratio(e: &EmbeddingExport) -> Result<f64> {
    let dims = e.component_variance.len();
    let mut centroids = [vec![0.0; dims], vec![0.0; dims]];
    let mut counts = [0usize; 2];
    for (c, d) in e.coords.iter().zip(&e.domains) {
        let k = usize::from(d.gamma());
        counts[k] += 1;
        centroids[k].iter_mut().zip(c).for_each(|(a, v)| *a += v);
    }
    if counts.contains(&0) {
        return Err(Error::Data("separation needs rows from both domains".into()));
    }
    for k in 0..2 {
        centroids[k].iter_mut().for_each(|a| *a /= counts[k] as f64);
    }
    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
    let between = dist2(&centroids[0], &centroids[1]).sqrt();
    let within = (e
        .coords
        .iter()
        .zip(&e.domains)
        .map(|(c, d)| dist2(c, &centroids[usize::from(d.gamma())]))
        .sum::<f64>()
        / e.coords.len() as f64)
        .sqrt();
    if within == 0.0 {
        return Ok(if between == 0.0 { 0.0 } else { f64::INFINITY });
    }
    Ok(between / within)
}
