//! NetFlow v2 ingest: schema validation, label binarization, feature
//! selection, min-max scaling, stratified sampling and matrix persistence.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::par;

/// Literal class string for benign flows.
pub const BENIGN: &str = "Benign";

/// Model input width after dropping the endpoint identifiers.
pub const MODEL_FEATURES: usize = 39;

/// Fraction of malformed rows tolerated before a load aborts.
pub const MAX_BAD_ROW_FRACTION: f64 = 0.001;

const CHUNK_ROWS: usize = 65_536;

const BUILTIN_NFV2: &str = include_str!("../schemas/nfv2.schema");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnType {
    Numeric,
    Categorical,
    Label,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ColumnRole {
    Feature,
    Identifier,
    Label,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ColumnSpec {
    pub name: String,
    pub kind: ColumnType,
    pub role: ColumnRole,
}

/// Column layout of a flow CSV, read from a `name,type,role` sidecar.
///
/// Exactly one column must have type `label`: it carries the class string
/// that [`binarize_label`] maps to 0/1.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Schema {
    columns: Vec<ColumnSpec>,
}

impl Schema {
    /// The NFv2 layout shipped with the crate.
    pub fn nfv2() -> Self {
        Self::parse(BUILTIN_NFV2).expect("builtin schema is valid")
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Schema(detail) => Error::format(path, detail),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut columns = Vec::new();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let parts: Vec<&str> = line.split(',').map(str::trim).collect();
            let [name, kind, role] = parts[..] else {
                return Err(Error::Schema(format!(
                    "line {}: expected name,type,role",
                    lineno + 1
                )));
            };
            let kind = match kind {
                "numeric" => ColumnType::Numeric,
                "categorical" => ColumnType::Categorical,
                "label" => ColumnType::Label,
                other => return Err(Error::Schema(format!("line {}: unknown type {other:?}", lineno + 1))),
            };
            let role = match role {
                "feature" => ColumnRole::Feature,
                "identifier" => ColumnRole::Identifier,
                "label" => ColumnRole::Label,
                other => return Err(Error::Schema(format!("line {}: unknown role {other:?}", lineno + 1))),
            };
            columns.push(ColumnSpec {
                name: name.to_string(),
                kind,
                role,
            });
        }
        let schema = Self { columns };
        let class_columns = schema.columns.iter().filter(|c| c.kind == ColumnType::Label).count();
        if class_columns != 1 {
            return Err(Error::Schema(format!(
                "exactly one column of type label required, found {class_columns}"
            )));
        }
        if schema.columns.iter().any(|c| c.role == ColumnRole::Feature && c.kind == ColumnType::Label) {
            return Err(Error::Schema("label-typed column cannot be a feature".into()));
        }
        if schema.feature_names().is_empty() {
            return Err(Error::Schema("schema declares no feature columns".into()));
        }
        Ok(schema)
    }

    pub fn columns(&self) -> &[ColumnSpec] {
        &self.columns
    }

    pub fn feature_names(&self) -> Vec<String> {
        self.names_with_role(ColumnRole::Feature)
    }

    pub fn identifier_names(&self) -> Vec<String> {
        self.names_with_role(ColumnRole::Identifier)
    }

    fn names_with_role(&self, role: ColumnRole) -> Vec<String> {
        self.columns
            .iter()
            .filter(|c| c.role == role)
            .map(|c| c.name.clone())
            .collect()
    }

    pub fn class_column(&self) -> &str {
        &self
            .columns
            .iter()
            .find(|c| c.kind == ColumnType::Label)
            .expect("validated at parse time")
            .name
    }
}

/// Row-major real matrix with named columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMatrix {
    n_rows: usize,
    n_cols: usize,
    values: Vec<f64>,
    column_names: Vec<String>,
}

impl FeatureMatrix {
    pub fn new(values: Vec<f64>, column_names: Vec<String>) -> Result<Self> {
        let n_cols = column_names.len();
        if n_cols == 0 {
            return Err(Error::Shape("matrix needs at least one column".into()));
        }
        if !values.len().is_multiple_of(n_cols) {
            return Err(Error::Shape(format!(
                "{} values do not fill rows of width {n_cols}",
                values.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NumericInput(format!(
                "non-finite value at row {}, column {}",
                pos / n_cols,
                pos % n_cols
            )));
        }
        Ok(Self {
            n_rows: values.len() / n_cols,
            n_cols,
            values,
            column_names,
        })
    }

    /// Matrix with generated column names `prefix0, prefix1, ...`.
    pub fn with_width(values: Vec<f64>, n_cols: usize, prefix: &str) -> Result<Self> {
        Self::new(values, (0..n_cols).map(|i| format!("{prefix}{i}")).collect())
    }

    pub fn n_rows(&self) -> usize {
        self.n_rows
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    pub fn is_empty(&self) -> bool {
        self.n_rows == 0
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.n_cols..(i + 1) * self.n_cols]
    }

    pub fn rows(&self) -> std::slice::ChunksExact<'_, f64> {
        self.values.chunks_exact(self.n_cols)
    }

    pub fn select_rows(&self, indices: &[usize]) -> Self {
        let mut values = Vec::with_capacity(indices.len() * self.n_cols);
        for &i in indices {
            values.extend_from_slice(self.row(i));
        }
        Self {
            n_rows: indices.len(),
            n_cols: self.n_cols,
            values,
            column_names: self.column_names.clone(),
        }
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &FeatureMatrix) -> Result<Self> {
        if self.n_cols != other.n_cols {
            return Err(Error::Shape(format!(
                "cannot stack widths {} and {}",
                self.n_cols, other.n_cols
            )));
        }
        let mut values = self.values.clone();
        values.extend_from_slice(&other.values);
        Ok(Self {
            n_rows: self.n_rows + other.n_rows,
            n_cols: self.n_cols,
            values,
            column_names: self.column_names.clone(),
        })
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut sums = vec![0.0; self.n_cols];
        for row in self.rows() {
            sums.iter_mut().zip(row).for_each(|(s, v)| *s += v);
        }
        let n = self.n_rows.max(1) as f64;
        sums.into_iter().map(|s| s / n).collect()
    }

    /// Population variance per column.
    pub fn column_variances(&self) -> Vec<f64> {
        let means = self.column_means();
        let mut acc = vec![0.0; self.n_cols];
        for row in self.rows() {
            for ((a, v), m) in acc.iter_mut().zip(row).zip(&means) {
                *a += (v - m) * (v - m);
            }
        }
        let n = self.n_rows.max(1) as f64;
        acc.into_iter().map(|a| a / n).collect()
    }
}

/// A feature matrix paired with binary labels (1 = attack).
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledSet {
    pub x: FeatureMatrix,
    pub y: Vec<u8>,
}

impl LabeledSet {
    pub fn new(x: FeatureMatrix, y: Vec<u8>) -> Result<Self> {
        if x.n_rows() != y.len() {
            return Err(Error::Shape(format!(
                "{} rows but {} labels",
                x.n_rows(),
                y.len()
            )));
        }
        if y.iter().any(|&v| v > 1) {
            return Err(Error::Data("labels must be 0 or 1".into()));
        }
        Ok(Self { x, y })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn subset(&self, indices: &[usize]) -> Self {
        Self {
            x: self.x.select_rows(indices),
            y: indices.iter().map(|&i| self.y[i]).collect(),
        }
    }

    /// Rows labelled benign.
    pub fn benign(&self) -> FeatureMatrix {
        let idx: Vec<usize> = (0..self.len()).filter(|&i| self.y[i] == 0).collect();
        self.x.select_rows(&idx)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetMeta {
    pub name: String,
    pub n_flows: usize,
    pub benign_fraction: f64,
    /// Flow counts per non-benign class string.
    pub attack_class_counts: BTreeMap<String, usize>,
}

impl DatasetMeta {
    pub fn attack_classes(&self) -> usize {
        self.attack_class_counts.len()
    }
}

/// Parsed flow records.
///
/// Feature columns are stored as reals in schema order; identifier columns
/// are kept as text only when requested through [`LoadOptions`].
#[derive(Debug, Clone, PartialEq)]
pub struct FlowTable {
    feature_names: Vec<String>,
    features: Vec<f64>,
    identifier_names: Vec<String>,
    identifiers: Option<Vec<Vec<String>>>,
    labels: Vec<String>,
    binary_labels: Vec<u8>,
    meta: DatasetMeta,
}

#[derive(Debug, Clone, Default)]
pub struct LoadOptions {
    /// Name recorded in the dataset meta; defaults to the file stem.
    pub name: Option<String>,
    pub keep_identifiers: bool,
}

impl FlowTable {
    /// Builds a table from in-memory parts, computing labels and meta.
    pub fn from_parts(
        name: &str,
        feature_names: Vec<String>,
        features: Vec<f64>,
        labels: Vec<String>,
    ) -> Result<Self> {
        if feature_names.is_empty() || features.len() != feature_names.len() * labels.len() {
            return Err(Error::Shape("features do not match rows x columns".into()));
        }
        let mut table = Self {
            feature_names,
            features,
            identifier_names: Vec::new(),
            identifiers: None,
            labels,
            binary_labels: Vec::new(),
            meta: DatasetMeta {
                name: name.to_string(),
                n_flows: 0,
                benign_fraction: 0.0,
                attack_class_counts: BTreeMap::new(),
            },
        };
        binarize_labels(&mut table)?;
        Ok(table)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn meta(&self) -> &DatasetMeta {
        &self.meta
    }

    pub fn feature_names(&self) -> &[String] {
        &self.feature_names
    }

    pub fn feature_row(&self, i: usize) -> &[f64] {
        let w = self.feature_names.len();
        &self.features[i * w..(i + 1) * w]
    }

    pub fn identifier_names(&self) -> &[String] {
        &self.identifier_names
    }

    /// Identifier values of row `i`, when they were kept at load time.
    pub fn identifiers(&self, i: usize) -> Option<&[String]> {
        self.identifiers.as_ref().map(|rows| rows[i].as_slice())
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn binary_labels(&self) -> &[u8] {
        &self.binary_labels
    }

    /// Rows at `indices`, in the given order, with recomputed meta.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let w = self.feature_names.len();
        let mut features = Vec::with_capacity(indices.len() * w);
        for &i in indices {
            features.extend_from_slice(self.feature_row(i));
        }
        let identifiers = self
            .identifiers
            .as_ref()
            .map(|rows| indices.iter().map(|&i| rows[i].clone()).collect());
        let labels: Vec<String> = indices.iter().map(|&i| self.labels[i].clone()).collect();
        let binary_labels: Vec<u8> = indices.iter().map(|&i| self.binary_labels[i]).collect();
        let meta = compute_meta(&self.meta.name, &labels, &binary_labels);
        Self {
            feature_names: self.feature_names.clone(),
            features,
            identifier_names: self.identifier_names.clone(),
            identifiers,
            labels,
            binary_labels,
            meta,
        }
    }

    /// Model-ready labelled set: selected features plus binary labels.
    pub fn to_labeled(&self) -> Result<LabeledSet> {
        LabeledSet::new(select_features(self)?, self.binary_labels.clone())
    }
}

/// `"Benign"` maps to 0, every other non-empty class string to 1.
pub fn binarize_label(label: &str) -> Option<u8> {
    if label.is_empty() {
        None
    } else if label == BENIGN {
        Some(0)
    } else {
        Some(1)
    }
}

/// Recomputes `binary_labels` and the dataset meta from the class strings.
pub fn binarize_labels(table: &mut FlowTable) -> Result<()> {
    let mut binary = Vec::with_capacity(table.labels.len());
    for (row, label) in table.labels.iter().enumerate() {
        let b = binarize_label(label).ok_or_else(|| Error::Label {
            row,
            detail: "empty class label".into(),
        })?;
        binary.push(b);
    }
    table.meta = compute_meta(&table.meta.name, &table.labels, &binary);
    table.binary_labels = binary;
    Ok(())
}

fn compute_meta(name: &str, labels: &[String], binary: &[u8]) -> DatasetMeta {
    let mut attack_class_counts = BTreeMap::new();
    let mut benign = 0usize;
    for (label, &b) in labels.iter().zip(binary) {
        if b == 0 {
            benign += 1;
        } else {
            *attack_class_counts.entry(label.clone()).or_insert(0) += 1;
        }
    }
    let n = labels.len();
    DatasetMeta {
        name: name.to_string(),
        n_flows: n,
        benign_fraction: if n == 0 { 0.0 } else { benign as f64 / n as f64 },
        attack_class_counts,
    }
}

struct ParsedRow {
    features: Vec<f64>,
    identifiers: Vec<String>,
    label: String,
}

struct ColumnPlan {
    features: Vec<(usize, String)>,
    identifiers: Vec<usize>,
    class: usize,
}

fn parse_record(record: &csv::StringRecord, plan: &ColumnPlan, keep_ids: bool) -> std::result::Result<ParsedRow, String> {
    let mut features = Vec::with_capacity(plan.features.len());
    for (idx, name) in &plan.features {
        let raw = record.get(*idx).ok_or_else(|| format!("missing field {name}"))?;
        let v: f64 = raw
            .trim()
            .parse()
            .map_err(|_| format!("column {name}: cannot parse {raw:?} as a number"))?;
        if !v.is_finite() {
            return Err(format!("column {name}: non-finite value {raw:?}"));
        }
        features.push(v);
    }
    let label = record
        .get(plan.class)
        .map(|s| s.trim().to_string())
        .unwrap_or_default();
    if binarize_label(&label).is_none() {
        return Err("empty class label".into());
    }
    let identifiers = if keep_ids {
        plan.identifiers
            .iter()
            .map(|&i| record.get(i).unwrap_or_default().to_string())
            .collect()
    } else {
        Vec::new()
    };
    Ok(ParsedRow {
        features,
        identifiers,
        label,
    })
}

/// Streams a flow CSV into a [`FlowTable`].
///
/// Records are read in bounded chunks and each chunk is parsed in parallel;
/// rows are appended in file order. Malformed rows are skipped with a
/// warning as long as they stay within [`MAX_BAD_ROW_FRACTION`].
pub fn load_netflow_csv(path: impl AsRef<Path>, schema: &Schema, opts: &LoadOptions) -> Result<FlowTable> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let name = opts.name.clone().unwrap_or_else(|| {
        path.file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "dataset".into())
    });
    read_netflow(file, &name, schema, opts).map_err(|e| match e {
        Error::Format { detail, .. } => Error::format(path, detail),
        other => other,
    })
}

/// Same as [`load_netflow_csv`] over any reader.
pub fn read_netflow<R: Read>(reader: R, name: &str, schema: &Schema, opts: &LoadOptions) -> Result<FlowTable> {
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .flexible(true)
        .from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| Error::format(name, format!("cannot read header: {e}")))?
        .clone();
    if headers.is_empty() {
        return Err(Error::format(name, "missing header row"));
    }
    let position = |col: &str| headers.iter().position(|h| h.trim() == col);
    let missing: Vec<String> = schema
        .columns()
        .iter()
        .filter(|c| position(&c.name).is_none())
        .map(|c| c.name.clone())
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingColumns { missing });
    }
    let plan = ColumnPlan {
        features: schema
            .columns()
            .iter()
            .filter(|c| c.role == ColumnRole::Feature)
            .map(|c| (position(&c.name).unwrap(), c.name.clone()))
            .collect(),
        identifiers: schema
            .columns()
            .iter()
            .filter(|c| c.role == ColumnRole::Identifier)
            .map(|c| position(&c.name).unwrap())
            .collect(),
        class: position(schema.class_column()).unwrap(),
    };

    let mut features = Vec::new();
    let mut identifiers = opts.keep_identifiers.then(Vec::new);
    let mut labels = Vec::new();
    let mut bad = 0usize;
    let mut first_bad: Option<String> = None;
    let mut total = 0usize;
    let mut chunk: Vec<std::result::Result<csv::StringRecord, String>> = Vec::with_capacity(CHUNK_ROWS);

    loop {
        chunk.clear();
        for rec in rdr.records().take(CHUNK_ROWS) {
            chunk.push(rec.map_err(|e| e.to_string()));
        }
        if chunk.is_empty() {
            break;
        }
        let parsed = par::map_slice(&chunk, |rec| match rec {
            Ok(r) => parse_record(r, &plan, opts.keep_identifiers),
            Err(e) => Err(e.clone()),
        });
        for (offset, row) in parsed.into_iter().enumerate() {
            // header is line 1
            let line = total + offset + 2;
            match row {
                Ok(row) => {
                    features.extend(row.features);
                    labels.push(row.label);
                    if let Some(ids) = identifiers.as_mut() {
                        ids.push(row.identifiers);
                    }
                }
                Err(detail) => {
                    bad += 1;
                    log::warn!("{name}: skipping line {line}: {detail}");
                    first_bad.get_or_insert_with(|| format!("line {line}: {detail}"));
                }
            }
        }
        total += chunk.len();
    }

    let limit = (total as f64 * MAX_BAD_ROW_FRACTION).floor() as usize;
    if bad > limit {
        return Err(Error::MalformedRows {
            bad,
            total,
            limit,
            first: first_bad.unwrap_or_default(),
        });
    }
    let mut table = FlowTable::from_parts(name, schema.feature_names(), features, labels)?;
    table.identifier_names = schema.identifier_names();
    table.identifiers = identifiers;
    Ok(table)
}

/// The model input matrix: feature-role columns in schema order.
/// Identifier and label columns never appear.
pub fn select_features(table: &FlowTable) -> Result<FeatureMatrix> {
    let expected = table.feature_names.len();
    if expected == 0 || table.features.len() != expected * table.len() {
        return Err(Error::State(format!(
            "table holds {} values for {} rows of {expected} features",
            table.features.len(),
            table.len()
        )));
    }
    if table
        .feature_names
        .iter()
        .any(|f| table.identifier_names.contains(f))
    {
        return Err(Error::State("identifier column selected as feature".into()));
    }
    FeatureMatrix::new(table.features.clone(), table.feature_names.clone())
}

/// Per-column min-max bounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScalerParams {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl ScalerParams {
    pub fn n_cols(&self) -> usize {
        self.min.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.min.len() != self.max.len() {
            return Err(Error::Validation("scaler min/max lengths differ".into()));
        }
        for (i, (lo, hi)) in self.min.iter().zip(&self.max).enumerate() {
            if !lo.is_finite() || !hi.is_finite() || lo > hi {
                return Err(Error::Validation(format!("scaler column {i}: invalid range [{lo}, {hi}]")));
            }
        }
        Ok(())
    }

    #[inline]
    fn scale(&self, col: usize, v: f64) -> f64 {
        let (lo, hi) = (self.min[col], self.max[col]);
        if hi > lo {
            ((v - lo) / (hi - lo)).clamp(0.0, 1.0)
        } else {
            0.0
        }
    }
}

pub fn fit_scaler(x: &FeatureMatrix) -> Result<ScalerParams> {
    if x.is_empty() {
        return Err(Error::Data("cannot fit a scaler on zero rows".into()));
    }
    let mut min = vec![f64::INFINITY; x.n_cols()];
    let mut max = vec![f64::NEG_INFINITY; x.n_cols()];
    for row in x.rows() {
        for (j, v) in row.iter().enumerate() {
            min[j] = min[j].min(*v);
            max[j] = max[j].max(*v);
        }
    }
    Ok(ScalerParams { min, max })
}

/// `(v - min) / (max - min)` clipped to `[0, 1]`; constant columns map to 0.
pub fn apply_scaler(params: &ScalerParams, x: &FeatureMatrix) -> Result<FeatureMatrix> {
    if params.n_cols() != x.n_cols() {
        return Err(Error::Shape(format!(
            "scaler fitted on {} columns, matrix has {}",
            params.n_cols(),
            x.n_cols()
        )));
    }
    let w = x.n_cols();
    let mut values = vec![0.0; x.values().len()];
    par::fill_indexed(&mut values, |k| params.scale(k % w, x.values()[k]));
    FeatureMatrix::new(values, x.column_names().to_vec())
}

/// Largest-remainder allocation of `total` slots across `counts`.
/// Ties in the remainder go to the lower class index.
pub fn largest_remainder(counts: &[usize], total: usize) -> Vec<usize> {
    let population: usize = counts.iter().sum();
    if population == 0 {
        return vec![0; counts.len()];
    }
    let mut alloc = Vec::with_capacity(counts.len());
    let mut remainders = Vec::with_capacity(counts.len());
    for (c, &count) in counts.iter().enumerate() {
        let exact = total as u128 * count as u128;
        alloc.push((exact / population as u128) as usize);
        remainders.push((exact % population as u128, c));
    }
    let mut leftover = total - alloc.iter().sum::<usize>();
    remainders.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
    for &(_, c) in &remainders {
        if leftover == 0 {
            break;
        }
        if alloc[c] < counts[c] {
            alloc[c] += 1;
            leftover -= 1;
        }
    }
    alloc
}

fn class_members(labels: &[u8]) -> [Vec<usize>; 2] {
    let mut members = [Vec::new(), Vec::new()];
    for (i, &l) in labels.iter().enumerate() {
        members[usize::from(l.min(1))].push(i);
    }
    members
}

/// Seeded stratified draw of `n` row indices, returned in ascending order.
pub fn stratified_indices(labels: &[u8], n: usize, seed: u64) -> Result<Vec<usize>> {
    if n > labels.len() {
        return Err(Error::Argument(format!(
            "cannot sample {n} rows from {}",
            labels.len()
        )));
    }
    let mut members = class_members(labels);
    let quota = largest_remainder(&[members[0].len(), members[1].len()], n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = Vec::with_capacity(n);
    for (class, q) in members.iter_mut().zip(quota) {
        let (chosen, _) = class.partial_shuffle(&mut rng, q);
        picked.extend_from_slice(chosen);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Seeded stratified split. The held-out side receives `floor(n * fraction)`
/// rows; both index lists are ascending.
pub fn split_indices(labels: &[u8], fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Argument(format!("split fraction {fraction} outside [0, 1]")));
    }
    let n_test = ((labels.len() as f64) * fraction + 1e-9).floor() as usize;
    let test = stratified_indices(labels, n_test, seed)?;
    let mut is_test = vec![false; labels.len()];
    test.iter().for_each(|&i| is_test[i] = true);
    let train = (0..labels.len()).filter(|&i| !is_test[i]).collect();
    Ok((train, test))
}

pub fn stratified_sample(table: &FlowTable, n: usize, seed: u64) -> Result<FlowTable> {
    let idx = stratified_indices(table.binary_labels(), n, seed)?;
    Ok(table.subset(&idx))
}

/// Returns `(train, test)` where test holds `floor(n * fraction)` rows.
pub fn split(table: &FlowTable, fraction: f64, seed: u64) -> Result<(FlowTable, FlowTable)> {
    let (train, test) = split_indices(table.binary_labels(), fraction, seed)?;
    Ok((table.subset(&train), table.subset(&test)))
}

const MATRIX_MAGIC: &str = "dinids-matrix v1";

/// Writes a matrix as a text header followed by little-endian f64 rows.
///
/// ```text
/// dinids-matrix v1
/// rows=<n>
/// cols=<d>
/// columns=<name,name,...>
/// end_header
/// <n*d little-endian f64>
/// ```
pub fn write_matrix(path: impl AsRef<Path>, x: &FeatureMatrix) -> Result<()> {
    write_matrix_annotated(path, x, &[])
}

/// [`write_matrix`] with extra `key=value` header lines, which
/// [`read_matrix`] skips.
pub fn write_matrix_annotated(path: impl AsRef<Path>, x: &FeatureMatrix, extra: &[(&str, &str)]) -> Result<()> {
    let path = path.as_ref();
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    let io = |e| Error::io(path, e);
    writeln!(w, "{MATRIX_MAGIC}").map_err(io)?;
    writeln!(w, "rows={}", x.n_rows()).map_err(io)?;
    writeln!(w, "cols={}", x.n_cols()).map_err(io)?;
    writeln!(w, "columns={}", x.column_names().join(",")).map_err(io)?;
    for (k, v) in extra {
        writeln!(w, "{k}={v}").map_err(io)?;
    }
    writeln!(w, "end_header").map_err(io)?;
    for v in x.values() {
        w.write_all(&v.to_le_bytes()).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn read_matrix(path: impl AsRef<Path>) -> Result<FeatureMatrix> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = BufReader::new(file);
    let mut header = BTreeMap::new();
    let mut line = String::new();
    let mut first = true;
    loop {
        line.clear();
        if r.read_line(&mut line).map_err(|e| Error::io(path, e))? == 0 {
            return Err(Error::format(path, "header not terminated"));
        }
        let text = line.trim_end_matches('\n');
        if first {
            if text != MATRIX_MAGIC {
                return Err(Error::format(path, "not a dinids matrix file"));
            }
            first = false;
            continue;
        }
        if text == "end_header" {
            break;
        }
        let (k, v) = text
            .split_once('=')
            .ok_or_else(|| Error::format(path, format!("bad header line {text:?}")))?;
        header.insert(k.to_string(), v.to_string());
    }
    let get = |k: &str| -> Result<usize> {
        header
            .get(k)
            .and_then(|v| v.parse().ok())
            .ok_or_else(|| Error::format(path, format!("missing or invalid {k}")))
    };
    let (rows, cols) = (get("rows")?, get("cols")?);
    let names: Vec<String> = header
        .get("columns")
        .map(|c| c.split(',').map(str::to_string).collect())
        .unwrap_or_default();
    if names.len() != cols {
        return Err(Error::format(path, "column names do not match cols"));
    }
    let mut bytes = Vec::new();
    r.read_to_end(&mut bytes).map_err(|e| Error::io(path, e))?;
    if bytes.len() != rows * cols * 8 {
        return Err(Error::format(
            path,
            format!("payload has {} bytes, expected {}", bytes.len(), rows * cols * 8),
        ));
    }
    let values = bytes
        .chunks_exact(8)
        .map(|b| f64::from_le_bytes(b.try_into().unwrap()))
        .collect();
    FeatureMatrix::new(values, names)
}
