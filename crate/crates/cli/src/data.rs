//! Config assembly and dataset loading shared by the commands.

use std::path::Path;

use dinids::config::PipelineConfig;
use dinids::dataset::{self, FlowTable, LoadOptions, Schema};
use dinids::Error;

use crate::commands::CliError;
use crate::DataArgs;

/// The config file (or defaults) with command-line overrides applied.
pub fn config(args: &DataArgs) -> Result<PipelineConfig, CliError> {
    let mut cfg = match &args.config {
        Some(path) => PipelineConfig::from_file(path)?,
        None => PipelineConfig::default(),
    };
    apply_overrides(&mut cfg, args);
    Ok(cfg)
}

pub fn apply_overrides(cfg: &mut PipelineConfig, args: &DataArgs) {
    if let Some(seed) = args.seed {
        cfg.data_seed = seed;
        cfg.set_seed(seed);
    }
    if let Some(n) = args.subsample {
        cfg.subsample = Some(n);
    }
    if let Some(schema) = &args.schema {
        cfg.schema = Some(schema.clone());
    }
}

pub fn schema(cfg: &PipelineConfig) -> Result<Schema, CliError> {
    match &cfg.schema {
        Some(path) => Ok(Schema::from_file(PipelineConfig::resolve(path)?)?),
        None => Ok(Schema::nfv2()),
    }
}

/// Loads a flow CSV, or a `.matrix` cache written by `ingest` together
/// with its `.labels` sidecar, then applies the configured subsample.
pub fn load(path: &Path, schema: &Schema, cfg: &PipelineConfig) -> Result<FlowTable, CliError> {
    let path = PipelineConfig::resolve(path)?;
    let table = if path.extension().is_some_and(|e| e == "matrix") {
        let x = dataset::read_matrix(&path)?;
        let labels_path = path.with_extension("labels");
        let text = std::fs::read_to_string(&labels_path).map_err(|e| CliError::io(&labels_path, e))?;
        let labels: Vec<String> = text.lines().map(str::to_string).collect();
        let name = path.file_stem().unwrap_or_default().to_string_lossy();
        FlowTable::from_parts(&name, x.column_names().to_vec(), x.values().to_vec(), labels)?
    } else {
        dataset::load_netflow_csv(&path, schema, &LoadOptions::default())?
    };
    match cfg.subsample {
        Some(n) if n < table.len() => Ok(dataset::stratified_sample(&table, n, cfg.data_seed)?),
        _ => Ok(table),
    }
}

/// Stratified (train, test) row indices of the labelled training dataset.
pub fn source_split(table: &FlowTable, cfg: &PipelineConfig) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    Ok(dataset::split_indices(table.binary_labels(), cfg.test_fraction, cfg.data_seed)?)
}

/// (pool, test) row indices of the target dataset. The split ignores
/// labels so they cannot influence which rows reach training.
pub fn target_split(table: &FlowTable, cfg: &PipelineConfig) -> Result<(Vec<usize>, Vec<usize>), CliError> {
    Ok(dataset::split_indices(&vec![0; table.len()], cfg.test_fraction, cfg.data_seed)?)
}

pub fn check_width(table: &FlowTable, expected: usize) -> Result<(), CliError> {
    let width = table.feature_names().len();
    if width == expected {
        Ok(())
    } else {
        Err(Error::Schema(format!(
            "schema drift: the bundle expects {expected} features but {} has {width}",
            table.meta().name
        ))
        .into())
    }
}
