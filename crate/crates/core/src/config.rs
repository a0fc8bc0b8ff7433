//! Flat `section.key=value` run configuration.
//!
//! ```text
//! # comments and blank lines are ignored
//! data.source=NF-UNSW-NB15-v2.csv
//! dann.epochs=50
//! dann.lambda=scheduled
//! osvm.gamma=auto
//! ```
//!
//! Relative data paths resolve against the config file's directory, then
//! against `DINIDS_DATA_DIR`. The config hash is the SHA-256 of the
//! canonical rendering, so two files that differ only in layout, comments
//! or defaulted keys hash the same.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use crate::dann::{DannTrainConfig, LambdaMode};
use crate::error::{Error, Result};
use crate::nn::SgdConfig;
use crate::osvm::OsvmConfig;
use crate::pipeline::{PipelineKind, TrainSettings};

pub const DATA_DIR_ENV: &str = "DINIDS_DATA_DIR";

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub kind: PipelineKind,
    pub source: Option<PathBuf>,
    pub target: Option<PathBuf>,
    pub schema: Option<PathBuf>,
    /// Stratified rows kept per dataset; `None` keeps everything.
    pub subsample: Option<usize>,
    pub data_seed: u64,
    pub test_fraction: f64,
    pub settings: TrainSettings,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        let mut settings = TrainSettings::default();
        settings.dann.sgd.seed = 1;
        settings.osvm.seed = 1;
        Self {
            kind: PipelineKind::DiNids,
            source: None,
            target: None,
            schema: None,
            subsample: None,
            data_seed: 1,
            test_fraction: 0.3,
            settings,
            output_dir: PathBuf::from("dinids-out"),
        }
    }
}

fn parse_num<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
    v.parse()
        .map_err(|_| Error::Argument(format!("{key}: cannot parse {v:?}")))
}

fn parse_bool(key: &str, v: &str) -> Result<bool> {
    match v {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        _ => Err(Error::Argument(format!("{key}: expected true or false, got {v:?}"))),
    }
}

impl PipelineConfig {
    /// Parses config text. Unknown keys are rejected.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = Self::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| Error::Argument(format!("line {}: expected key=value", lineno + 1)))?;
            cfg.set(k.trim(), v.trim())
                .map_err(|e| Error::Argument(format!("line {}: {e}", lineno + 1)))?;
        }
        Ok(cfg)
    }

    /// Reads a config file, resolving relative data paths against its
    /// directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::parse(&text)?;
        let base = path.parent().unwrap_or(Path::new("."));
        for p in [&mut cfg.source, &mut cfg.target, &mut cfg.schema].into_iter().flatten() {
            if p.is_relative() && base.join(&*p).exists() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    /// Applies one `section.key=value` assignment.
    pub fn set(&mut self, key: &str, v: &str) -> Result<()> {
        let dann = &mut self.settings.dann;
        let osvm = &mut self.settings.osvm;
        match key {
            "pipeline.kind" => self.kind = v.parse()?,
            "data.source" => self.source = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.target" => self.target = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.schema" => self.schema = (!v.is_empty()).then(|| PathBuf::from(v)),
            "data.subsample" => {
                self.subsample = match v {
                    "" | "all" | "none" => None,
                    _ => Some(parse_num(key, v)?),
                }
            }
            "data.seed" => self.data_seed = parse_num(key, v)?,
            "data.test_fraction" => self.test_fraction = parse_num(key, v)?,
            "output.dir" => self.output_dir = PathBuf::from(v),
            "dann.epochs" => dann.epochs = parse_num(key, v)?,
            "dann.learning_rate" => dann.sgd.learning_rate = parse_num(key, v)?,
            "dann.batch_size" => dann.sgd.batch_size = parse_num(key, v)?,
            "dann.dropout" => dann.sgd.dropout_ratio = parse_num(key, v)?,
            "dann.seed" => dann.sgd.seed = parse_num(key, v)?,
            "dann.validation_split" => dann.validation_split = parse_num(key, v)?,
            "dann.folds" => dann.folds = parse_num(key, v)?,
            "dann.patience" => dann.early_stop_patience = parse_num(key, v)?,
            "dann.shuffle" => dann.shuffle = parse_bool(key, v)?,
            "dann.anneal_lr" => dann.anneal_lr = parse_bool(key, v)?,
            "dann.lambda" => {
                dann.lambda = match v {
                    "scheduled" => match dann.lambda {
                        LambdaMode::Scheduled { .. } => dann.lambda,
                        LambdaMode::Fixed(_) => LambdaMode::default(),
                    },
                    _ => LambdaMode::Fixed(parse_num(key, v)?),
                }
            }
            "dann.gamma_rate" => dann.lambda = LambdaMode::Scheduled { gamma_rate: parse_num(key, v)? },
            "osvm.nu" => osvm.nu = parse_num(key, v)?,
            "osvm.gamma" => osvm.gamma = if v == "auto" { None } else { Some(parse_num(key, v)?) },
            "osvm.tolerance" => osvm.tolerance = parse_num(key, v)?,
            "osvm.max_passes" => osvm.max_passes = parse_num(key, v)?,
            "osvm.seed" => osvm.seed = parse_num(key, v)?,
            "osvm.max_train" => self.settings.osvm_max_train = parse_num(key, v)?,
            "osvm.grid" => self.settings.osvm_grid = parse_bool(key, v)?,
            _ => return Err(Error::Argument(format!("unknown config key {key:?}"))),
        }
        Ok(())
    }

    /// Sets every model seed.
    pub fn set_seed(&mut self, seed: u64) {
        self.settings.dann.sgd.seed = seed;
        self.settings.osvm.seed = seed;
    }

    pub fn seeds(&self) -> BTreeMap<String, u64> {
        BTreeMap::from([
            ("data".to_string(), self.data_seed),
            ("dann".to_string(), self.settings.dann.sgd.seed),
            ("osvm".to_string(), self.settings.osvm.seed),
        ])
    }

    /// Canonical `key=value` rendering, one line per key, sorted. Paths are
    /// rendered by file name only so the hash does not depend on where a
    /// dataset lives.
    pub fn canonical(&self) -> String {
        let d = &self.settings.dann;
        let o = &self.settings.osvm;
        let name = |p: &Option<PathBuf>| {
            p.as_ref()
                .and_then(|p| p.file_name())
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default()
        };
        let mut kv: BTreeMap<&str, String> = BTreeMap::new();
        kv.insert("pipeline.kind", self.kind.to_string());
        kv.insert("data.source", name(&self.source));
        kv.insert("data.target", name(&self.target));
        kv.insert("data.schema", name(&self.schema));
        kv.insert(
            "data.subsample",
            self.subsample.map(|n| n.to_string()).unwrap_or_else(|| "all".into()),
        );
        kv.insert("data.seed", self.data_seed.to_string());
        kv.insert("data.test_fraction", self.test_fraction.to_string());
        kv.insert("dann.epochs", d.epochs.to_string());
        kv.insert("dann.learning_rate", d.sgd.learning_rate.to_string());
        kv.insert("dann.batch_size", d.sgd.batch_size.to_string());
        kv.insert("dann.dropout", d.sgd.dropout_ratio.to_string());
        kv.insert("dann.seed", d.sgd.seed.to_string());
        kv.insert("dann.validation_split", d.validation_split.to_string());
        kv.insert("dann.folds", d.folds.to_string());
        kv.insert("dann.patience", d.early_stop_patience.to_string());
        kv.insert("dann.shuffle", d.shuffle.to_string());
        kv.insert("dann.anneal_lr", d.anneal_lr.to_string());
        match d.lambda {
            LambdaMode::Fixed(l) => kv.insert("dann.lambda", l.to_string()),
            LambdaMode::Scheduled { gamma_rate } => {
                kv.insert("dann.gamma_rate", gamma_rate.to_string());
                kv.insert("dann.lambda", "scheduled".into())
            }
        };
        kv.insert("osvm.nu", o.nu.to_string());
        kv.insert("osvm.gamma", o.gamma.map(|g| g.to_string()).unwrap_or_else(|| "auto".into()));
        kv.insert("osvm.tolerance", o.tolerance.to_string());
        kv.insert("osvm.max_passes", o.max_passes.to_string());
        kv.insert("osvm.seed", o.seed.to_string());
        kv.insert("osvm.max_train", self.settings.osvm_max_train.to_string());
        kv.insert("osvm.grid", self.settings.osvm_grid.to_string());
        let mut out = String::new();
        for (k, v) in kv {
            let _ = writeln!(out, "{k}={v}");
        }
        out
    }

    /// Hex SHA-256 of [`canonical`](Self::canonical).
    pub fn hash(&self) -> String {
        hex_sha256(self.canonical().as_bytes())
    }

    pub fn validate(&self) -> Result<()> {
        self.settings.dann.validate()?;
        self.settings.osvm.validate()?;
        if !(self.test_fraction > 0.0 && self.test_fraction < 1.0) {
            return Err(Error::Argument(format!(
                "data.test_fraction must lie in (0, 1), got {}",
                self.test_fraction
            )));
        }
        if self.settings.osvm_max_train == 0 || self.subsample == Some(0) {
            return Err(Error::Argument("osvm.max_train and data.subsample must be positive".into()));
        }
        Ok(())
    }

    /// Resolves a dataset path: as given if it exists, else under
    /// `DINIDS_DATA_DIR`. Missing files are an I/O error naming the path.
    pub fn resolve(path: &Path) -> Result<PathBuf> {
        if path.exists() {
            return Ok(path.to_path_buf());
        }
        if path.is_relative() {
            if let Some(root) = std::env::var_os(DATA_DIR_ENV) {
                let candidate = Path::new(&root).join(path);
                if candidate.exists() {
                    return Ok(candidate);
                }
            }
        }
        Err(Error::io(
            path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "no such file"),
        ))
    }

    /// Configuration for the synthetic shift experiment used by the tests
    /// and the `synth` command: small batches and a large step size, so
    /// a few hundred epochs finish in seconds.
    pub fn synthetic() -> Self {
        let mut cfg = Self::default();
        cfg.settings.dann = DannTrainConfig {
            epochs: 400,
            early_stop_patience: 400,
            sgd: SgdConfig {
                learning_rate: 0.3,
                batch_size: 32,
                dropout_ratio: 0.2,
                seed: 1,
            },
            ..DannTrainConfig::default()
        };
        cfg.settings.osvm = OsvmConfig {
            seed: 1,
            ..OsvmConfig::default()
        };
        cfg
    }
}

pub fn hex_sha256(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parse_overrides_defaults() {
        let cfg = PipelineConfig::parse(
            "# comment\n\ndann.epochs = 7\ndann.lambda=0.5\nosvm.gamma=0.1\npipeline.kind=OSVM\ndata.subsample=100\n",
        )
        .unwrap();
        assert_eq!(cfg.settings.dann.epochs, 7);
        assert_eq!(cfg.settings.dann.lambda, LambdaMode::Fixed(0.5));
        assert_eq!(cfg.settings.osvm.gamma, Some(0.1));
        assert_eq!(cfg.kind, PipelineKind::Osvm);
        assert_eq!(cfg.subsample, Some(100));
        assert_eq!(cfg.settings.dann.sgd.learning_rate, 1e-4);
    }

    #[test]
    fn unknown_and_malformed_lines_rejected() {
        assert!(PipelineConfig::parse("dann.epoch=3").is_err());
        assert!(PipelineConfig::parse("dann.epochs").is_err());
        assert!(PipelineConfig::parse("dann.epochs=x").is_err());
    }

    #[test]
    fn hash_ignores_layout_and_defaults() {
        let a = PipelineConfig::parse("dann.epochs=50\n").unwrap();
        let b = PipelineConfig::parse("# same\n  dann.epochs = 50  \nosvm.gamma=auto\n").unwrap();
        assert_eq!(a.hash(), b.hash());
        let c = PipelineConfig::parse("dann.epochs=51\n").unwrap();
        assert_ne!(a.hash(), c.hash());
        assert_eq!(a.hash().len(), 64);
    }

    #[test]
    fn canonical_round_trips() {
        let mut cfg = PipelineConfig::synthetic();
        cfg.settings.dann.lambda = LambdaMode::Fixed(0.25);
        let again = PipelineConfig::parse(&cfg.canonical()).unwrap();
        assert_eq!(again.canonical(), cfg.canonical());
    }

    #[test]
    fn sha256_known_vector() {
        assert_eq!(
            hex_sha256(b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
    }
}
