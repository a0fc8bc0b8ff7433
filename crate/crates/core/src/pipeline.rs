//! End-to-end detectors: scaler plus the models each pipeline needs.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dann::{self, DannModel, DannTrainConfig, TrainHistory};
use crate::dataset::{self, FeatureMatrix, LabeledSet, ScalerParams};
use crate::error::{Error, Result};
use crate::eval;
use crate::osvm::{self, OsvmConfig, OsvmModel};

/// The four detectors compared by the evaluation protocols.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum PipelineKind {
    /// Adversarial feature extractor followed by a one-class SVM.
    #[serde(rename = "DI-NIDS")]
    DiNids,
    /// The adversarially trained label classifier on its own.
    #[serde(rename = "DANN")]
    Dann,
    /// Extractor plus label classifier without the domain branch.
    #[serde(rename = "FeedForward")]
    FeedForward,
    /// One-class SVM on scaled raw features.
    #[serde(rename = "OSVM")]
    Osvm,
}

impl PipelineKind {
    pub const ALL: [PipelineKind; 4] = [
        PipelineKind::FeedForward,
        PipelineKind::Osvm,
        PipelineKind::Dann,
        PipelineKind::DiNids,
    ];

    pub fn name(self) -> &'static str {
        match self {
            PipelineKind::DiNids => "DI-NIDS",
            PipelineKind::Dann => "DANN",
            PipelineKind::FeedForward => "FeedForward",
            PipelineKind::Osvm => "OSVM",
        }
    }

    fn uses_dann(self) -> bool {
        !matches!(self, PipelineKind::Osvm)
    }

    fn uses_osvm(self) -> bool {
        matches!(self, PipelineKind::DiNids | PipelineKind::Osvm)
    }
}

impl fmt::Display for PipelineKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for PipelineKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().replace(['-', '_'], "").as_str() {
            "dinids" => Ok(PipelineKind::DiNids),
            "dann" => Ok(PipelineKind::Dann),
            "feedforward" | "ff" => Ok(PipelineKind::FeedForward),
            "osvm" => Ok(PipelineKind::Osvm),
            _ => Err(Error::Argument(format!("unknown pipeline {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub dann: DannTrainConfig,
    pub osvm: OsvmConfig,
    /// Benign rows used to fit the one-class SVM are subsampled to this.
    pub osvm_max_train: usize,
    /// Select `(nu, gamma)` from [`NU_GRID`] x [`GAMMA_GRID`] on a
    /// source validation split.
    pub osvm_grid: bool,
}

impl Default for TrainSettings {
    fn default() -> Self {
        Self {
            dann: DannTrainConfig::default(),
            osvm: OsvmConfig::default(),
            osvm_max_train: 5000,
            osvm_grid: false,
        }
    }
}

pub const NU_GRID: [f64; 3] = [0.01, 0.05, 0.1];
pub const GAMMA_GRID: [f64; 3] = [0.01, 0.1, 1.0];

/// A fitted detector operating on unscaled feature rows.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedPipeline {
    pub kind: PipelineKind,
    pub scaler: ScalerParams,
    pub dann: Option<DannModel>,
    pub osvm: Option<OsvmModel>,
    pub history: Option<TrainHistory>,
}

impl TrainedPipeline {
    pub fn validate(&self) -> Result<()> {
        self.scaler.validate()?;
        if self.kind.uses_dann() != self.dann.is_some() || self.kind.uses_osvm() != self.osvm.is_some() {
            return Err(Error::Validation(format!("{} pipeline has the wrong set of models", self.kind)));
        }
        if let Some(d) = &self.dann {
            d.validate().map_err(|e| Error::Validation(e.to_string()))?;
            if d.feature_extractor.in_dim() != self.scaler.n_cols() {
                return Err(Error::Validation("scaler width differs from extractor input".into()));
            }
        }
        if let Some(o) = &self.osvm {
            o.validate()?;
            let expected = match &self.dann {
                Some(d) if self.kind == PipelineKind::DiNids => d.feature_extractor.out_dim(),
                _ => self.scaler.n_cols(),
            };
            if o.dim() != expected {
                return Err(Error::Validation(format!(
                    "one-class SVM expects {} inputs, pipeline provides {expected}",
                    o.dim()
                )));
            }
        }
        Ok(())
    }

    pub fn input_width(&self) -> usize {
        self.scaler.n_cols()
    }

    /// Anomaly scores (negative = attack side) for score-based pipelines.
    pub fn scores(&self, raw: &FeatureMatrix) -> Result<Option<Vec<f64>>> {
        let Some(osvm) = &self.osvm else {
            return Ok(None);
        };
        let scaled = dataset::apply_scaler(&self.scaler, raw)?;
        let input = match (&self.dann, self.kind) {
            (Some(d), PipelineKind::DiNids) => d.extract_features(&scaled)?,
            _ => scaled,
        };
        osvm.decision_batch(&input).map(Some)
    }

    /// Binary predictions, 1 = attack.
    pub fn predict(&self, raw: &FeatureMatrix) -> Result<Vec<u8>> {
        let scaled = dataset::apply_scaler(&self.scaler, raw)?;
        match self.kind {
            PipelineKind::DiNids => {
                let feats = self.dann.as_ref().expect("validated").extract_features(&scaled)?;
                self.osvm.as_ref().expect("validated").predict_labels(&feats)
            }
            PipelineKind::Dann | PipelineKind::FeedForward => {
                self.dann.as_ref().expect("validated").predict_labels(&scaled)
            }
            PipelineKind::Osvm => self.osvm.as_ref().expect("validated").predict_labels(&scaled),
        }
    }
}

/// Seeded subsample of at most `max` rows, in original order.
fn cap_rows(x: &FeatureMatrix, max: usize, seed: u64) -> FeatureMatrix {
    if x.n_rows() <= max {
        return x.clone();
    }
    let mut idx: Vec<usize> = (0..x.n_rows()).collect();
    let (chosen, _) = idx.partial_shuffle(&mut ChaCha8Rng::seed_from_u64(seed), max);
    let mut chosen = chosen.to_vec();
    chosen.sort_unstable();
    x.select_rows(&chosen)
}

fn fit_osvm(benign: &FeatureMatrix, settings: &TrainSettings) -> Result<OsvmModel> {
    let rows = cap_rows(benign, settings.osvm_max_train, settings.osvm.seed);
    osvm::train_osvm(&rows, &settings.osvm)
}

/// Picks `(nu, gamma)` by validation F1. `project` maps scaled rows into
/// the space the SVM operates in.
fn select_osvm(
    scaled: &LabeledSet,
    settings: &TrainSettings,
    project: &dyn Fn(&FeatureMatrix) -> Result<FeatureMatrix>,
) -> Result<OsvmConfig> {
    let seed = settings.osvm.seed;
    let (fit_idx, val_idx) = dataset::split_indices(&scaled.y, settings.dann.validation_split, seed)?;
    let fit = scaled.subset(&fit_idx);
    let val = scaled.subset(&val_idx);
    let fit_benign = project(&fit.benign())?;
    let val_x = project(&val.x)?;
    let mut best: Option<(f64, OsvmConfig)> = None;
    for nu in NU_GRID {
        for gamma in GAMMA_GRID {
            let cfg = OsvmConfig {
                nu,
                gamma: Some(gamma),
                ..settings.osvm.clone()
            };
            let model = osvm::train_osvm(&cap_rows(&fit_benign, settings.osvm_max_train, seed), &cfg)?;
            let pred = model.predict_labels(&val_x)?;
            let f1 = eval::metrics(&eval::confusion(&val.y, &pred)?).f1;
            log::debug!("osvm grid nu={nu} gamma={gamma}: f1={f1:.4}");
            if best.as_ref().is_none_or(|(b, _)| f1 > *b) {
                best = Some((f1, cfg));
            }
        }
    }
    Ok(best.expect("grid is nonempty").1)
}

/// Fits a pipeline on labelled source rows and (for the adversarial
/// pipelines) unlabelled target rows. Without target rows the source rows
/// double as the target pool.
pub fn train_pipeline(
    kind: PipelineKind,
    source: &LabeledSet,
    target: Option<&FeatureMatrix>,
    settings: &TrainSettings,
) -> Result<TrainedPipeline> {
    if source.is_empty() {
        return Err(Error::Data("source set is empty".into()));
    }
    let scaler = dataset::fit_scaler(&source.x).map_err(|e| e.in_stage("scale"))?;
    let xs = dataset::apply_scaler(&scaler, &source.x)?;
    let scaled = LabeledSet::new(xs, source.y.clone())?;
    let xt = match target {
        Some(t) => dataset::apply_scaler(&scaler, t)?,
        None => scaled.x.clone(),
    };

    let mut pipeline = TrainedPipeline {
        kind,
        scaler,
        dann: None,
        osvm: None,
        history: None,
    };
    match kind {
        PipelineKind::DiNids | PipelineKind::Dann => {
            let (model, history) =
                dann::train_dann(&scaled.x, &scaled.y, &xt, &settings.dann).map_err(|e| e.in_stage("train_dann"))?;
            if kind == PipelineKind::DiNids {
                let project = |m: &FeatureMatrix| model.extract_features(m);
                let osvm_settings = if settings.osvm_grid {
                    TrainSettings {
                        osvm: select_osvm(&scaled, settings, &project).map_err(|e| e.in_stage("osvm_grid"))?,
                        ..settings.clone()
                    }
                } else {
                    settings.clone()
                };
                let benign = model.extract_features(&scaled.benign()).map_err(|e| e.in_stage("extract_features"))?;
                pipeline.osvm = Some(fit_osvm(&benign, &osvm_settings).map_err(|e| e.in_stage("train_osvm"))?);
            }
            pipeline.dann = Some(model);
            pipeline.history = Some(history);
        }
        PipelineKind::FeedForward => {
            let (model, history) = dann::train_feedforward(&scaled.x, &scaled.y, &settings.dann)
                .map_err(|e| e.in_stage("train_feedforward"))?;
            pipeline.dann = Some(model);
            pipeline.history = Some(history);
        }
        PipelineKind::Osvm => {
            let project = |m: &FeatureMatrix| Ok(m.clone());
            let osvm_settings = if settings.osvm_grid {
                TrainSettings {
                    osvm: select_osvm(&scaled, settings, &project).map_err(|e| e.in_stage("osvm_grid"))?,
                    ..settings.clone()
                }
            } else {
                settings.clone()
            };
            pipeline.osvm = Some(fit_osvm(&scaled.benign(), &osvm_settings).map_err(|e| e.in_stage("train_osvm"))?);
        }
    }
    Ok(pipeline)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn kind_names_round_trip() {
        for k in PipelineKind::ALL {
            assert_eq!(k.name().parse::<PipelineKind>().unwrap(), k);
        }
        assert_eq!("di_nids".parse::<PipelineKind>().unwrap(), PipelineKind::DiNids);
        assert!("svm".parse::<PipelineKind>().is_err());
    }

    #[test]
    fn cap_rows_is_seeded_and_ordered() {
        let x = FeatureMatrix::with_width((0..50).map(f64::from).collect(), 1, "c").unwrap();
        let a = cap_rows(&x, 10, 3);
        assert_eq!(a, cap_rows(&x, 10, 3));
        assert_eq!(a.n_rows(), 10);
        assert!(a.values().windows(2).all(|w| w[0] < w[1]));
        assert_eq!(cap_rows(&x, 100, 3), x);
    }
}
