//! Domain-adversarial training of the feature extractor.
//!
//! Three sigmoid networks share one feature space:
//!
//! - feature extractor `39 -> 10 -> 10 -> 10`
//! - label classifier `10 -> 2`
//! - domain classifier `10 -> 10 -> 2`
//!
//! Each mini-batch runs two sub-processes. The label pass pushes source
//! flows through extractor and label classifier and backpropagates the
//! label loss into both. The domain pass pushes an equal-halves
//! source/target batch through extractor and domain classifier; the domain
//! classifier descends the domain loss while the extractor receives that
//! gradient through a reversal layer, scaled by `-lambda`.
//!
//! Both two-unit heads are trained one-vs-rest: the unit for the true class
//! is pushed toward 1 and the other unit toward 0, each term a binary
//! cross-entropy.

use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{self, FeatureMatrix, MODEL_FEATURES};
use crate::error::{Error, Result};
use crate::eval;
use crate::nn::{grl_backward, Activation, DenseNetwork, GradientSet, SgdConfig};
use crate::par;

pub const FEATURE_DIM: usize = 10;
pub const HIDDEN_UNITS: usize = 10;

/// Probabilities are clamped to `[PROB_EPS, 1 - PROB_EPS]` before any log.
pub const PROB_EPS: f64 = 1e-12;

#[inline]
fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `log(1 / p)` for the probability assigned to the true class.
pub fn label_loss(p_true_class: f64) -> f64 {
    if p_true_class >= 1.0 {
        return 0.0;
    }
    -clamp_prob(p_true_class).ln()
}

/// Binary cross-entropy of a target-domain probability against `gamma`
/// (0 = source, 1 = target).
pub fn domain_loss(p_target: f64, gamma: DomainLabel) -> f64 {
    match gamma {
        DomainLabel::Target => label_loss(p_target),
        DomainLabel::Source => label_loss(1.0 - p_target),
    }
}

/// Domain membership of a flow.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DomainLabel {
    Source,
    Target,
}

impl DomainLabel {
    pub fn gamma(self) -> u8 {
        match self {
            DomainLabel::Source => 0,
            DomainLabel::Target => 1,
        }
    }

    pub fn from_gamma(g: u8) -> Option<Self> {
        match g {
            0 => Some(DomainLabel::Source),
            1 => Some(DomainLabel::Target),
            _ => None,
        }
    }
}

/// How the adversarial weight evolves over training.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum LambdaMode {
    Fixed(f64),
    /// `2 / (1 + exp(-rate * progress)) - 1`
    Scheduled { gamma_rate: f64 },
}

impl Default for LambdaMode {
    fn default() -> Self {
        LambdaMode::Scheduled { gamma_rate: 10.0 }
    }
}

/// Adversarial weight at training progress `progress` in `[0, 1]`.
pub fn lambda_at(progress: f64, mode: LambdaMode) -> Result<f64> {
    if !(0.0..=1.0).contains(&progress) {
        return Err(Error::Argument(format!("progress {progress} outside [0, 1]")));
    }
    match mode {
        LambdaMode::Fixed(l) if l >= 0.0 && l.is_finite() => Ok(l),
        LambdaMode::Fixed(l) => Err(Error::Argument(format!("lambda must be nonnegative, got {l}"))),
        LambdaMode::Scheduled { gamma_rate } => Ok(2.0 / (1.0 + (-gamma_rate * progress).exp()) - 1.0),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DannTrainConfig {
    pub epochs: usize,
    pub sgd: SgdConfig,
    pub validation_split: f64,
    pub lambda: LambdaMode,
    /// Seeded repetitions used by the evaluation protocols.
    pub folds: usize,
    pub early_stop_patience: usize,
    /// Reshuffle source and target row order every epoch.
    pub shuffle: bool,
    /// Anneal the step size as `lr / (1 + 10 p)^0.75` over training
    /// progress `p`, the schedule that usually accompanies the lambda ramp.
    pub anneal_lr: bool,
}

impl Default for DannTrainConfig {
    fn default() -> Self {
        Self {
            epochs: 50,
            sgd: SgdConfig::default(),
            validation_split: 0.3,
            lambda: LambdaMode::default(),
            folds: 5,
            early_stop_patience: 5,
            shuffle: true,
            anneal_lr: false,
        }
    }
}

impl DannTrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.sgd.validate()?;
        if self.epochs == 0 || self.folds == 0 || self.early_stop_patience == 0 {
            return Err(Error::Argument("epochs, folds and patience must be positive".into()));
        }
        if !(self.validation_split > 0.0 && self.validation_split < 1.0) {
            return Err(Error::Argument(format!(
                "validation_split must lie in (0, 1), got {}",
                self.validation_split
            )));
        }
        lambda_at(0.0, self.lambda).map(|_| ())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub label_loss: f64,
    pub domain_loss: f64,
    pub validation_f1: f64,
    pub lambda: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    pub records: Vec<EpochRecord>,
    /// Epoch whose parameters were kept.
    pub best_epoch: usize,
}

impl TrainHistory {
    /// Tab-separated table with a header row.
    pub fn write_tsv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "epoch\tlabel_loss\tdomain_loss\tval_f1\tlambda")?;
        for r in &self.records {
            writeln!(
                w,
                "{}\t{}\t{}\t{}\t{}",
                r.epoch, r.label_loss, r.domain_loss, r.validation_f1, r.lambda
            )?;
        }
        Ok(())
    }
}

/// Gradients of the label branch for one batch.
#[derive(Debug, Clone)]
pub struct LabelGradients {
    pub feature_extractor: GradientSet,
    pub label_classifier: GradientSet,
    pub mean_loss: f64,
}

/// Gradients of the domain branch for one batch. The extractor gradient
/// has already passed through the reversal layer.
#[derive(Debug, Clone)]
pub struct DomainGradients {
    pub feature_extractor: GradientSet,
    pub domain_classifier: GradientSet,
    pub mean_loss: f64,
}

/// The three-network assembly.
#[derive(Debug, Clone, PartialEq)]
pub struct DannModel {
    pub feature_extractor: DenseNetwork,
    pub label_classifier: DenseNetwork,
    pub domain_classifier: DenseNetwork,
    pub lambda_mode: LambdaMode,
}

const STREAM_INIT_F: u64 = 1;
const STREAM_INIT_C: u64 = 2;
const STREAM_INIT_D: u64 = 3;
const STREAM_LABEL: u64 = 4;
const STREAM_DOMAIN: u64 = 5;

fn stream(seed: u64, id: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(id);
    rng
}

/// Two-unit one-vs-rest cross-entropy and its gradient w.r.t. the outputs.
fn two_unit_loss(out: &[f64], target: usize) -> (f64, [f64; 2]) {
    let other = 1 - target;
    let p_t = clamp_prob(out[target]);
    let p_o = clamp_prob(out[other]);
    let loss = label_loss(out[target]) + label_loss(1.0 - out[other]);
    let mut grad = [0.0; 2];
    grad[target] = -1.0 / p_t;
    grad[other] = 1.0 / (1.0 - p_o);
    (loss, grad)
}

fn argmax2(out: &[f64]) -> u8 {
    u8::from(out[1] > out[0])
}

impl DannModel {
    /// Seeded network shapes; each network draws from its own stream.
    pub fn new(seed: u64, lambda_mode: LambdaMode) -> Self {
        let build = |dims: &[usize], id| {
            DenseNetwork::uniform(dims, Activation::Sigmoid, &mut stream(seed, id)).expect("static shapes")
        };
        Self {
            feature_extractor: build(&[MODEL_FEATURES, HIDDEN_UNITS, HIDDEN_UNITS, FEATURE_DIM], STREAM_INIT_F),
            label_classifier: build(&[FEATURE_DIM, 2], STREAM_INIT_C),
            domain_classifier: build(&[FEATURE_DIM, HIDDEN_UNITS, 2], STREAM_INIT_D),
            lambda_mode,
        }
    }

    /// All-zero parameters.
    pub fn zeros(lambda_mode: LambdaMode) -> Self {
        let z = |dims: &[usize]| DenseNetwork::zeros(dims, Activation::Sigmoid).expect("static shapes");
        Self {
            feature_extractor: z(&[MODEL_FEATURES, HIDDEN_UNITS, HIDDEN_UNITS, FEATURE_DIM]),
            label_classifier: z(&[FEATURE_DIM, 2]),
            domain_classifier: z(&[FEATURE_DIM, HIDDEN_UNITS, 2]),
            lambda_mode,
        }
    }

    /// Assembles a model from trained networks, checking the wiring.
    pub fn from_networks(
        feature_extractor: DenseNetwork,
        label_classifier: DenseNetwork,
        domain_classifier: DenseNetwork,
        lambda_mode: LambdaMode,
    ) -> Result<Self> {
        let model = Self {
            feature_extractor,
            label_classifier,
            domain_classifier,
            lambda_mode,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        let f = &self.feature_extractor;
        let ok = f.in_dim() == MODEL_FEATURES
            && f.out_dim() == FEATURE_DIM
            && self.label_classifier.in_dim() == FEATURE_DIM
            && self.domain_classifier.in_dim() == FEATURE_DIM
            && self.label_classifier.out_dim() == 2
            && self.domain_classifier.out_dim() == 2;
        if ok {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "networks {:?} / {:?} / {:?} do not form a {MODEL_FEATURES}-input DANN",
                f.dims(),
                self.label_classifier.dims(),
                self.domain_classifier.dims()
            )))
        }
    }

    fn check_width(&self, x: &FeatureMatrix) -> Result<()> {
        if x.n_cols() != self.feature_extractor.in_dim() {
            return Err(Error::Shape(format!(
                "matrix has {} columns, model expects {}",
                x.n_cols(),
                self.feature_extractor.in_dim()
            )));
        }
        Ok(())
    }

    /// Projects rows into the learned feature space (inference mode).
    pub fn extract_features(&self, x: &FeatureMatrix) -> Result<FeatureMatrix> {
        self.check_width(x)?;
        let values = self.feature_extractor.infer_batch(x.values())?;
        FeatureMatrix::with_width(values, FEATURE_DIM, "g")
    }

    fn head_outputs(&self, head: &DenseNetwork, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.check_width(x)?;
        par::map_rows(x.values(), x.n_cols(), |row| {
            let f = self.feature_extractor.infer(row)?;
            head.infer(&f)
        })
        .into_iter()
        .collect()
    }

    /// Label-classifier outputs per row.
    pub fn label_scores(&self, x: &FeatureMatrix) -> Result<Vec<Vec<f64>>> {
        self.head_outputs(&self.label_classifier, x)
    }

    /// Argmax over the label head; ties go to class 0.
    pub fn predict_labels(&self, x: &FeatureMatrix) -> Result<Vec<u8>> {
        Ok(self.label_scores(x)?.iter().map(|o| argmax2(o)).collect())
    }

    /// Argmax over the domain head; ties go to the source domain.
    pub fn predict_domain(&self, x: &FeatureMatrix) -> Result<Vec<DomainLabel>> {
        Ok(self
            .head_outputs(&self.domain_classifier, x)?
            .iter()
            .map(|o| {
                if argmax2(o) == 1 {
                    DomainLabel::Target
                } else {
                    DomainLabel::Source
                }
            })
            .collect())
    }

    /// Batch-mean gradients of the label loss over `rows`.
    pub fn label_gradients<R: Rng + ?Sized>(
        &mut self,
        rows: &[&[f64]],
        labels: &[u8],
        dropout: f64,
        rng: &mut R,
    ) -> Result<LabelGradients> {
        if rows.len() != labels.len() || rows.is_empty() {
            return Err(Error::Shape("label batch must be nonempty with one label per row".into()));
        }
        let mut gf = GradientSet::zeros_like(&self.feature_extractor);
        let mut gc = GradientSet::zeros_like(&self.label_classifier);
        let mut total = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let feat = self.feature_extractor.forward_train(row, dropout, rng)?;
            let out = self.label_classifier.forward_train(&feat, 0.0, rng)?;
            let (loss, grad) = two_unit_loss(&out, usize::from(y));
            total += loss;
            let head = self.label_classifier.backward(&grad)?;
            let body = self.feature_extractor.backward(&head.input_grad)?;
            gc.add_assign(&head.grads)?;
            gf.add_assign(&body.grads)?;
        }
        let scale = 1.0 / rows.len() as f64;
        gf.scale(scale);
        gc.scale(scale);
        Ok(LabelGradients {
            feature_extractor: gf,
            label_classifier: gc,
            mean_loss: total * scale,
        })
    }

    /// Batch-mean gradients of the domain loss over `rows`, with the
    /// extractor gradient passed through the reversal layer at `lambda`.
    pub fn domain_gradients<R: Rng + ?Sized>(
        &mut self,
        rows: &[&[f64]],
        domains: &[DomainLabel],
        lambda: f64,
        dropout: f64,
        rng: &mut R,
    ) -> Result<DomainGradients> {
        if rows.len() != domains.len() || rows.is_empty() {
            return Err(Error::Shape("domain batch must be nonempty with one label per row".into()));
        }
        if lambda.is_nan() || lambda < 0.0 {
            return Err(Error::Argument(format!("lambda must be nonnegative, got {lambda}")));
        }
        let mut gf = GradientSet::zeros_like(&self.feature_extractor);
        let mut gd = GradientSet::zeros_like(&self.domain_classifier);
        let mut total = 0.0;
        for (row, &dom) in rows.iter().zip(domains) {
            let feat = self.feature_extractor.forward_train(row, dropout, rng)?;
            let out = self.domain_classifier.forward_train(&feat, dropout, rng)?;
            let (loss, grad) = two_unit_loss(&out, usize::from(dom.gamma()));
            total += loss;
            let head = self.domain_classifier.backward(&grad)?;
            let reversed = grl_backward(&head.input_grad, lambda);
            let body = self.feature_extractor.backward(&reversed)?;
            gd.add_assign(&head.grads)?;
            gf.add_assign(&body.grads)?;
        }
        let scale = 1.0 / rows.len() as f64;
        gf.scale(scale);
        gd.scale(scale);
        Ok(DomainGradients {
            feature_extractor: gf,
            domain_classifier: gd,
            mean_loss: total * scale,
        })
    }

    /// Mean label loss (inference mode) over a batch.
    pub fn mean_label_loss(&self, rows: &[&[f64]], labels: &[u8]) -> Result<f64> {
        let mut total = 0.0;
        for (row, &y) in rows.iter().zip(labels) {
            let out = self.label_classifier.infer(&self.feature_extractor.infer(row)?)?;
            total += two_unit_loss(&out, usize::from(y)).0;
        }
        Ok(total / rows.len().max(1) as f64)
    }

    /// Mean domain loss (inference mode) over a batch.
    pub fn mean_domain_loss(&self, rows: &[&[f64]], domains: &[DomainLabel]) -> Result<f64> {
        let mut total = 0.0;
        for (row, &d) in rows.iter().zip(domains) {
            let out = self.domain_classifier.infer(&self.feature_extractor.infer(row)?)?;
            total += two_unit_loss(&out, usize::from(d.gamma())).0;
        }
        Ok(total / rows.len().max(1) as f64)
    }

    fn clear_caches(&mut self) {
        self.feature_extractor.clear_cache();
        self.label_classifier.clear_cache();
        self.domain_classifier.clear_cache();
    }
}

/// Trains the full adversarial model. Target rows are unlabelled by
/// construction: no argument carries target classes.
pub fn train_dann(
    source_x: &FeatureMatrix,
    source_y: &[u8],
    target_x: &FeatureMatrix,
    cfg: &DannTrainConfig,
) -> Result<(DannModel, TrainHistory)> {
    if target_x.is_empty() {
        return Err(Error::Data("target set is empty".into()));
    }
    fit(source_x, source_y, Some(target_x), cfg)
}

/// The feed-forward baseline: the same loop with the domain branch removed,
/// i.e. extractor plus label classifier trained on source labels only.
pub fn train_feedforward(
    source_x: &FeatureMatrix,
    source_y: &[u8],
    cfg: &DannTrainConfig,
) -> Result<(DannModel, TrainHistory)> {
    fit(source_x, source_y, None, cfg)
}

fn fit(
    source_x: &FeatureMatrix,
    source_y: &[u8],
    target_x: Option<&FeatureMatrix>,
    cfg: &DannTrainConfig,
) -> Result<(DannModel, TrainHistory)> {
    cfg.validate()?;
    if source_x.is_empty() {
        return Err(Error::Data("source set is empty".into()));
    }
    if source_x.n_rows() != source_y.len() {
        return Err(Error::Shape(format!(
            "{} source rows but {} labels",
            source_x.n_rows(),
            source_y.len()
        )));
    }
    if source_y.iter().any(|&y| y > 1) {
        return Err(Error::Data("source labels must be 0 or 1".into()));
    }
    for (what, m) in std::iter::once(("source", source_x)).chain(target_x.map(|t| ("target", t))) {
        if m.n_cols() != MODEL_FEATURES {
            return Err(Error::Shape(format!(
                "{what} matrix has {} columns, expected {MODEL_FEATURES}",
                m.n_cols()
            )));
        }
    }

    let seed = cfg.sgd.seed;
    let mut model = DannModel::new(seed, cfg.lambda);
    let mut label_rng = stream(seed, STREAM_LABEL);
    let mut domain_rng = stream(seed, STREAM_DOMAIN);

    let (mut train_idx, val_idx) = dataset::split_indices(source_y, cfg.validation_split, seed)?;
    if train_idx.is_empty() {
        return Err(Error::Data("validation split leaves no training rows".into()));
    }
    // with no held-out rows, select on the training rows themselves
    let val_idx = if val_idx.is_empty() { train_idx.clone() } else { val_idx };
    let val_x = source_x.select_rows(&val_idx);
    let val_y: Vec<u8> = val_idx.iter().map(|&i| source_y[i]).collect();

    let mut target_order: Vec<usize> = target_x.map(|t| (0..t.n_rows()).collect()).unwrap_or_default();
    let batch = cfg.sgd.batch_size;
    let batches_per_epoch = train_idx.len().div_ceil(batch);
    let total_batches = (batches_per_epoch * cfg.epochs).max(1);
    let mut global_batch = 0usize;
    let mut target_cursor = 0usize;

    let mut history = TrainHistory::default();
    let mut best: Option<(f64, DannModel)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        if cfg.shuffle {
            train_idx.shuffle(&mut label_rng);
            target_order.shuffle(&mut domain_rng);
        }
        let mut label_sum = 0.0;
        let mut domain_sum = 0.0;
        let mut domain_batches = 0usize;
        let mut lambda = 0.0;

        for chunk in train_idx.chunks(batch) {
            let progress = global_batch as f64 / total_batches as f64;
            lambda = lambda_at(progress, cfg.lambda)?;
            global_batch += 1;
            let mut sgd = cfg.sgd.clone();
            if cfg.anneal_lr {
                sgd.learning_rate /= (1.0 + 10.0 * progress).powf(0.75);
            }

            let rows: Vec<&[f64]> = chunk.iter().map(|&i| source_x.row(i)).collect();
            let labels: Vec<u8> = chunk.iter().map(|&i| source_y[i]).collect();
            let lg = model.label_gradients(&rows, &labels, cfg.sgd.dropout_ratio, &mut label_rng)?;
            label_sum += lg.mean_loss;
            let mut gf = lg.feature_extractor;

            if let Some(target) = target_x {
                // equal halves: up to half a batch from each domain
                let half = chunk.len().div_ceil(2);
                let mut drows: Vec<&[f64]> = rows[..half].to_vec();
                let mut domains = vec![DomainLabel::Source; half];
                for _ in 0..half {
                    if target_cursor == target_order.len() {
                        target_cursor = 0;
                        if cfg.shuffle {
                            target_order.shuffle(&mut domain_rng);
                        }
                    }
                    drows.push(target.row(target_order[target_cursor]));
                    domains.push(DomainLabel::Target);
                    target_cursor += 1;
                }
                let dg = model.domain_gradients(&drows, &domains, lambda, cfg.sgd.dropout_ratio, &mut domain_rng)?;
                domain_sum += dg.mean_loss;
                domain_batches += 1;
                gf.add_assign(&dg.feature_extractor)?;
                model.domain_classifier.sgd_step(&dg.domain_classifier, &sgd)?;
            }
            model.label_classifier.sgd_step(&lg.label_classifier, &sgd)?;
            model.feature_extractor.sgd_step(&gf, &sgd)?;
        }

        let label_loss = label_sum / batches_per_epoch as f64;
        let domain_loss = if domain_batches > 0 {
            domain_sum / domain_batches as f64
        } else {
            0.0
        };
        if !label_loss.is_finite() || !domain_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                detail: format!("label loss {label_loss}, domain loss {domain_loss}"),
            });
        }
        if model.feature_extractor.parameters().any(|p| !p.is_finite()) {
            return Err(Error::Divergence {
                epoch,
                detail: "non-finite extractor parameters".into(),
            });
        }
        let pred = model.predict_labels(&val_x)?;
        let validation_f1 = eval::metrics(&eval::confusion(&val_y, &pred)?).f1;
        history.records.push(EpochRecord {
            epoch,
            label_loss,
            domain_loss,
            validation_f1,
            lambda,
        });

        // ties go to the later epoch, which has seen more adaptation;
        // only strict gains reset the patience counter
        let prev = best.as_ref().map(|(f1, _)| *f1);
        if prev.is_none_or(|f1| validation_f1 >= f1) {
            model.clear_caches();
            best = Some((validation_f1, model.clone()));
            history.best_epoch = epoch;
        }
        if prev.is_none_or(|f1| validation_f1 > f1) {
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.early_stop_patience {
                log::debug!("early stop at epoch {epoch}, best {}", history.best_epoch);
                break;
            }
        }
    }

    let (_, mut model) = best.expect("at least one epoch ran");
    model.clear_caches();
    Ok((model, history))
}
