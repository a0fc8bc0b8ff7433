//! Seeded two-domain flow generator with a translational covariate shift.
//!
//! The first `informative` columns carry the class: benign rows sit near
//! `benign_center`, attacks near `attack_center`. The next `markers`
//! columns carry no class signal and are translated by `marker_shift` in
//! the target domain; `class_shift` optionally translates the informative
//! columns too. Remaining columns are uniform noise shared by both domains.
//!
//! Marker columns are nearly constant in the source, so a source-only
//! network keeps arbitrary weights on them and its decisions move with the
//! translation, while an adversarially trained extractor learns to drop
//! them.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::dataset::{ColumnRole, ColumnType, FeatureMatrix, LabeledSet, Schema, MODEL_FEATURES};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftConfig {
    pub n_source: usize,
    pub n_target: usize,
    pub dims: usize,
    pub attack_fraction: f64,
    pub informative: usize,
    pub markers: usize,
    pub benign_center: f64,
    pub attack_center: f64,
    pub marker_center: f64,
    pub noise_sd: f64,
    pub class_shift: f64,
    pub marker_shift: f64,
    pub seed: u64,
}

impl Default for ShiftConfig {
    fn default() -> Self {
        Self {
            n_source: 1500,
            n_target: 1500,
            dims: MODEL_FEATURES,
            attack_fraction: 0.3,
            informative: 4,
            markers: 31,
            benign_center: 0.3,
            attack_center: 0.7,
            marker_center: 0.3,
            noise_sd: 0.1,
            class_shift: 0.0,
            marker_shift: 0.3,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShiftedDomains {
    pub source: LabeledSet,
    pub target: LabeledSet,
}

fn generate(cfg: &ShiftConfig, n: usize, shifted: bool, rng: &mut ChaCha8Rng) -> Result<LabeledSet> {
    let noise = Normal::new(0.0, cfg.noise_sd).map_err(|e| Error::Argument(e.to_string()))?;
    let n_attack = (n as f64 * cfg.attack_fraction).round() as usize;
    let mut y: Vec<u8> = (0..n).map(|i| u8::from(i < n_attack)).collect();
    y.shuffle(rng);
    let (class_shift, marker_shift) = if shifted {
        (cfg.class_shift, cfg.marker_shift)
    } else {
        (0.0, 0.0)
    };
    let mut values = Vec::with_capacity(n * cfg.dims);
    for &label in &y {
        let center = if label == 1 { cfg.attack_center } else { cfg.benign_center };
        for j in 0..cfg.dims {
            let v = if j < cfg.informative {
                center + class_shift + noise.sample(rng)
            } else if j < cfg.informative + cfg.markers {
                cfg.marker_center + marker_shift + noise.sample(rng)
            } else {
                rng.gen_range(0.2..0.8)
            };
            values.push(v);
        }
    }
    LabeledSet::new(FeatureMatrix::with_width(values, cfg.dims, "f")?, y)
}

pub fn shifted_domains(cfg: &ShiftConfig) -> Result<ShiftedDomains> {
    if cfg.informative + cfg.markers > cfg.dims {
        return Err(Error::Argument(format!(
            "{} informative and {} marker columns exceed {} columns",
            cfg.informative, cfg.markers, cfg.dims
        )));
    }
    if !(0.0..=1.0).contains(&cfg.attack_fraction) {
        return Err(Error::Argument("attack_fraction must lie in [0, 1]".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let source = generate(cfg, cfg.n_source, false, &mut rng)?;
    let target = generate(cfg, cfg.n_target, true, &mut rng)?;
    Ok(ShiftedDomains { source, target })
}

/// Writes `set` as a flow CSV laid out by `schema`. Identifier columns get
/// placeholder endpoints; attack rows are labelled `Synthetic`.
pub fn write_flows_csv<W: std::io::Write>(w: W, schema: &Schema, set: &LabeledSet) -> Result<()> {
    let n_features = schema.feature_names().len();
    if n_features != set.x.n_cols() {
        return Err(Error::Shape(format!(
            "schema has {n_features} feature columns, data has {}",
            set.x.n_cols()
        )));
    }
    let io = |e: csv::Error| Error::Data(format!("writing flows: {e}"));
    let mut out = csv::Writer::from_writer(w);
    out.write_record(schema.columns().iter().map(|c| c.name.as_str())).map_err(io)?;
    for (i, (row, &y)) in set.x.rows().zip(&set.y).enumerate() {
        let mut features = row.iter();
        let record: Vec<String> = schema
            .columns()
            .iter()
            .map(|c| match (c.role, c.kind) {
                (ColumnRole::Feature, _) => features.next().expect("width checked").to_string(),
                (ColumnRole::Identifier, ColumnType::Numeric) => (1024 + i % 50_000).to_string(),
                (ColumnRole::Identifier, _) => format!("10.0.{}.{}", i / 250 % 250, i % 250),
                (ColumnRole::Label, ColumnType::Label) => if y == 0 { "Benign" } else { "Synthetic" }.to_string(),
                (ColumnRole::Label, _) => y.to_string(),
            })
            .collect();
        out.write_record(&record).map_err(io)?;
    }
    out.flush().map_err(|e| Error::Data(format!("writing flows: {e}")))
}
