//! Random Forest and SVM land-cover classifiers and whole-raster
//! classification.

mod forest;
mod svm;
mod tree;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ContentDigest;
use crate::geodata::{RasterGrid, Samples};
use crate::parallel::for_each_row_block;
use crate::sampling::SampleTable;

pub use forest::{train_random_forest, ForestEcho, ForestModel};
pub use svm::{kkt_violation, rbf, train_svm, BandScaling, SvmEcho, SvmModel, SvmPair};
pub use tree::{best_split, gini, DecisionTree, Split, TreeNode};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ClassifyError {
    #[error("label histogram is empty")]
    EmptyCounts,
    #[error("training data holds a single category")]
    SingleCategory,
    #[error("invalid training configuration: {0}")]
    BadConfig(String),
    #[error("feature vector has {got} values, model expects {expected}")]
    BandMismatch { expected: usize, got: usize },
    #[error("model file: {0}")]
    ModelFormat(String),
}

pub type Result<T, E = ClassifyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Algorithm {
    #[default]
    Rf,
    Svm,
}

impl std::str::FromStr for Algorithm {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "rf" | "random_forest" => Ok(Algorithm::Rf),
            "svm" => Ok(Algorithm::Svm),
            other => Err(format!("unknown algorithm {other:?} (expected rf or svm)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub n_trees: usize,
    /// Candidate bands per node; `floor(sqrt(bands))` when unset.
    pub mtry: Option<usize>,
    pub max_depth: usize,
    pub min_leaf: usize,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self { n_trees: 100, mtry: None, max_depth: 25, min_leaf: 5 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SvmParams {
    pub c: f64,
    /// RBF width; `1 / (bands * variance of scaled features)` when unset.
    pub gamma: Option<f64>,
    pub tolerance: f64,
    pub max_passes: usize,
}

impl Default for SvmParams {
    fn default() -> Self {
        Self { c: 1.0, gamma: None, tolerance: 1e-3, max_passes: 10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub algorithm: Algorithm,
    pub rf: ForestParams,
    pub svm: SvmParams,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self { algorithm: Algorithm::Rf, rf: ForestParams::default(), svm: SvmParams::default(), seed: 42 }
    }
}

/// Plurality over label votes; ties resolve to the lowest code.
pub(crate) fn vote<I: IntoIterator<Item = u8>>(votes: I) -> u8 {
    let mut counts = [0u32; 256];
    for v in votes {
        counts[v as usize] += 1;
    }
    let mut best = 0usize;
    for (code, &c) in counts.iter().enumerate() {
        if c > counts[best] {
            best = code;
        }
    }
    best as u8
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "algorithm", rename_all = "lowercase")]
pub enum TrainedModel {
    Rf(ForestModel),
    Svm(SvmModel),
}

const MODEL_FORMAT: &str = "canopy-model";
const MODEL_VERSION: u32 = 1;

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    digest: ContentDigest,
    model: serde_json::Value,
}

impl TrainedModel {
    pub fn band_count(&self) -> usize {
        match self {
            TrainedModel::Rf(m) => m.band_count,
            TrainedModel::Svm(m) => m.band_count,
        }
    }

    pub fn classes(&self) -> &[u8] {
        match self {
            TrainedModel::Rf(m) => &m.classes,
            TrainedModel::Svm(m) => &m.classes,
        }
    }

    pub fn predict(&self, x: &[f64]) -> Result<u8> {
        if x.len() != self.band_count() {
            return Err(ClassifyError::BandMismatch { expected: self.band_count(), got: x.len() });
        }
        Ok(self.predict_unchecked(x))
    }

    fn predict_unchecked(&self, x: &[f64]) -> u8 {
        match self {
            TrainedModel::Rf(m) => m.predict(x),
            TrainedModel::Svm(m) => m.predict(x),
        }
    }

    fn body(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("model serialises")
    }

    /// Digest of the canonical model body.
    pub fn digest(&self) -> ContentDigest {
        ContentDigest::of(&self.body())
    }

    /// Self-describing JSON: format tag, version, body digest, body (which
    /// echoes the training configuration).
    pub fn to_bytes(&self) -> Vec<u8> {
        let file = ModelFile {
            format: MODEL_FORMAT.into(),
            version: MODEL_VERSION,
            digest: self.digest(),
            model: serde_json::to_value(self).expect("model serialises"),
        };
        serde_json::to_vec(&file).expect("model serialises")
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let file: ModelFile = serde_json::from_slice(bytes).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?;
        if file.format != MODEL_FORMAT || file.version != MODEL_VERSION {
            return Err(ClassifyError::ModelFormat(format!("unsupported format {} v{}", file.format, file.version)));
        }
        let model: TrainedModel =
            serde_json::from_value(file.model).map_err(|e| ClassifyError::ModelFormat(e.to_string()))?;
        if model.digest() != file.digest {
            return Err(ClassifyError::ModelFormat("digest mismatch".into()));
        }
        Ok(model)
    }
}

pub fn train(train: &SampleTable, cfg: &TrainConfig, workers: usize) -> Result<TrainedModel> {
    match cfg.algorithm {
        Algorithm::Rf => train_random_forest(train, &cfg.rf, cfg.seed, workers).map(TrainedModel::Rf),
        Algorithm::Svm => train_svm(train, &cfg.svm, cfg.seed, workers).map(TrainedModel::Svm),
    }
}

/// Labels every pixel; pixels with nodata in any band get label 0. The
/// output is a single-band u8 map with nodata 0 and the input's
/// georeferencing, identical for any worker count.
pub fn classify_raster(model: &TrainedModel, grid: &RasterGrid, workers: usize) -> Result<RasterGrid> {
    if grid.band_count() != model.band_count() {
        return Err(ClassifyError::BandMismatch { expected: model.band_count(), got: grid.band_count() });
    }
    let w = grid.width();
    let mut labels = vec![0u8; grid.pixel_count()];
    for_each_row_block(&mut labels, w, workers, |first_row, block| {
        let mut x = vec![0.0; grid.band_count()];
        for (k, out) in block.iter_mut().enumerate() {
            let (r, c) = (first_row + k / w, k % w);
            if grid.pixel_is_nodata(r, c) {
                *out = 0;
                continue;
            }
            for (b, v) in x.iter_mut().enumerate() {
                *v = grid.get(b, r, c);
            }
            *out = model.predict_unchecked(&x);
        }
    });
    RasterGrid::new(w, grid.height(), 1, Samples::U8(labels), Some(0.0), grid.crs(), grid.transform())
        .map_err(|e| ClassifyError::BadConfig(e.to_string()))
}
