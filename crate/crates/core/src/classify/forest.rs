use serde::{Deserialize, Serialize};

use super::tree::{grow, Dataset, DecisionTree, GrowParams};
use super::{vote, ClassifyError, ForestParams, Result};
use crate::rng::SplitMix64;
use crate::sampling::SampleTable;

/// Effective hyperparameters, echoed into the model.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ForestEcho {
    pub n_trees: usize,
    pub mtry: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub config: ForestEcho,
    pub band_count: usize,
    /// Label codes seen in training, ascending.
    pub classes: Vec<u8>,
    pub trees: Vec<DecisionTree>,
}

impl ForestModel {
    /// Majority vote; ties go to the lowest label code.
    pub fn predict(&self, x: &[f64]) -> u8 {
        vote(self.trees.iter().map(|t| t.predict(x)))
    }
}

/// Trains `n_trees` CART trees, each on a bootstrap resample drawn from its
/// own splitmix64 stream derived from `(seed, tree index)`, so trees can be
/// grown on any number of threads with identical results.
pub fn train_random_forest(train: &SampleTable, params: &ForestParams, seed: u64, workers: usize) -> Result<ForestModel> {
    let data = Dataset::from_rows(train.rows());
    if data.classes.len() < 2 {
        return Err(ClassifyError::SingleCategory);
    }
    let bands = train.band_count();
    let mtry = params.mtry.unwrap_or_else(|| ((bands as f64).sqrt().floor() as usize).max(1));
    if mtry == 0 || mtry > bands || params.n_trees == 0 || params.max_depth == 0 || params.min_leaf == 0 {
        return Err(ClassifyError::BadConfig(format!(
            "n_trees={} mtry={mtry} max_depth={} min_leaf={} with {bands} bands",
            params.n_trees, params.max_depth, params.min_leaf
        )));
    }
    let grow_params = GrowParams { mtry, max_depth: params.max_depth, min_leaf: params.min_leaf };
    let n = train.len();
    let build = |t: usize| {
        let mut rng = SplitMix64::stream(seed, t as u64);
        let idx: Vec<usize> = (0..n).map(|_| rng.below(n as u64) as usize).collect();
        grow(&data, idx, &grow_params, &mut rng)
    };

    let workers = workers.clamp(1, params.n_trees);
    let mut trees: Vec<Option<DecisionTree>> = vec![None; params.n_trees];
    if workers == 1 {
        for (t, slot) in trees.iter_mut().enumerate() {
            *slot = Some(build(t));
        }
    } else {
        let per = params.n_trees.div_ceil(workers);
        std::thread::scope(|s| {
            for (k, chunk) in trees.chunks_mut(per).enumerate() {
                let build = &build;
                s.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(build(k * per + j));
                    }
                });
            }
        });
    }
    Ok(ForestModel {
        config: ForestEcho { n_trees: params.n_trees, mtry, max_depth: params.max_depth, min_leaf: params.min_leaf, seed },
        band_count: bands,
        classes: data.classes.clone(),
        trees: trees.into_iter().map(Option::unwrap).collect(),
    })
}
