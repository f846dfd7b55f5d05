//! CART decision trees over Gini impurity.
//!
//! Split search compares candidates exactly: minimising the weighted child
//! Gini is equivalent to maximising `sum(l_i^2)/n_l + sum(r_i^2)/n_r`, which
//! is evaluated as a rational with 128-bit integer cross-multiplication.
//! Ties therefore resolve deterministically to the lower band index, then the
//! lower threshold, regardless of floating-point noise.

use serde::{Deserialize, Serialize};

use super::{ClassifyError, Result};
use crate::rng::SplitMix64;
use crate::sampling::SampleRow;

/// Gini impurity `1 - sum(p_i^2)` of a label histogram.
pub fn gini(counts: &[u64]) -> Result<f64> {
    let total: u64 = counts.iter().sum();
    if total == 0 {
        return Err(ClassifyError::EmptyCounts);
    }
    let t = total as f64;
    Ok(1.0 - counts.iter().map(|&c| (c as f64 / t).powi(2)).sum::<f64>())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub band: usize,
    pub threshold: f64,
    /// Weighted Gini impurity of the two children.
    pub impurity: f64,
}

/// Exhaustive best split (minimum leaf size 1) over the candidate bands.
/// Returns `None` when no threshold strictly reduces impurity.
pub fn best_split(rows: &[SampleRow], candidate_bands: &[usize]) -> Option<Split> {
    if rows.len() < 2 {
        return None;
    }
    let data = Dataset::from_rows(rows);
    let idx: Vec<usize> = (0..rows.len()).collect();
    let mut bands = candidate_bands.to_vec();
    bands.sort_unstable();
    bands.dedup();
    data.find_split(&idx, &bands, 1)
}

/// Column-major view of a training table with labels mapped to dense class
/// indices.
pub(crate) struct Dataset {
    pub columns: Vec<Vec<f64>>,
    pub class_of: Vec<usize>,
    pub classes: Vec<u8>,
}

impl Dataset {
    pub fn from_rows(rows: &[SampleRow]) -> Self {
        let bands = rows.first().map_or(0, |r| r.features.len());
        let mut classes: Vec<u8> = rows.iter().map(|r| r.label).collect();
        classes.sort_unstable();
        classes.dedup();
        let class_of = rows.iter().map(|r| classes.binary_search(&r.label).unwrap()).collect();
        let columns = (0..bands).map(|b| rows.iter().map(|r| r.features[b]).collect()).collect();
        Self { columns, class_of, classes }
    }

    pub fn n_bands(&self) -> usize {
        self.columns.len()
    }

    fn histogram(&self, idx: &[usize]) -> Vec<u64> {
        let mut h = vec![0u64; self.classes.len()];
        for &i in idx {
            h[self.class_of[i]] += 1;
        }
        h
    }

    /// Best split over `bands` (ascending) with both children holding at
    /// least `min_leaf` samples. `idx` may contain duplicates.
    pub fn find_split(&self, idx: &[usize], bands: &[usize], min_leaf: usize) -> Option<Split> {
        let n = idx.len() as u128;
        if idx.len() < 2 * min_leaf.max(1) {
            return None;
        }
        let parent = self.histogram(idx);
        let parent_sq: u128 = parent.iter().map(|&c| (c as u128).pow(2)).sum();

        // best score as (numerator, denominator) of sum_l^2/nl + sum_r^2/nr
        let mut best: Option<(u128, u128, usize, f64)> = None;
        let mut order = idx.to_vec();
        for &band in bands {
            let col = &self.columns[band];
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            let mut left = vec![0u64; self.classes.len()];
            let mut right = parent.clone();
            let (mut left_sq, mut right_sq) = (0u128, parent_sq);
            for k in 0..order.len() - 1 {
                let c = self.class_of[order[k]];
                left_sq += 2 * left[c] as u128 + 1;
                right_sq -= 2 * right[c] as u128 - 1;
                left[c] += 1;
                right[c] -= 1;
                let (lo, hi) = (col[order[k]], col[order[k + 1]]);
                if lo >= hi {
                    continue;
                }
                let nl = k as u128 + 1;
                let nr = n - nl;
                if nl < min_leaf as u128 || nr < min_leaf as u128 {
                    continue;
                }
                let num = left_sq * nr + right_sq * nl;
                let den = nl * nr;
                let better = match best {
                    None => true,
                    Some((bn, bd, _, _)) => num * bd > bn * den,
                };
                if better {
                    let mut threshold = lo + (hi - lo) / 2.0;
                    if threshold >= hi {
                        threshold = lo;
                    }
                    best = Some((num, den, band, threshold));
                }
            }
        }
        let (num, den, band, threshold) = best?;
        // must strictly improve on the parent: num/den > parent_sq/n
        if num * n <= parent_sq * den {
            return None;
        }
        let impurity = 1.0 - (num as f64 / den as f64) / n as f64;
        Some(Split { band, threshold, impurity })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "node", rename_all = "lowercase")]
pub enum TreeNode {
    Split { band: usize, threshold: f64, left: usize, right: usize },
    Leaf { label: u8, count: usize },
}

/// Arena-stored binary tree; node 0 is the root. Values `<= threshold`
/// go left.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub nodes: Vec<TreeNode>,
}

impl DecisionTree {
    pub fn leaf(label: u8, count: usize) -> Self {
        Self { nodes: vec![TreeNode::Leaf { label, count }] }
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                TreeNode::Leaf { label, .. } => return label,
                TreeNode::Split { band, threshold, left, right } => {
                    at = if x[band] <= threshold { left } else { right };
                }
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(t: &DecisionTree, at: usize) -> usize {
            match t.nodes[at] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Split { left, right, .. } => 1 + go(t, left).max(go(t, right)),
            }
        }
        go(self, 0)
    }

    pub fn max_band(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Split { band, .. } => Some(*band),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }
}

pub(crate) struct GrowParams {
    pub mtry: usize,
    pub max_depth: usize,
    pub min_leaf: usize,
}

fn majority(hist: &[u64], classes: &[u8]) -> u8 {
    // first maximum = lowest code, since classes ascend
    let mut best = 0;
    for (i, &c) in hist.iter().enumerate() {
        if c > hist[best] {
            best = i;
        }
    }
    classes[best]
}

/// Grows one tree on `idx` (a bootstrap sample) drawing `mtry` candidate
/// bands per node from `rng`.
pub(crate) fn grow(data: &Dataset, idx: Vec<usize>, p: &GrowParams, rng: &mut SplitMix64) -> DecisionTree {
    let mut tree = DecisionTree { nodes: Vec::new() };
    let mut all_bands: Vec<usize> = (0..data.n_bands()).collect();
    grow_node(data, idx, 0, p, rng, &mut all_bands, &mut tree);
    tree
}

fn grow_node(
    data: &Dataset,
    idx: Vec<usize>,
    depth: usize,
    p: &GrowParams,
    rng: &mut SplitMix64,
    bands: &mut [usize],
    tree: &mut DecisionTree,
) -> usize {
    let at = tree.nodes.len();
    let hist = data.histogram(&idx);
    let pure = hist.iter().filter(|&&c| c > 0).count() <= 1;
    let leaf = TreeNode::Leaf { label: majority(&hist, &data.classes), count: idx.len() };
    tree.nodes.push(leaf);
    if pure || depth >= p.max_depth || idx.len() < 2 * p.min_leaf {
        return at;
    }
    // partial Fisher-Yates: the first mtry slots become the candidates
    let nb = bands.len();
    for i in 0..p.mtry.min(nb) {
        let j = i + rng.below((nb - i) as u64) as usize;
        bands.swap(i, j);
    }
    let mut candidates = bands[..p.mtry.min(nb)].to_vec();
    candidates.sort_unstable();
    let Some(split) = data.find_split(&idx, &candidates, p.min_leaf) else {
        return at;
    };
    let col = &data.columns[split.band];
    let (li, ri): (Vec<usize>, Vec<usize>) = idx.into_iter().partition(|&i| col[i] <= split.threshold);
    let left = grow_node(data, li, depth + 1, p, rng, bands, tree);
    let right = grow_node(data, ri, depth + 1, p, rng, bands, tree);
    tree.nodes[at] = TreeNode::Split { band: split.band, threshold: split.threshold, left, right };
    at
}
