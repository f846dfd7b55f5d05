//! One-vs-one RBF support vector machine trained with SMO.
//!
//! Each category pair is solved with the simplified SMO loop (examine every
//! multiplier that violates KKT by more than `tolerance`; stop after
//! `max_passes` consecutive sweeps without a change), choosing the second
//! multiplier by the maximum |E_i - E_j| heuristic with a seeded random
//! fallback.

use serde::{Deserialize, Serialize};

use super::{vote, ClassifyError, Result, SvmParams};
use crate::rng::SplitMix64;
use crate::sampling::SampleTable;

/// Hard cap on full sweeps per pair.
const MAX_SWEEPS: usize = 20_000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BandScaling {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

impl BandScaling {
    fn fit(train: &SampleTable) -> Self {
        let k = train.band_count();
        let mut min = vec![f64::INFINITY; k];
        let mut max = vec![f64::NEG_INFINITY; k];
        for r in train.rows() {
            for b in 0..k {
                min[b] = min[b].min(r.features[b]);
                max[b] = max[b].max(r.features[b]);
            }
        }
        Self { min, max }
    }

    /// Maps each band to `[0, 1]` over the training range; constant bands
    /// map to 0.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .enumerate()
            .map(|(b, &v)| {
                let span = self.max[b] - self.min[b];
                if span > 0.0 {
                    (v - self.min[b]) / span
                } else {
                    0.0
                }
            })
            .collect()
    }
}

pub fn rbf(gamma: f64, a: &[f64], b: &[f64]) -> f64 {
    let d2: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    (-gamma * d2).exp()
}

/// Binary machine for `positive` (+1) vs `negative` (-1), `positive <
/// negative`. Coefficients are `alpha_i * y_i`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmPair {
    pub positive: u8,
    pub negative: u8,
    pub support_vectors: Vec<Vec<f64>>,
    pub coefficients: Vec<f64>,
    pub bias: f64,
}

impl SvmPair {
    pub fn decision(&self, gamma: f64, scaled: &[f64]) -> f64 {
        self.support_vectors.iter().zip(&self.coefficients).map(|(sv, c)| c * rbf(gamma, sv, scaled)).sum::<f64>()
            + self.bias
    }

    /// Non-negative decision values pick `positive` (the lower code).
    pub fn choose(&self, gamma: f64, scaled: &[f64]) -> u8 {
        if self.decision(gamma, scaled) >= 0.0 {
            self.positive
        } else {
            self.negative
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmEcho {
    pub c: f64,
    pub gamma: f64,
    pub tolerance: f64,
    pub max_passes: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SvmModel {
    pub config: SvmEcho,
    pub band_count: usize,
    pub classes: Vec<u8>,
    pub scaling: BandScaling,
    pub pairs: Vec<SvmPair>,
}

impl SvmModel {
    pub fn scale(&self, x: &[f64]) -> Vec<f64> {
        self.scaling.apply(x)
    }

    pub fn predict(&self, x: &[f64]) -> u8 {
        let s = self.scale(x);
        vote(self.pairs.iter().map(|p| p.choose(self.config.gamma, &s)))
    }
}

/// Dual solution of one binary problem over all training points (zero
/// multipliers included), used for KKT inspection.
#[derive(Debug, Clone)]
pub struct PairSolution {
    pub alphas: Vec<f64>,
    pub bias: f64,
}

pub(crate) struct Smo<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    kernel: Vec<f64>,
    c: f64,
}

impl<'a> Smo<'a> {
    pub fn new(x: &'a [Vec<f64>], y: &'a [f64], gamma: f64, c: f64) -> Self {
        let n = x.len();
        let mut kernel = vec![0.0; n * n];
        for i in 0..n {
            for j in i..n {
                let k = rbf(gamma, &x[i], &x[j]);
                kernel[i * n + j] = k;
                kernel[j * n + i] = k;
            }
        }
        Self { x, y, kernel, c }
    }

    #[inline]
    fn k(&self, i: usize, j: usize) -> f64 {
        self.kernel[i * self.x.len() + j]
    }

    pub fn solve(&self, tol: f64, max_passes: usize, rng: &mut SplitMix64) -> PairSolution {
        let n = self.x.len();
        let (y, c) = (self.y, self.c);
        let mut alpha = vec![0.0; n];
        let mut b = 0.0;
        // E_i = f(x_i) - y_i
        let mut err: Vec<f64> = y.iter().map(|v| -v).collect();
        let mut passes = 0;
        let mut sweeps = 0;
        while passes < max_passes && sweeps < MAX_SWEEPS {
            sweeps += 1;
            let mut changed = 0;
            for i in 0..n {
                let r = y[i] * err[i];
                if !((r < -tol && alpha[i] < c) || (r > tol && alpha[i] > 0.0)) {
                    continue;
                }
                let mut j = (0..n)
                    .filter(|&j| j != i)
                    .max_by(|&a, &bb| (err[i] - err[a]).abs().total_cmp(&(err[i] - err[bb]).abs()))
                    .unwrap_or(i);
                let mut ok = self.step(i, j, &mut alpha, &mut b, &mut err);
                if !ok && n > 1 {
                    // fall back to every other index, from a random start
                    let start = rng.below(n as u64) as usize;
                    for off in 0..n {
                        j = (start + off) % n;
                        if self.step(i, j, &mut alpha, &mut b, &mut err) {
                            ok = true;
                            break;
                        }
                    }
                }
                if ok {
                    changed += 1;
                }
            }
            if changed == 0 {
                passes += 1;
            } else {
                passes = 0;
            }
        }
        PairSolution { alphas: alpha, bias: b }
    }

    fn step(&self, i: usize, j: usize, alpha: &mut [f64], b: &mut f64, err: &mut [f64]) -> bool {
        if i == j {
            return false;
        }
        let (y, c) = (self.y, self.c);
        let (ai, aj) = (alpha[i], alpha[j]);
        let (lo, hi) = if y[i] != y[j] {
            ((aj - ai).max(0.0), (c + aj - ai).min(c))
        } else {
            ((ai + aj - c).max(0.0), (ai + aj).min(c))
        };
        if hi - lo < 1e-12 {
            return false;
        }
        let eta = 2.0 * self.k(i, j) - self.k(i, i) - self.k(j, j);
        if eta >= 0.0 {
            return false;
        }
        let mut aj_new = aj - y[j] * (err[i] - err[j]) / eta;
        aj_new = aj_new.clamp(lo, hi);
        if (aj_new - aj).abs() < 1e-8 * (aj_new + aj + 1e-8) {
            return false;
        }
        let snap = |a: f64| {
            if a < 1e-12 * c {
                0.0
            } else if a > c * (1.0 - 1e-12) {
                c
            } else {
                a
            }
        };
        aj_new = snap(aj_new);
        let ai_new = snap(ai + y[i] * y[j] * (aj - aj_new));
        let (di, dj) = (ai_new - ai, aj_new - aj);
        let b1 = *b - err[i] - y[i] * di * self.k(i, i) - y[j] * dj * self.k(i, j);
        let b2 = *b - err[j] - y[i] * di * self.k(i, j) - y[j] * dj * self.k(j, j);
        let b_new = if ai_new > 0.0 && ai_new < c {
            b1
        } else if aj_new > 0.0 && aj_new < c {
            b2
        } else {
            (b1 + b2) / 2.0
        };
        let db = b_new - *b;
        for (k, e) in err.iter_mut().enumerate() {
            *e += y[i] * di * self.k(i, k) + y[j] * dj * self.k(j, k) + db;
        }
        alpha[i] = ai_new;
        alpha[j] = aj_new;
        *b = b_new;
        true
    }
}

/// Scaled features and ±1 targets for one category pair.
pub(crate) fn pair_problem(train: &SampleTable, scaling: &BandScaling, pos: u8, neg: u8) -> (Vec<Vec<f64>>, Vec<f64>) {
    train
        .rows()
        .iter()
        .filter(|r| r.label == pos || r.label == neg)
        .map(|r| (scaling.apply(&r.features), if r.label == pos { 1.0 } else { -1.0 }))
        .unzip()
}

pub(crate) fn default_gamma(train: &SampleTable, scaling: &BandScaling) -> f64 {
    let vals: Vec<f64> = train.rows().iter().flat_map(|r| scaling.apply(&r.features)).collect();
    let n = vals.len() as f64;
    let mean = vals.iter().sum::<f64>() / n;
    let var = vals.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    if var > 0.0 {
        1.0 / (train.band_count() as f64 * var)
    } else {
        1.0
    }
}

/// Resolved inputs for training and for KKT inspection of an existing model.
pub(crate) struct Prepared {
    pub scaling: BandScaling,
    pub gamma: f64,
    pub classes: Vec<u8>,
}

pub(crate) fn prepare(train: &SampleTable, params: &SvmParams) -> Result<Prepared> {
    let classes: Vec<u8> = train.label_counts().into_keys().collect();
    if classes.len() < 2 {
        return Err(ClassifyError::SingleCategory);
    }
    let ok = params.c > 0.0 && params.tolerance > 0.0 && params.max_passes > 0 && params.gamma.is_none_or(|g| g > 0.0);
    if !ok {
        return Err(ClassifyError::BadConfig(format!("{params:?}")));
    }
    let scaling = BandScaling::fit(train);
    let gamma = params.gamma.unwrap_or_else(|| default_gamma(train, &scaling));
    Ok(Prepared { scaling, gamma, classes })
}

pub fn train_svm(train: &SampleTable, params: &SvmParams, seed: u64, workers: usize) -> Result<SvmModel> {
    let prep = prepare(train, params)?;
    let mut pair_codes = Vec::new();
    for (i, &a) in prep.classes.iter().enumerate() {
        for &b in &prep.classes[i + 1..] {
            pair_codes.push((a, b));
        }
    }
    let solve = |k: usize| {
        let (pos, neg) = pair_codes[k];
        let (x, y) = pair_problem(train, &prep.scaling, pos, neg);
        let smo = Smo::new(&x, &y, prep.gamma, params.c);
        let mut rng = SplitMix64::stream(seed, k as u64);
        let sol = smo.solve(params.tolerance, params.max_passes, &mut rng);
        let mut support_vectors = Vec::new();
        let mut coefficients = Vec::new();
        for (i, &a) in sol.alphas.iter().enumerate() {
            if a > 0.0 {
                support_vectors.push(x[i].clone());
                coefficients.push(a * y[i]);
            }
        }
        SvmPair { positive: pos, negative: neg, support_vectors, coefficients, bias: sol.bias }
    };
    let mut pairs: Vec<Option<SvmPair>> = vec![None; pair_codes.len()];
    let workers = workers.clamp(1, pair_codes.len().max(1));
    if workers == 1 {
        for (k, slot) in pairs.iter_mut().enumerate() {
            *slot = Some(solve(k));
        }
    } else {
        let per = pair_codes.len().div_ceil(workers);
        std::thread::scope(|s| {
            for (c, chunk) in pairs.chunks_mut(per).enumerate() {
                let solve = &solve;
                s.spawn(move || {
                    for (j, slot) in chunk.iter_mut().enumerate() {
                        *slot = Some(solve(c * per + j));
                    }
                });
            }
        });
    }
    Ok(SvmModel {
        config: SvmEcho { c: params.c, gamma: prep.gamma, tolerance: params.tolerance, max_passes: params.max_passes, seed },
        band_count: train.band_count(),
        classes: prep.classes,
        scaling: prep.scaling,
        pairs: pairs.into_iter().map(Option::unwrap).collect(),
    })
}

/// Largest KKT violation of a pair on its training points:
/// `y f >= 1` for zero multipliers, `y f = 1` for free ones, `y f <= 1` at
/// the bound `C`.
pub fn kkt_violation(model: &SvmModel, pair: &SvmPair, train: &SampleTable) -> f64 {
    let c = model.config.c;
    let gamma = model.config.gamma;
    let mut worst: f64 = 0.0;
    for r in train.rows().iter().filter(|r| r.label == pair.positive || r.label == pair.negative) {
        let x = model.scale(&r.features);
        let y = if r.label == pair.positive { 1.0 } else { -1.0 };
        let margin = y * pair.decision(gamma, &x);
        // multiplier of this point, if it is a support vector
        let alpha = pair
            .support_vectors
            .iter()
            .zip(&pair.coefficients)
            .find(|(sv, _)| **sv == x)
            .map_or(0.0, |(_, coef)| coef.abs());
        let v = if alpha <= 0.0 {
            (1.0 - margin).max(0.0)
        } else if alpha >= c {
            (margin - 1.0).max(0.0)
        } else {
            (margin - 1.0).abs()
        };
        worst = worst.max(v);
    }
    worst
}
