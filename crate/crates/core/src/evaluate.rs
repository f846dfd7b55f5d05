//! Confusion matrices and accuracy metrics.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::LabelScheme;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum EvaluateError {
    #[error("truth has {truth} labels, predictions have {predicted}")]
    LengthMismatch { truth: usize, predicted: usize },
    #[error("no samples to evaluate")]
    Empty,
    #[error("label code {code} at position {index} is not in the scheme")]
    UnknownLabel { index: usize, code: u8 },
    #[error("count matrix must be {0}x{0}")]
    NotSquare(usize),
}

pub type Result<T, E = EvaluateError> = std::result::Result<T, E>;

/// Rows are true labels, columns predicted labels, both in scheme order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<(String, u8)>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn from_counts(scheme: &LabelScheme, counts: Vec<Vec<u64>>) -> Result<Self> {
        let k = scheme.len();
        if counts.len() != k || counts.iter().any(|r| r.len() != k) {
            return Err(EvaluateError::NotSquare(k));
        }
        Ok(Self { labels: scheme.entries().to_vec(), counts })
    }

    pub fn labels(&self) -> &[(String, u8)] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn size(&self) -> usize {
        self.labels.len()
    }

    pub fn row_sum(&self, i: usize) -> u64 {
        self.counts[i].iter().sum()
    }

    pub fn col_sum(&self, j: usize) -> u64 {
        self.counts.iter().map(|r| r[j]).sum()
    }

    pub fn trace(&self) -> u64 {
        (0..self.size()).map(|i| self.counts[i][i]).sum()
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for (name, _) in &self.labels {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, (name, _)) in self.labels.iter().enumerate() {
            s.push_str(name);
            for c in &self.counts[i] {
                s.push_str(&format!(",{c}"));
            }
            s.push('\n');
        }
        s
    }

    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> =
            self.counts.iter().map(|r| r.iter().map(|c| c.to_string()).collect()).collect();
        layout(&self.labels, &cells)
    }
}

pub fn confusion_matrix(truth: &[u8], predicted: &[u8], scheme: &LabelScheme) -> Result<ConfusionMatrix> {
    if truth.len() != predicted.len() {
        return Err(EvaluateError::LengthMismatch { truth: truth.len(), predicted: predicted.len() });
    }
    if truth.is_empty() {
        return Err(EvaluateError::Empty);
    }
    let k = scheme.len();
    let mut counts = vec![vec![0u64; k]; k];
    for (index, (&t, &p)) in truth.iter().zip(predicted).enumerate() {
        let pos = |code: u8| scheme.position(code).ok_or(EvaluateError::UnknownLabel { index, code });
        counts[pos(t)?][pos(p)?] += 1;
    }
    ConfusionMatrix::from_counts(scheme, counts)
}

/// A ratio kept as its integer parts so display rounding is exact.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Ratio {
    pub num: u64,
    pub den: u64,
}

impl Ratio {
    pub fn value(self) -> f64 {
        if self.den == 0 {
            0.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// Fixed-point text with half-away-from-zero rounding.
    pub fn display(self, decimals: u32) -> String {
        let scale = 10u128.pow(decimals);
        let scaled = if self.den == 0 {
            0
        } else {
            let (n, d) = (self.num as u128 * scale, self.den as u128);
            (2 * n + d) / (2 * d)
        };
        if decimals == 0 {
            return scaled.to_string();
        }
        format!("{}.{:0width$}", scaled / scale, scaled % scale, width = decimals as usize)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NormalizedMatrix {
    pub labels: Vec<(String, u8)>,
    pub rows: Vec<Vec<f64>>,
    /// Positions of rows with no samples; they stay all-zero.
    pub empty_rows: Vec<usize>,
    ratios: Vec<Vec<Ratio>>,
}

impl NormalizedMatrix {
    pub fn ratio(&self, i: usize, j: usize) -> Ratio {
        self.ratios[i][j]
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("true\\predicted");
        for (name, _) in &self.labels {
            s.push(',');
            s.push_str(name);
        }
        s.push('\n');
        for (i, (name, _)) in self.labels.iter().enumerate() {
            s.push_str(name);
            for v in &self.rows[i] {
                s.push_str(&format!(",{v}"));
            }
            s.push('\n');
        }
        s
    }

    /// Two-decimal display table.
    pub fn to_text(&self) -> String {
        let cells: Vec<Vec<String>> =
            self.ratios.iter().map(|r| r.iter().map(|q| q.display(2)).collect()).collect();
        layout(&self.labels, &cells)
    }
}

pub fn normalize(cm: &ConfusionMatrix) -> NormalizedMatrix {
    let k = cm.size();
    let mut ratios = Vec::with_capacity(k);
    let mut empty_rows = Vec::new();
    for i in 0..k {
        let den = cm.row_sum(i);
        if den == 0 {
            empty_rows.push(i);
        }
        ratios.push(cm.counts[i].iter().map(|&num| Ratio { num, den }).collect::<Vec<_>>());
    }
    let rows = ratios.iter().map(|r| r.iter().map(|q| q.value()).collect()).collect();
    NormalizedMatrix { labels: cm.labels.clone(), rows, empty_rows, ratios }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryMetrics {
    pub name: String,
    pub code: u8,
    pub recall: f64,
    pub precision: f64,
    pub support: u64,
    /// True when nothing was predicted as this category (precision reported as 0).
    pub precision_undefined: bool,
    /// True when the category has no test samples (recall reported as 0).
    pub recall_undefined: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub overall_accuracy: f64,
    pub correct: u64,
    pub total: u64,
    pub categories: Vec<CategoryMetrics>,
}

pub fn metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(EvaluateError::Empty);
    }
    let categories = cm
        .labels
        .iter()
        .enumerate()
        .map(|(i, (name, code))| {
            let hits = cm.counts[i][i];
            let recall = Ratio { num: hits, den: cm.row_sum(i) };
            let precision = Ratio { num: hits, den: cm.col_sum(i) };
            CategoryMetrics {
                name: name.clone(),
                code: *code,
                recall: recall.value(),
                precision: precision.value(),
                support: recall.den,
                precision_undefined: precision.den == 0,
                recall_undefined: recall.den == 0,
            }
        })
        .collect();
    let correct = cm.trace();
    Ok(MetricsReport { overall_accuracy: correct as f64 / total as f64, correct, total, categories })
}

impl MetricsReport {
    pub fn category(&self, name: &str) -> Option<&CategoryMetrics> {
        self.categories.iter().find(|c| c.name.eq_ignore_ascii_case(name))
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("category,code,support,recall,precision\n");
        for c in &self.categories {
            s.push_str(&format!("{},{},{},{},{}\n", c.name, c.code, c.support, c.recall, c.precision));
        }
        s.push_str(&format!("overall,,{},{},\n", self.total, self.overall_accuracy));
        s
    }

    pub fn to_text(&self) -> String {
        let overall = Ratio { num: self.correct, den: self.total };
        let mut s = format!(
            "Overall accuracy: {} ({} / {})\n\n{:<12}{:>9}{:>11}{:>12}\n",
            overall.display(4),
            self.correct,
            self.total,
            "Category",
            "Support",
            "Recall",
            "Precision"
        );
        for c in &self.categories {
            let precision = if c.precision_undefined { "n/a".to_string() } else { format!("{:.2}", c.precision) };
            s.push_str(&format!("{:<12}{:>9}{:>11.2}{:>12}\n", c.name, c.support, c.recall, precision));
        }
        s
    }
}

fn layout(labels: &[(String, u8)], cells: &[Vec<String>]) -> String {
    let name_w = labels.iter().map(|(n, _)| n.len()).max().unwrap_or(0).max(10) + 2;
    let cell_w = labels
        .iter()
        .map(|(n, _)| n.len())
        .chain(cells.iter().flatten().map(String::len))
        .max()
        .unwrap_or(0)
        + 2;
    let mut s = format!("{:<name_w$}", "True \\ Pred");
    for (n, _) in labels {
        s.push_str(&format!("{n:>cell_w$}"));
    }
    s.push('\n');
    for ((n, _), row) in labels.iter().zip(cells) {
        s.push_str(&format!("{n:<name_w$}"));
        for c in row {
            s.push_str(&format!("{c:>cell_w$}"));
        }
        s.push('\n');
    }
    s
}
