//! Labelled feature tables and the stratified train/test split.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{PointSet, RasterGrid};
use crate::geodesy::CrsId;
use crate::rng::SplitMix64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplingError {
    #[error("points are in {points}, raster is in {raster}")]
    CrsMismatch { points: CrsId, raster: CrsId },
    #[error("point {0} has no integer label attribute in 1..=255")]
    MissingLabel(usize),
    #[error("no sample point falls on valid raster data")]
    NoSamples,
    #[error("category {0} has fewer than 2 rows")]
    TooFewRows(u8),
    #[error("train fraction {0} is not in (0, 1)")]
    BadFraction(f64),
    #[error("rows with inconsistent band counts")]
    Ragged,
    #[error("table CSV: {0}")]
    Csv(String),
}

pub type Result<T, E = SamplingError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRow {
    pub features: Vec<f64>,
    pub label: u8,
    /// Index of the originating point in the extraction input.
    pub source_index: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleTable {
    band_count: usize,
    rows: Vec<SampleRow>,
}

impl SampleTable {
    pub fn new(band_count: usize, rows: Vec<SampleRow>) -> Result<Self> {
        if rows.iter().any(|r| r.features.len() != band_count) {
            return Err(SamplingError::Ragged);
        }
        Ok(Self { band_count, rows })
    }

    pub fn band_count(&self) -> usize {
        self.band_count
    }

    pub fn rows(&self) -> &[SampleRow] {
        &self.rows
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn labels(&self) -> Vec<u8> {
        self.rows.iter().map(|r| r.label).collect()
    }

    /// Row count per label, ascending by label.
    pub fn label_counts(&self) -> BTreeMap<u8, usize> {
        let mut m = BTreeMap::new();
        for r in &self.rows {
            *m.entry(r.label).or_insert(0) += 1;
        }
        m
    }

    /// `band_1..band_k,label` CSV.
    pub fn to_csv(&self) -> Vec<u8> {
        let mut w = csv::Writer::from_writer(Vec::new());
        let mut header: Vec<String> = (1..=self.band_count).map(|b| format!("band_{b}")).collect();
        header.push("label".into());
        w.write_record(&header).expect("in-memory write");
        for r in &self.rows {
            let mut rec: Vec<String> = r.features.iter().map(|v| format!("{v}")).collect();
            rec.push(r.label.to_string());
            w.write_record(&rec).expect("in-memory write");
        }
        w.into_inner().expect("in-memory write")
    }

    /// Parses the CSV written by [`SampleTable::to_csv`]. Source indices are
    /// assigned from row order.
    pub fn from_csv(bytes: &[u8]) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(bytes);
        let headers = rdr.headers().map_err(|e| SamplingError::Csv(e.to_string()))?.clone();
        let k = headers.len().checked_sub(1).ok_or_else(|| SamplingError::Csv("empty header".into()))?;
        let expected: Vec<String> = (1..=k).map(|b| format!("band_{b}")).chain(["label".to_string()]).collect();
        if headers.iter().map(str::trim).ne(expected.iter().map(String::as_str)) {
            return Err(SamplingError::Csv(format!("header must be {}", expected.join(","))));
        }
        let mut rows = Vec::new();
        for (i, rec) in rdr.records().enumerate() {
            let rec = rec.map_err(|e| SamplingError::Csv(format!("row {}: {e}", i + 1)))?;
            let bad = |what: &str| SamplingError::Csv(format!("row {}: bad {what}", i + 1));
            let features = (0..k)
                .map(|b| rec.get(b).and_then(|c| c.trim().parse::<f64>().ok()).ok_or_else(|| bad("band value")))
                .collect::<Result<Vec<_>>>()?;
            let label = rec.get(k).and_then(|c| c.trim().parse::<u8>().ok()).ok_or_else(|| bad("label"))?;
            rows.push(SampleRow { features, label, source_index: i });
        }
        Self::new(k, rows)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipReport {
    pub outside: Vec<usize>,
    pub nodata: Vec<usize>,
}

impl SkipReport {
    pub fn total(&self) -> usize {
        self.outside.len() + self.nodata.len()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Extraction {
    pub table: SampleTable,
    pub skipped: SkipReport,
}

/// Reads the band values of the pixel containing each labelled point.
/// Points outside the grid or on nodata pixels are dropped and reported.
pub fn extract_pixel_values(grid: &RasterGrid, ps: &PointSet) -> Result<Extraction> {
    if ps.crs != grid.crs() {
        return Err(SamplingError::CrsMismatch { points: ps.crs, raster: grid.crs() });
    }
    let mut rows = Vec::with_capacity(ps.len());
    let mut skipped = SkipReport::default();
    for (i, f) in ps.features.iter().enumerate() {
        let label = f.label().filter(|l| (1..=255).contains(l)).ok_or(SamplingError::MissingLabel(i))? as u8;
        match grid.locate(f.x, f.y) {
            None => skipped.outside.push(i),
            Some((r, c)) if grid.pixel_is_nodata(r, c) => skipped.nodata.push(i),
            Some((r, c)) => rows.push(SampleRow { features: grid.pixel(r, c), label, source_index: i }),
        }
    }
    if rows.is_empty() {
        return Err(SamplingError::NoSamples);
    }
    Ok(Extraction { table: SampleTable::new(grid.band_count(), rows)?, skipped })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train_fraction: f64,
    pub seed: u64,
    pub stratified: bool,
}

impl Default for SplitSpec {
    fn default() -> Self {
        Self { train_fraction: 0.8, seed: 42, stratified: true }
    }
}

/// `floor(f * n)`, nudged so that products like `0.29 * 100` land on the
/// intended integer.
pub fn train_count(fraction: f64, n: usize) -> usize {
    ((fraction * n as f64) + 1e-9).floor() as usize
}

/// Partitions rows into train/test. With stratification each label's rows
/// (in table order, labels ascending) are Fisher-Yates shuffled by one
/// splitmix64 stream seeded with `seed`, and the first `floor(f * n)` go to
/// training. Both outputs keep the original table order.
pub fn stratified_split(t: &SampleTable, s: &SplitSpec) -> Result<(SampleTable, SampleTable)> {
    if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
        return Err(SamplingError::BadFraction(s.train_fraction));
    }
    let groups: Vec<Vec<usize>> = if s.stratified {
        let mut by_label: BTreeMap<u8, Vec<usize>> = BTreeMap::new();
        for (i, r) in t.rows.iter().enumerate() {
            by_label.entry(r.label).or_default().push(i);
        }
        if let Some((label, _)) = by_label.iter().find(|(_, v)| v.len() < 2) {
            return Err(SamplingError::TooFewRows(*label));
        }
        by_label.into_values().collect()
    } else {
        vec![(0..t.rows.len()).collect()]
    };

    let mut rng = SplitMix64::new(s.seed);
    let mut in_train = vec![false; t.rows.len()];
    for mut group in groups {
        rng.shuffle(&mut group);
        for &i in &group[..train_count(s.train_fraction, group.len())] {
            in_train[i] = true;
        }
    }
    let (mut train, mut test) = (Vec::new(), Vec::new());
    for (row, &is_train) in t.rows.iter().zip(&in_train) {
        if is_train {
            train.push(row.clone());
        } else {
            test.push(row.clone());
        }
    }
    Ok((SampleTable::new(t.band_count, train)?, SampleTable::new(t.band_count, test)?))
}
