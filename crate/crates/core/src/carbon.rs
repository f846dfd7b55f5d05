//! Tree-cover carbon removal from a classified label map.
//!
//! Areas are accumulated as integer pixel counts and converted to hectares
//! with decimal arithmetic, so `10519 ha * 2.9` is exactly `30505.1`.

use rust_decimal::prelude::*;
use rust_decimal::RoundingStrategy;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::ContentDigest;
use crate::geodata::{self, clip_raster, write_geotiff, LabelScheme, Polygon, RasterGrid, Region};
use crate::parallel::for_each_row_block;

#[derive(Debug, Error)]
pub enum CarbonError {
    #[error("label map must have one band, found {0}")]
    NotSingleBand(usize),
    #[error("label map pixel size cannot be expressed in metres ({0})")]
    NoMetricTransform(String),
    #[error("area must be non-negative, got {0}")]
    NegativeArea(Decimal),
    #[error("{0} must be positive")]
    NonPositiveFactor(&'static str),
    #[error(transparent)]
    Geodata(#[from] geodata::GeodataError),
}

pub type Result<T, E = CarbonError> = std::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CarbonConfig {
    /// Tonnes C per hectare of crown cover per year.
    pub removal_factor: Decimal,
    pub tree_label: u8,
    /// Tonnes per passenger vehicle per year.
    pub vehicle_factor: Decimal,
    pub tier_note: String,
}

impl Default for CarbonConfig {
    fn default() -> Self {
        Self {
            removal_factor: Decimal::new(29, 1),
            tree_label: 1,
            vehicle_factor: Decimal::new(46, 1),
            tier_note: "IPCC Tier 2a default".into(),
        }
    }
}

impl CarbonConfig {
    pub fn validate(&self) -> Result<()> {
        if self.removal_factor <= Decimal::ZERO {
            return Err(CarbonError::NonPositiveFactor("removal factor"));
        }
        if self.vehicle_factor <= Decimal::ZERO {
            return Err(CarbonError::NonPositiveFactor("vehicle factor"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CategoryArea {
    pub name: String,
    pub code: u8,
    pub pixels: u64,
    pub area_ha: Decimal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaSummary {
    pub pixel_area_m2: Decimal,
    pub total_pixels: u64,
    /// Pixels labelled 0 (nodata).
    pub unlabelled_pixels: u64,
    /// Non-zero labels that are not in the scheme.
    pub other_pixels: u64,
    pub categories: Vec<CategoryArea>,
}

impl AreaSummary {
    pub fn area_of(&self, code: u8) -> Decimal {
        self.categories.iter().find(|c| c.code == code).map_or(Decimal::ZERO, |c| c.area_ha)
    }

    pub fn pixels_of(&self, code: u8) -> u64 {
        self.categories.iter().find(|c| c.code == code).map_or(0, |c| c.pixels)
    }

    pub fn total_area_ha(&self) -> Decimal {
        hectares(self.total_pixels, self.pixel_area_m2)
    }
}

fn hectares(pixels: u64, pixel_area_m2: Decimal) -> Decimal {
    (Decimal::from(pixels) * pixel_area_m2 / Decimal::from(10_000)).normalize()
}

fn metric_pixel_area(labels: &RasterGrid) -> Result<Decimal> {
    if labels.crs().is_geographic() {
        return Err(CarbonError::NoMetricTransform(format!("{} is geographic", labels.crs())));
    }
    let t = labels.transform();
    let to_dec = |v: f64| {
        Decimal::from_f64(v)
            .filter(|d| *d > Decimal::ZERO)
            .ok_or_else(|| CarbonError::NoMetricTransform(format!("pixel size {v}")))
    };
    Ok(to_dec(t.pixel_size_x)? * to_dec(t.pixel_size_y)?)
}

/// Per-category area in hectares; label 0 is excluded.
pub fn category_areas(labels: &RasterGrid, scheme: &LabelScheme, workers: usize) -> Result<AreaSummary> {
    if labels.band_count() != 1 {
        return Err(CarbonError::NotSingleBand(labels.band_count()));
    }
    let pixel_area_m2 = metric_pixel_area(labels)?;
    let (w, h) = (labels.width(), labels.height());
    let mut per_row = vec![[0u64; 256]; h];
    for_each_row_block(&mut per_row, 1, workers, |first, block| {
        for (k, hist) in block.iter_mut().enumerate() {
            for c in 0..w {
                let v = labels.get(0, first + k, c);
                let code = if labels.is_nodata(v) || !(0.0..=255.0).contains(&v) { 0 } else { v as usize };
                hist[code] += 1;
            }
        }
    });
    let mut hist = [0u64; 256];
    for row in &per_row {
        for (a, b) in hist.iter_mut().zip(row) {
            *a += b;
        }
    }
    let categories: Vec<CategoryArea> = scheme
        .entries()
        .iter()
        .map(|(name, code)| CategoryArea {
            name: name.clone(),
            code: *code,
            pixels: hist[*code as usize],
            area_ha: hectares(hist[*code as usize], pixel_area_m2),
        })
        .collect();
    let labelled: u64 = categories.iter().map(|c| c.pixels).sum();
    let total_pixels = (w * h) as u64;
    Ok(AreaSummary {
        pixel_area_m2: pixel_area_m2.normalize(),
        total_pixels,
        unlabelled_pixels: hist[0],
        other_pixels: total_pixels - hist[0] - labelled,
        categories,
    })
}

/// Annual removal in tonnes C: `area * removal_factor`.
pub fn assess_carbon(canopy_area_ha: Decimal, cfg: &CarbonConfig) -> Result<Decimal> {
    if canopy_area_ha < Decimal::ZERO {
        return Err(CarbonError::NegativeArea(canopy_area_ha));
    }
    cfg.validate()?;
    Ok((canopy_area_ha * cfg.removal_factor).normalize())
}

pub fn vehicle_equivalent(tonnes: Decimal, cfg: &CarbonConfig) -> u64 {
    (tonnes / cfg.vehicle_factor)
        .round_dp_with_strategy(0, RoundingStrategy::MidpointAwayFromZero)
        .to_u64()
        .unwrap_or(0)
}

pub const VEHICLE_FOOTNOTE: &str = "The vehicle equivalence divides tonnes of carbon (C) by a per-vehicle \
figure that is usually published in tonnes of CO2; the two units differ by a factor of 44/12 and \
the pipeline does not convert between them.";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScopeFigures {
    pub canopy_area_ha: Decimal,
    pub carbon_tonnes_per_year: Decimal,
    pub vehicle_equivalent: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CarbonReport {
    pub areas: AreaSummary,
    pub canopy_area_ha: Decimal,
    /// Annual removal, tonnes C per year.
    pub carbon_tonnes_per_year: Decimal,
    pub vehicle_equivalent: u64,
    /// The same figures restricted to a boundary polygon, when one is given.
    pub within_boundary: Option<ScopeFigures>,
    pub config: CarbonConfig,
    pub source_digest: ContentDigest,
    pub footnote: String,
}

fn figures(canopy_area_ha: Decimal, cfg: &CarbonConfig) -> Result<ScopeFigures> {
    let carbon = assess_carbon(canopy_area_ha, cfg)?;
    Ok(ScopeFigures { canopy_area_ha, carbon_tonnes_per_year: carbon, vehicle_equivalent: vehicle_equivalent(carbon, cfg) })
}

pub fn carbon_report(
    labels: &RasterGrid,
    scheme: &LabelScheme,
    cfg: &CarbonConfig,
    boundary: Option<&Polygon>,
    workers: usize,
) -> Result<CarbonReport> {
    cfg.validate()?;
    let areas = category_areas(labels, scheme, workers)?;
    let whole = figures(areas.area_of(cfg.tree_label), cfg)?;
    let within_boundary = match boundary {
        None => None,
        Some(poly) => {
            let clipped = match clip_raster(labels, &Region::Polygon(poly.clone())) {
                Ok(c) => category_areas(&c, scheme, workers)?.area_of(cfg.tree_label),
                Err(geodata::GeodataError::EmptyIntersection) => Decimal::ZERO,
                Err(e) => return Err(e.into()),
            };
            Some(figures(clipped, cfg)?)
        }
    };
    Ok(CarbonReport {
        areas,
        canopy_area_ha: whole.canopy_area_ha,
        carbon_tonnes_per_year: whole.carbon_tonnes_per_year,
        vehicle_equivalent: whole.vehicle_equivalent,
        within_boundary,
        config: cfg.clone(),
        source_digest: ContentDigest::of(&write_geotiff(labels).map_err(geodata::GeodataError::from)?),
        footnote: VEHICLE_FOOTNOTE.into(),
    })
}

impl CarbonReport {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serialises") + "\n"
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from("Land cover areas\n");
        for c in &self.areas.categories {
            s.push_str(&format!("  {:<12}{:>12} px {:>14} ha\n", c.name, c.pixels, c.area_ha));
        }
        s.push_str(&format!("  {:<12}{:>12} px\n", "unlabelled", self.areas.unlabelled_pixels));
        s.push_str(&format!(
            "\nCanopy area: {} ha\nRemoval factor: {} t C / ha crown cover / yr ({})\n\
             Annual carbon removal: {} t C / yr\nVehicle equivalent: {} vehicles / yr (factor {} t)\n",
            self.canopy_area_ha,
            self.config.removal_factor,
            self.config.tier_note,
            self.carbon_tonnes_per_year,
            self.vehicle_equivalent,
            self.config.vehicle_factor,
        ));
        if let Some(b) = &self.within_boundary {
            s.push_str(&format!(
                "\nWithin boundary: {} ha canopy, {} t C / yr, {} vehicles / yr\n",
                b.canopy_area_ha, b.carbon_tonnes_per_year, b.vehicle_equivalent
            ));
        }
        s.push_str(&format!("\nSource map: {}\nNote: {}\n", self.source_digest, self.footnote));
        s
    }
}
