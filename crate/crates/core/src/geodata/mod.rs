//! Raster and point datasets plus the data-preparation operations applied to
//! them before classification.

mod ops;
mod points;
mod polygon;
mod render;
pub mod tiff;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodesy::{CrsId, GeodesyError};

pub use ops::{
    clip_points, clip_raster, raster_geo_extent, recode_attributes, reproject_points, reproject_polygon, reproject_raster,
    Resampling,
};
pub use points::{read_boundary, read_points, write_boundary, write_points, AttrValue, PointFeature, PointFormat, PointSet};
pub use polygon::{Bounds, Polygon, Region};
pub use render::{encode_png, render_classmap, Rgb, RenderedMap, NODATA_COLOR};
pub use tiff::{read_geotiff, write_geotiff, GeoTiffError};

#[derive(Debug, Error)]
pub enum GeodataError {
    #[error(transparent)]
    Tiff(#[from] GeoTiffError),
    #[error(transparent)]
    Geodesy(#[from] GeodesyError),
    #[error("invalid raster: {0}")]
    InvalidRaster(String),
    #[error("invalid polygon: {0}")]
    InvalidPolygon(String),
    #[error("row {row}: {message}")]
    PointParse { row: usize, message: String },
    #[error("CRS mismatch: {left} vs {right}")]
    CrsMismatch { left: CrsId, right: CrsId },
    #[error("{} point(s) cannot be reprojected (indices {indices:?}): {cause}", indices.len())]
    Reprojection { indices: Vec<usize>, cause: GeodesyError },
    #[error("reprojected footprint is degenerate")]
    DegenerateFootprint,
    #[error("region does not intersect the raster")]
    EmptyIntersection,
    #[error("unknown categories: {}", format_unknown(.0))]
    UnknownCategories(Vec<(usize, String)>),
    #[error("invalid label scheme: {0}")]
    InvalidScheme(String),
    #[error("{0}")]
    Serialize(String),
}

fn format_unknown(items: &[(usize, String)]) -> String {
    items.iter().map(|(row, name)| format!("{name:?} (row {row})")).collect::<Vec<_>>().join(", ")
}

pub type Result<T, E = GeodataError> = std::result::Result<T, E>;

/// Affine pixel-to-world mapping for north-up rasters. `origin` is the
/// top-left corner of pixel (0, 0); rows advance southward by
/// `pixel_size_y`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoTransform {
    pub origin_x: f64,
    pub origin_y: f64,
    pub pixel_size_x: f64,
    pub pixel_size_y: f64,
}

impl GeoTransform {
    pub fn new(origin_x: f64, origin_y: f64, pixel_size_x: f64, pixel_size_y: f64) -> Result<Self> {
        let t = Self { origin_x, origin_y, pixel_size_x, pixel_size_y };
        t.validate()?;
        Ok(t)
    }

    fn validate(&self) -> Result<()> {
        let ok = self.origin_x.is_finite()
            && self.origin_y.is_finite()
            && self.pixel_size_x.is_finite()
            && self.pixel_size_y.is_finite()
            && self.pixel_size_x > 0.0
            && self.pixel_size_y > 0.0;
        if ok {
            Ok(())
        } else {
            Err(GeodataError::InvalidRaster(format!("bad geotransform {self:?}")))
        }
    }

    /// World coordinates of the centre of pixel (`row`, `col`).
    pub fn pixel_center(&self, row: usize, col: usize) -> (f64, f64) {
        (
            self.origin_x + (col as f64 + 0.5) * self.pixel_size_x,
            self.origin_y - (row as f64 + 0.5) * self.pixel_size_y,
        )
    }

    /// Fractional (col, row) position of a world coordinate.
    pub fn world_to_pixel(&self, x: f64, y: f64) -> (f64, f64) {
        ((x - self.origin_x) / self.pixel_size_x, (self.origin_y - y) / self.pixel_size_y)
    }

    pub fn pixel_area(&self) -> f64 {
        self.pixel_size_x * self.pixel_size_y
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SampleType {
    U8,
    U16,
    F32,
}

impl SampleType {
    pub fn bytes(self) -> usize {
        match self {
            SampleType::U8 => 1,
            SampleType::U16 => 2,
            SampleType::F32 => 4,
        }
    }

    pub fn max_value(self) -> f64 {
        match self {
            SampleType::U8 => u8::MAX as f64,
            SampleType::U16 => u16::MAX as f64,
            SampleType::F32 => f32::MAX as f64,
        }
    }

    /// Converts to the sample type, saturating integers and rounding to
    /// nearest.
    fn cast(self, v: f64) -> f64 {
        match self {
            SampleType::U8 => v.round().clamp(0.0, 255.0),
            SampleType::U16 => v.round().clamp(0.0, 65535.0),
            SampleType::F32 => v as f32 as f64,
        }
    }
}

/// Band-sequential sample storage: band `b` occupies
/// `[b * width * height, (b + 1) * width * height)` in row-major order.
#[derive(Debug, Clone)]
pub enum Samples {
    U8(Vec<u8>),
    U16(Vec<u16>),
    F32(Vec<f32>),
}

impl Samples {
    pub fn zeros(ty: SampleType, len: usize) -> Self {
        match ty {
            SampleType::U8 => Samples::U8(vec![0; len]),
            SampleType::U16 => Samples::U16(vec![0; len]),
            SampleType::F32 => Samples::F32(vec![0.0; len]),
        }
    }

    pub fn sample_type(&self) -> SampleType {
        match self {
            Samples::U8(_) => SampleType::U8,
            Samples::U16(_) => SampleType::U16,
            Samples::F32(_) => SampleType::F32,
        }
    }

    pub fn len(&self) -> usize {
        match self {
            Samples::U8(v) => v.len(),
            Samples::U16(v) => v.len(),
            Samples::F32(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    #[inline]
    pub fn get(&self, i: usize) -> f64 {
        match self {
            Samples::U8(v) => v[i] as f64,
            Samples::U16(v) => v[i] as f64,
            Samples::F32(v) => v[i] as f64,
        }
    }

    /// Stores `value` converted to the buffer's sample type.
    #[inline]
    pub fn set(&mut self, i: usize, value: f64) {
        match self {
            Samples::U8(v) => v[i] = SampleType::U8.cast(value) as u8,
            Samples::U16(v) => v[i] = SampleType::U16.cast(value) as u16,
            Samples::F32(v) => v[i] = value as f32,
        }
    }

    fn copy_from(&mut self, dst: usize, src: &Samples, at: usize) {
        match (self, src) {
            (Samples::U8(d), Samples::U8(s)) => d[dst] = s[at],
            (Samples::U16(d), Samples::U16(s)) => d[dst] = s[at],
            (Samples::F32(d), Samples::F32(s)) => d[dst] = s[at],
            (d, s) => d.set(dst, s.get(at)),
        }
    }
}

impl PartialEq for Samples {
    /// Bitwise for floats, so NaN nodata compares equal to itself.
    fn eq(&self, other: &Self) -> bool {
        match (self, other) {
            (Samples::U8(a), Samples::U8(b)) => a == b,
            (Samples::U16(a), Samples::U16(b)) => a == b,
            (Samples::F32(a), Samples::F32(b)) => {
                a.len() == b.len() && a.iter().zip(b).all(|(x, y)| x.to_bits() == y.to_bits())
            }
            _ => false,
        }
    }
}

/// Georeferenced multi-band raster.
#[derive(Debug, Clone, PartialEq)]
pub struct RasterGrid {
    width: usize,
    height: usize,
    band_count: usize,
    samples: Samples,
    nodata: Option<f64>,
    crs: CrsId,
    transform: GeoTransform,
    description: Option<String>,
}

impl RasterGrid {
    pub fn new(
        width: usize,
        height: usize,
        band_count: usize,
        samples: Samples,
        nodata: Option<f64>,
        crs: CrsId,
        transform: GeoTransform,
    ) -> Result<Self> {
        if width == 0 || height == 0 {
            return Err(GeodataError::InvalidRaster(format!("dimensions {width}x{height}")));
        }
        if band_count == 0 {
            return Err(GeodataError::InvalidRaster("band count 0".into()));
        }
        let expected = width
            .checked_mul(height)
            .and_then(|n| n.checked_mul(band_count))
            .ok_or_else(|| GeodataError::InvalidRaster("dimension overflow".into()))?;
        if samples.len() != expected {
            return Err(GeodataError::InvalidRaster(format!(
                "{} samples for {width}x{height}x{band_count}",
                samples.len()
            )));
        }
        transform.validate()?;
        Ok(Self { width, height, band_count, samples, nodata, crs, transform, description: None })
    }

    /// Grid of the given shape with every sample set to `fill`.
    pub fn filled(
        width: usize,
        height: usize,
        band_count: usize,
        ty: SampleType,
        fill: f64,
        nodata: Option<f64>,
        crs: CrsId,
        transform: GeoTransform,
    ) -> Result<Self> {
        let len = width.saturating_mul(height).saturating_mul(band_count);
        let mut samples = Samples::zeros(ty, len);
        if fill != 0.0 {
            for i in 0..len {
                samples.set(i, fill);
            }
        }
        Self::new(width, height, band_count, samples, nodata, crs, transform)
    }

    pub fn width(&self) -> usize {
        self.width
    }
    pub fn height(&self) -> usize {
        self.height
    }
    pub fn band_count(&self) -> usize {
        self.band_count
    }
    pub fn sample_type(&self) -> SampleType {
        self.samples.sample_type()
    }
    pub fn samples(&self) -> &Samples {
        &self.samples
    }
    pub fn nodata(&self) -> Option<f64> {
        self.nodata
    }
    pub fn crs(&self) -> CrsId {
        self.crs
    }
    pub fn transform(&self) -> GeoTransform {
        self.transform
    }

    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    fn index(&self, band: usize, row: usize, col: usize) -> usize {
        band * self.width * self.height + row * self.width + col
    }

    #[inline]
    pub fn get(&self, band: usize, row: usize, col: usize) -> f64 {
        self.samples.get(self.index(band, row, col))
    }

    pub fn set(&mut self, band: usize, row: usize, col: usize, value: f64) {
        let i = self.index(band, row, col);
        self.samples.set(i, value);
    }

    /// All band values of one pixel.
    pub fn pixel(&self, row: usize, col: usize) -> Vec<f64> {
        (0..self.band_count).map(|b| self.get(b, row, col)).collect()
    }

    pub fn is_nodata(&self, value: f64) -> bool {
        match self.nodata {
            Some(nd) if nd.is_nan() => value.is_nan(),
            Some(nd) => value == nd,
            None => false,
        }
    }

    /// True when any band of the pixel holds the nodata value.
    pub fn pixel_is_nodata(&self, row: usize, col: usize) -> bool {
        self.nodata.is_some() && (0..self.band_count).any(|b| self.is_nodata(self.get(b, row, col)))
    }

    /// Pixel containing a world coordinate (floor of the fractional
    /// position), or `None` outside the grid.
    pub fn locate(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let (fc, fr) = self.transform.world_to_pixel(x, y);
        let (c, r) = (fc.floor(), fr.floor());
        if c < 0.0 || r < 0.0 || c >= self.width as f64 || r >= self.height as f64 || c.is_nan() || r.is_nan() {
            return None;
        }
        Some((r as usize, c as usize))
    }

    /// World extent of the grid edges.
    pub fn bounds(&self) -> Bounds {
        let t = self.transform;
        Bounds {
            min_x: t.origin_x,
            min_y: t.origin_y - self.height as f64 * t.pixel_size_y,
            max_x: t.origin_x + self.width as f64 * t.pixel_size_x,
            max_y: t.origin_y,
        }
    }

    pub fn with_crs(mut self, crs: CrsId) -> Self {
        self.crs = crs;
        self
    }

    /// Free-text description, stored in the ImageDescription tag.
    pub fn description(&self) -> Option<&str> {
        self.description.as_deref()
    }

    pub fn with_description(mut self, text: Option<String>) -> Self {
        self.description = text;
        self
    }

    pub(crate) fn with_nodata(mut self, nodata: Option<f64>) -> Self {
        self.nodata = nodata;
        self
    }

    /// Nodata value to use when writing masked pixels: the grid's own, or 0.
    pub(crate) fn fill_value(&self) -> f64 {
        self.nodata.unwrap_or(0.0)
    }

    pub(crate) fn copy_pixel_from(&mut self, row: usize, col: usize, src: &RasterGrid, src_row: usize, src_col: usize) {
        for b in 0..self.band_count {
            let d = self.index(b, row, col);
            let s = src.index(b, src_row, src_col);
            self.samples.copy_from(d, &src.samples, s);
        }
    }
}

/// Ordered category names with their integer label codes. Code 0 is
/// reserved for nodata/unclassified.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LabelScheme {
    entries: Vec<(String, u8)>,
}

impl Default for LabelScheme {
    fn default() -> Self {
        Self {
            entries: vec![
                ("Trees".into(), 1),
                ("Grass".into(), 2),
                ("Impervious".into(), 3),
                ("Water".into(), 4),
            ],
        }
    }
}

impl LabelScheme {
    pub fn new(entries: Vec<(String, u8)>) -> Result<Self> {
        if entries.is_empty() {
            return Err(GeodataError::InvalidScheme("no categories".into()));
        }
        for (i, (name, code)) in entries.iter().enumerate() {
            if *code == 0 {
                return Err(GeodataError::InvalidScheme(format!("category {name:?} uses reserved code 0")));
            }
            if entries[..i].iter().any(|(n, c)| c == code || n.trim().eq_ignore_ascii_case(name.trim())) {
                return Err(GeodataError::InvalidScheme(format!("duplicate category {name:?} / code {code}")));
            }
        }
        Ok(Self { entries })
    }

    pub fn entries(&self) -> &[(String, u8)] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn codes(&self) -> impl Iterator<Item = u8> + '_ {
        self.entries.iter().map(|e| e.1)
    }

    /// Case-insensitive, whitespace-trimmed lookup.
    pub fn code_of(&self, category: &str) -> Option<u8> {
        let key = category.trim();
        self.entries.iter().find(|(n, _)| n.eq_ignore_ascii_case(key)).map(|e| e.1)
    }

    pub fn name_of(&self, code: u8) -> Option<&str> {
        self.entries.iter().find(|e| e.1 == code).map(|e| e.0.as_str())
    }

    pub fn position(&self, code: u8) -> Option<usize> {
        self.entries.iter().position(|e| e.1 == code)
    }

    pub fn contains(&self, code: u8) -> bool {
        self.position(code).is_some()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid() -> RasterGrid {
        let t = GeoTransform::new(1000.0, 2000.0, 10.0, 10.0).unwrap();
        let samples = Samples::U16((0..2 * 3 * 2).map(|v| v as u16).collect());
        RasterGrid::new(3, 2, 2, samples, Some(0.0), CrsId::from_epsg(32636).unwrap(), t).unwrap()
    }

    #[test]
    fn indexing_is_band_sequential() {
        let g = grid();
        assert_eq!(g.get(0, 0, 0), 0.0);
        assert_eq!(g.get(0, 1, 2), 5.0);
        assert_eq!(g.get(1, 0, 0), 6.0);
        assert_eq!(g.pixel(1, 1), vec![4.0, 10.0]);
        assert!(g.pixel_is_nodata(0, 0));
        assert!(!g.pixel_is_nodata(0, 1));
    }

    #[test]
    fn locate_uses_floor() {
        let g = grid();
        assert_eq!(g.locate(1000.0, 2000.0), Some((0, 0)));
        assert_eq!(g.locate(1010.0, 1990.0), Some((1, 1)));
        assert_eq!(g.locate(1029.99, 1980.01), Some((1, 2)));
        assert_eq!(g.locate(1030.0, 1990.0), None);
        assert_eq!(g.locate(999.99, 1990.0), None);
        assert_eq!(g.transform().pixel_center(0, 0), (1005.0, 1995.0));
    }

    #[test]
    fn rejects_bad_shapes() {
        let t = GeoTransform::new(0.0, 0.0, 1.0, 1.0).unwrap();
        let crs = CrsId::WGS84;
        assert!(RasterGrid::new(0, 1, 1, Samples::U8(vec![]), None, crs, t).is_err());
        assert!(RasterGrid::new(1, 1, 0, Samples::U8(vec![]), None, crs, t).is_err());
        assert!(RasterGrid::new(2, 2, 1, Samples::U8(vec![0; 3]), None, crs, t).is_err());
        assert!(GeoTransform::new(0.0, 0.0, -1.0, 1.0).is_err());
    }

    #[test]
    fn scheme_lookup() {
        let s = LabelScheme::default();
        assert_eq!(s.code_of("Trees"), Some(1));
        assert_eq!(s.code_of(" water "), Some(4));
        assert_eq!(s.code_of("Crops"), None);
        for (name, code) in s.entries() {
            assert_eq!(s.name_of(*code), Some(name.as_str()));
            assert_eq!(s.code_of(name), Some(*code));
        }
        assert!(LabelScheme::new(vec![("A".into(), 0)]).is_err());
        assert!(LabelScheme::new(vec![("A".into(), 1), ("a".into(), 2)]).is_err());
    }
}
