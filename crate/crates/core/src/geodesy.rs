//! WGS84 geographic <-> UTM conversion.
//!
//! Forward and inverse transverse Mercator follow the Krüger series carried
//! to fourth order in the third flattening `n`, which keeps round trips well
//! below a millimetre inside a zone. Norway/Svalbard zone exceptions are not
//! implemented.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// WGS84 semi-major axis (m).
pub const WGS84_A: f64 = 6_378_137.0;
/// WGS84 inverse flattening.
pub const WGS84_INV_F: f64 = 298.257_223_563;
/// UTM central scale factor.
pub const UTM_K0: f64 = 0.9996;
pub const FALSE_EASTING: f64 = 500_000.0;
pub const FALSE_NORTHING_SOUTH: f64 = 10_000_000.0;
/// Latitude limit accepted for UTM projection calls.
pub const UTM_LAT_LIMIT: f64 = 84.0;
/// Longitude offset from the central meridian beyond which the forward
/// mapping is refused.
pub const MAX_MERIDIAN_OFFSET: f64 = 9.0;

pub const EPSG_WGS84: u32 = 4326;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeodesyError {
    #[error("latitude {0} is outside the UTM band [-84, 84]")]
    OutOfBand(f64),
    #[error("non-finite coordinate ({lon}, {lat})")]
    NonFinite { lon: f64, lat: f64 },
    #[error("longitude {lon} is {offset:.3} degrees from the zone {zone} central meridian (limit 9)")]
    TooFarFromMeridian { lon: f64, zone: u8, offset: f64 },
    #[error("invalid UTM zone {0}")]
    InvalidZone(i64),
    #[error("unsupported CRS code EPSG:{0}")]
    UnsupportedCrs(u32),
    #[error("empty bounding box")]
    EmptyBox,
}

pub type Result<T, E = GeodesyError> = std::result::Result<T, E>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Hemisphere {
    North,
    South,
}

impl Hemisphere {
    pub fn of_latitude(lat: f64) -> Self {
        if lat < 0.0 {
            Hemisphere::South
        } else {
            Hemisphere::North
        }
    }

    fn false_northing(self) -> f64 {
        match self {
            Hemisphere::North => 0.0,
            Hemisphere::South => FALSE_NORTHING_SOUTH,
        }
    }
}

/// Geographic position in degrees.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoPoint {
    pub lon: f64,
    pub lat: f64,
}

impl GeoPoint {
    pub fn new(lon: f64, lat: f64) -> Self {
        Self { lon, lat }
    }

    fn check_band(&self) -> Result<()> {
        if !self.lon.is_finite() || !self.lat.is_finite() {
            return Err(GeodesyError::NonFinite { lon: self.lon, lat: self.lat });
        }
        if self.lat.abs() > UTM_LAT_LIMIT {
            return Err(GeodesyError::OutOfBand(self.lat));
        }
        Ok(())
    }
}

/// Projected UTM position.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProjPoint {
    pub easting: f64,
    pub northing: f64,
    pub zone: u8,
    pub hemisphere: Hemisphere,
}

/// A supported coordinate reference system, identified by EPSG code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(try_from = "u32", into = "u32")]
pub struct CrsId(u32);

/// Decoded meaning of a [`CrsId`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CrsKind {
    Geographic,
    Utm { zone: u8, hemisphere: Hemisphere },
}

impl CrsId {
    pub const WGS84: CrsId = CrsId(EPSG_WGS84);

    pub fn from_epsg(code: u32) -> Result<Self> {
        match code {
            EPSG_WGS84 | 32601..=32660 | 32701..=32760 => Ok(Self(code)),
            other => Err(GeodesyError::UnsupportedCrs(other)),
        }
    }

    pub fn utm(zone: u8, hemisphere: Hemisphere) -> Result<Self> {
        if !(1..=60).contains(&zone) {
            return Err(GeodesyError::InvalidZone(zone as i64));
        }
        let base = match hemisphere {
            Hemisphere::North => 32600,
            Hemisphere::South => 32700,
        };
        Ok(Self(base + zone as u32))
    }

    pub fn epsg(self) -> u32 {
        self.0
    }

    pub fn kind(self) -> CrsKind {
        match self.0 {
            EPSG_WGS84 => CrsKind::Geographic,
            c if c > 32700 => CrsKind::Utm { zone: (c - 32700) as u8, hemisphere: Hemisphere::South },
            c => CrsKind::Utm { zone: (c - 32600) as u8, hemisphere: Hemisphere::North },
        }
    }

    pub fn is_geographic(self) -> bool {
        self.kind() == CrsKind::Geographic
    }
}

impl TryFrom<u32> for CrsId {
    type Error = GeodesyError;
    fn try_from(code: u32) -> Result<Self> {
        Self::from_epsg(code)
    }
}

impl From<CrsId> for u32 {
    fn from(c: CrsId) -> u32 {
        c.0
    }
}

impl fmt::Display for CrsId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "EPSG:{}", self.0)
    }
}

/// Wraps a longitude into `[-180, 180)`.
pub fn normalize_lon(lon: f64) -> f64 {
    let l = (lon + 180.0).rem_euclid(360.0) - 180.0;
    if l >= 180.0 {
        l - 360.0
    } else {
        l
    }
}

pub fn central_meridian(zone: u8) -> f64 {
    zone as f64 * 6.0 - 183.0
}

fn zone_for_lon(lon: f64) -> u8 {
    let z = ((normalize_lon(lon) + 180.0) / 6.0).floor() as i64 + 1;
    z.clamp(1, 60) as u8
}

/// UTM zone and hemisphere containing `p`. Longitude 180 wraps to zone 1;
/// a longitude on a zone edge belongs to the eastern zone.
pub fn utm_zone_for(p: GeoPoint) -> Result<(u8, Hemisphere)> {
    p.check_band()?;
    Ok((zone_for_lon(p.lon), Hemisphere::of_latitude(p.lat)))
}

struct Series {
    /// Rectifying radius scaled by k0.
    k0_a: f64,
    alpha: [f64; 4],
    beta: [f64; 4],
    delta: [f64; 4],
    /// 2 sqrt(n) / (1 + n)
    conformal_c: f64,
}

fn series() -> &'static Series {
    use std::sync::OnceLock;
    static S: OnceLock<Series> = OnceLock::new();
    S.get_or_init(|| {
        let f = 1.0 / WGS84_INV_F;
        let n = f / (2.0 - f);
        let (n2, n3, n4) = (n * n, n * n * n, n * n * n * n);
        let a = WGS84_A / (1.0 + n) * (1.0 + n2 / 4.0 + n4 / 64.0);
        Series {
            k0_a: UTM_K0 * a,
            alpha: [
                n / 2.0 - 2.0 * n2 / 3.0 + 5.0 * n3 / 16.0 + 41.0 * n4 / 180.0,
                13.0 * n2 / 48.0 - 3.0 * n3 / 5.0 + 557.0 * n4 / 1440.0,
                61.0 * n3 / 240.0 - 103.0 * n4 / 140.0,
                49561.0 * n4 / 161280.0,
            ],
            beta: [
                n / 2.0 - 2.0 * n2 / 3.0 + 37.0 * n3 / 96.0 - n4 / 360.0,
                n2 / 48.0 + n3 / 15.0 - 437.0 * n4 / 1440.0,
                17.0 * n3 / 480.0 - 37.0 * n4 / 840.0,
                4397.0 * n4 / 161280.0,
            ],
            delta: [
                2.0 * n - 2.0 * n2 / 3.0 - 2.0 * n3 + 116.0 * n4 / 45.0,
                7.0 * n2 / 3.0 - 8.0 * n3 / 5.0 - 227.0 * n4 / 45.0,
                56.0 * n3 / 15.0 - 136.0 * n4 / 35.0,
                4279.0 * n4 / 630.0,
            ],
            conformal_c: 2.0 * n.sqrt() / (1.0 + n),
        }
    })
}

fn check_zone(zone: i64) -> Result<u8> {
    if (1..=60).contains(&zone) {
        Ok(zone as u8)
    } else {
        Err(GeodesyError::InvalidZone(zone))
    }
}

/// Forward projection into `zone`, hemisphere chosen by the sign of the
/// latitude.
pub fn geo_to_utm(p: GeoPoint, zone: u8) -> Result<ProjPoint> {
    project(p, zone, Hemisphere::of_latitude(p.lat))
}

/// Forward projection into an explicit zone and hemisphere. Northings may
/// fall outside `[0, 10^7)` when the point lies in the other hemisphere.
pub fn project(p: GeoPoint, zone: u8, hemisphere: Hemisphere) -> Result<ProjPoint> {
    p.check_band()?;
    let zone = check_zone(zone as i64)?;
    let dlon = normalize_lon(p.lon - central_meridian(zone));
    if dlon.abs() > MAX_MERIDIAN_OFFSET {
        return Err(GeodesyError::TooFarFromMeridian { lon: p.lon, zone, offset: dlon.abs() });
    }
    let s = series();
    let phi = p.lat.to_radians();
    let lam = dlon.to_radians();
    let sin_phi = phi.sin();
    let t = (sin_phi.atanh() - s.conformal_c * (s.conformal_c * sin_phi).atanh()).sinh();
    let xi_p = t.atan2(lam.cos());
    let eta_p = (lam.sin() / (1.0 + t * t).sqrt()).atanh();

    let mut xi = xi_p;
    let mut eta = eta_p;
    for (j, a) in s.alpha.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi += a * (k * xi_p).sin() * (k * eta_p).cosh();
        eta += a * (k * xi_p).cos() * (k * eta_p).sinh();
    }
    Ok(ProjPoint {
        easting: FALSE_EASTING + s.k0_a * eta,
        northing: hemisphere.false_northing() + s.k0_a * xi,
        zone,
        hemisphere,
    })
}

/// Inverse projection.
pub fn utm_to_geo(p: ProjPoint) -> Result<GeoPoint> {
    let zone = check_zone(p.zone as i64)?;
    if !p.easting.is_finite() || !p.northing.is_finite() {
        return Err(GeodesyError::NonFinite { lon: p.easting, lat: p.northing });
    }
    let s = series();
    let xi = (p.northing - p.hemisphere.false_northing()) / s.k0_a;
    let eta = (p.easting - FALSE_EASTING) / s.k0_a;
    let mut xi_p = xi;
    let mut eta_p = eta;
    for (j, b) in s.beta.iter().enumerate() {
        let k = 2.0 * (j + 1) as f64;
        xi_p -= b * (k * xi).sin() * (k * eta).cosh();
        eta_p -= b * (k * xi).cos() * (k * eta).sinh();
    }
    let chi = (xi_p.sin() / eta_p.cosh()).asin();
    let mut phi = chi;
    for (j, d) in s.delta.iter().enumerate() {
        phi += d * (2.0 * (j + 1) as f64 * chi).sin();
    }
    let lam = eta_p.sinh().atan2(xi_p.cos());
    Ok(GeoPoint { lon: normalize_lon(central_meridian(zone) + lam.to_degrees()), lat: phi.to_degrees() })
}

/// Longitude/latitude rectangle.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GeoBox {
    pub min_lon: f64,
    pub min_lat: f64,
    pub max_lon: f64,
    pub max_lat: f64,
}

impl GeoBox {
    pub fn new(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> Self {
        Self { min_lon, min_lat, max_lon, max_lat }
    }

    /// Smallest box covering the points; `None` for an empty iterator.
    pub fn covering<I: IntoIterator<Item = GeoPoint>>(points: I) -> Option<Self> {
        points.into_iter().fold(None, |acc, p| {
            Some(match acc {
                None => GeoBox::new(p.lon, p.lat, p.lon, p.lat),
                Some(b) => GeoBox::new(b.min_lon.min(p.lon), b.min_lat.min(p.lat), b.max_lon.max(p.lon), b.max_lat.max(p.lat)),
            })
        })
    }

    pub fn is_empty(&self) -> bool {
        let vals = [self.min_lon, self.min_lat, self.max_lon, self.max_lat];
        vals.iter().any(|v| !v.is_finite()) || self.min_lon > self.max_lon || self.min_lat > self.max_lat
    }

    pub fn centroid(&self) -> GeoPoint {
        GeoPoint::new((self.min_lon + self.max_lon) / 2.0, (self.min_lat + self.max_lat) / 2.0)
    }
}

/// Result of [`suggest_crs`]. `ambiguous` is set when the box touches more
/// than one UTM zone; the suggestion is then the centroid's zone.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrsSuggestion {
    pub crs: CrsId,
    pub ambiguous: bool,
    pub first_zone: u8,
    pub last_zone: u8,
}

pub fn suggest_crs(bbox: GeoBox) -> Result<CrsSuggestion> {
    if bbox.is_empty() {
        return Err(GeodesyError::EmptyBox);
    }
    let (zone, hemisphere) = utm_zone_for(bbox.centroid())?;
    let first_zone = zone_for_lon(bbox.min_lon);
    let last_zone = zone_for_lon(bbox.max_lon);
    let wide = bbox.max_lon - bbox.min_lon >= 6.0;
    Ok(CrsSuggestion {
        crs: CrsId::utm(zone, hemisphere)?,
        ambiguous: wide || first_zone != last_zone,
        first_zone,
        last_zone,
    })
}

/// Converts a position between any two supported CRSs.
pub fn transform(x: f64, y: f64, from: CrsId, to: CrsId) -> Result<(f64, f64)> {
    if from == to {
        return Ok((x, y));
    }
    let geo = match from.kind() {
        CrsKind::Geographic => GeoPoint::new(x, y),
        CrsKind::Utm { zone, hemisphere } => utm_to_geo(ProjPoint { easting: x, northing: y, zone, hemisphere })?,
    };
    match to.kind() {
        CrsKind::Geographic => Ok((geo.lon, geo.lat)),
        CrsKind::Utm { zone, hemisphere } => {
            let p = project(geo, zone, hemisphere)?;
            Ok((p.easting, p.northing))
        }
    }
}
