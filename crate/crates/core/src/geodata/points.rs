//! Labelled point samples and their CSV / GeoJSON interchange formats.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::{json, Map, Value};

use super::{GeodataError, Polygon, Result};
use crate::geodesy::{CrsId, GeoBox, GeoPoint};

pub const CATEGORY: &str = "category";
pub const LABEL: &str = "label";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum AttrValue {
    Int(i64),
    Text(String),
}

impl AttrValue {
    pub fn as_text(&self) -> Option<&str> {
        match self {
            AttrValue::Text(s) => Some(s),
            AttrValue::Int(_) => None,
        }
    }

    pub fn as_int(&self) -> Option<i64> {
        match self {
            AttrValue::Int(v) => Some(*v),
            AttrValue::Text(_) => None,
        }
    }

    fn to_cell(&self) -> String {
        match self {
            AttrValue::Int(v) => v.to_string(),
            AttrValue::Text(s) => s.clone(),
        }
    }
}

/// One sample location. `x`/`y` are lon/lat in EPSG:4326 or
/// easting/northing in a UTM CRS, as given by the owning [`PointSet`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointFeature {
    pub x: f64,
    pub y: f64,
    pub attributes: BTreeMap<String, AttrValue>,
}

impl PointFeature {
    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y, attributes: BTreeMap::new() }
    }

    pub fn with_category(mut self, category: &str) -> Self {
        self.attributes.insert(CATEGORY.into(), AttrValue::Text(category.into()));
        self
    }

    pub fn with_label(mut self, label: u8) -> Self {
        self.attributes.insert(LABEL.into(), AttrValue::Int(label as i64));
        self
    }

    pub fn category(&self) -> Option<&str> {
        self.attributes.get(CATEGORY).and_then(AttrValue::as_text)
    }

    pub fn label(&self) -> Option<i64> {
        self.attributes.get(LABEL).and_then(AttrValue::as_int)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSet {
    pub crs: CrsId,
    pub features: Vec<PointFeature>,
}

impl PointSet {
    pub fn new(crs: CrsId, features: Vec<PointFeature>) -> Self {
        Self { crs, features }
    }

    pub fn len(&self) -> usize {
        self.features.len()
    }

    pub fn is_empty(&self) -> bool {
        self.features.is_empty()
    }

    /// Lon/lat extent; `None` for projected or empty sets.
    pub fn geo_extent(&self) -> Option<GeoBox> {
        if !self.crs.is_geographic() {
            return None;
        }
        GeoBox::covering(self.features.iter().map(|f| GeoPoint::new(f.x, f.y)))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PointFormat {
    Csv,
    GeoJson,
}

impl std::str::FromStr for PointFormat {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s.to_ascii_lowercase().as_str() {
            "csv" => Ok(PointFormat::Csv),
            "geojson" | "json" => Ok(PointFormat::GeoJson),
            other => Err(format!("unknown point format {other:?}")),
        }
    }
}

fn parse_err(row: usize, message: impl Into<String>) -> GeodataError {
    GeodataError::PointParse { row, message: message.into() }
}

fn check_range(row: usize, lon: f64, lat: f64) -> Result<()> {
    if !lon.is_finite() || !lat.is_finite() || !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(parse_err(row, format!("coordinate ({lon}, {lat}) out of range")));
    }
    Ok(())
}

/// Parses point samples. CSV needs a `lon,lat,category` header (extra
/// columns become attributes); GeoJSON must be a FeatureCollection of
/// Points with a `category` property. Rows are numbered from 1.
pub fn read_points(bytes: &[u8], format: PointFormat) -> Result<PointSet> {
    match format {
        PointFormat::Csv => read_csv(bytes),
        PointFormat::GeoJson => read_geojson(bytes),
    }
}

fn read_csv(bytes: &[u8]) -> Result<PointSet> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(bytes);
    let headers = rdr.headers().map_err(|e| parse_err(0, e.to_string()))?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim().eq_ignore_ascii_case(name));
    let lon_i = col("lon").ok_or_else(|| parse_err(0, "missing column \"lon\""))?;
    let lat_i = col("lat").ok_or_else(|| parse_err(0, "missing column \"lat\""))?;
    let cat_i = col(CATEGORY).ok_or_else(|| parse_err(0, "missing column \"category\""))?;
    let extras: Vec<(usize, String)> = headers
        .iter()
        .enumerate()
        .filter(|(i, _)| ![lon_i, lat_i, cat_i].contains(i))
        .map(|(i, h)| (i, h.trim().to_string()))
        .collect();

    let mut features = Vec::new();
    for (n, rec) in rdr.records().enumerate() {
        let row = n + 1;
        let rec = rec.map_err(|e| parse_err(row, e.to_string()))?;
        let num = |i: usize, what: &str| -> Result<f64> {
            let cell = rec.get(i).ok_or_else(|| parse_err(row, format!("missing {what}")))?;
            cell.trim().parse::<f64>().map_err(|_| parse_err(row, format!("non-numeric {what} {cell:?}")))
        };
        let lon = num(lon_i, "lon")?;
        let lat = num(lat_i, "lat")?;
        check_range(row, lon, lat)?;
        let category = rec.get(cat_i).ok_or_else(|| parse_err(row, "missing category"))?;
        let mut f = PointFeature::new(lon, lat).with_category(category);
        for (i, name) in &extras {
            let cell = rec.get(*i).unwrap_or("");
            if cell.is_empty() {
                continue;
            }
            let value = if name == LABEL {
                AttrValue::Int(cell.trim().parse().map_err(|_| parse_err(row, format!("non-integer label {cell:?}")))?)
            } else {
                AttrValue::Text(cell.to_string())
            };
            f.attributes.insert(name.clone(), value);
        }
        features.push(f);
    }
    Ok(PointSet::new(CrsId::WGS84, features))
}

fn parse_crs_member(v: &Value) -> Result<CrsId> {
    let name = v
        .get("properties")
        .and_then(|p| p.get("name"))
        .and_then(Value::as_str)
        .ok_or_else(|| parse_err(0, "crs member without properties.name"))?;
    let code = name
        .rsplit(':')
        .next()
        .and_then(|c| c.parse::<u32>().ok())
        .ok_or_else(|| parse_err(0, format!("unrecognised crs name {name:?}")))?;
    let code = if name.ends_with("CRS84") { 4326 } else { code };
    CrsId::from_epsg(code).map_err(|e| parse_err(0, e.to_string()))
}

fn read_geojson(bytes: &[u8]) -> Result<PointSet> {
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| parse_err(0, format!("invalid JSON: {e}")))?;
    if doc.get("type").and_then(Value::as_str) != Some("FeatureCollection") {
        return Err(parse_err(0, "expected a FeatureCollection"));
    }
    let crs = match doc.get("crs") {
        Some(c) if !c.is_null() => parse_crs_member(c)?,
        _ => CrsId::WGS84,
    };
    let items = doc.get("features").and_then(Value::as_array).ok_or_else(|| parse_err(0, "missing features array"))?;
    let mut features = Vec::with_capacity(items.len());
    for (n, item) in items.iter().enumerate() {
        let row = n + 1;
        let geom = item.get("geometry").ok_or_else(|| parse_err(row, "missing geometry"))?;
        if geom.get("type").and_then(Value::as_str) != Some("Point") {
            return Err(parse_err(row, "geometry is not a Point"));
        }
        let coords = geom.get("coordinates").and_then(Value::as_array).ok_or_else(|| parse_err(row, "missing coordinates"))?;
        if coords.len() < 2 {
            return Err(parse_err(row, "fewer than 2 coordinates"));
        }
        let x = coords[0].as_f64().ok_or_else(|| parse_err(row, format!("non-numeric coordinate {}", coords[0])))?;
        let y = coords[1].as_f64().ok_or_else(|| parse_err(row, format!("non-numeric coordinate {}", coords[1])))?;
        if crs.is_geographic() {
            check_range(row, x, y)?;
        } else if !x.is_finite() || !y.is_finite() {
            return Err(parse_err(row, "non-finite coordinate"));
        }
        let props = item.get("properties").and_then(Value::as_object).ok_or_else(|| parse_err(row, "missing properties"))?;
        let mut f = PointFeature::new(x, y);
        for (k, v) in props {
            let value = match v {
                Value::String(s) => AttrValue::Text(s.clone()),
                Value::Number(num) if num.is_i64() => AttrValue::Int(num.as_i64().unwrap()),
                Value::Null => continue,
                other => AttrValue::Text(other.to_string()),
            };
            f.attributes.insert(k.clone(), value);
        }
        if f.category().is_none() {
            return Err(parse_err(row, "missing string property \"category\""));
        }
        features.push(f);
    }
    Ok(PointSet::new(crs, features))
}

/// Serialises a point set. CSV is only defined for EPSG:4326 sets; GeoJSON
/// carries a `crs` member for projected sets.
pub fn write_points(ps: &PointSet, format: PointFormat) -> Result<Vec<u8>> {
    match format {
        PointFormat::Csv => write_csv(ps),
        PointFormat::GeoJson => Ok(write_geojson(ps)),
    }
}

fn write_csv(ps: &PointSet) -> Result<Vec<u8>> {
    if !ps.crs.is_geographic() {
        return Err(GeodataError::Serialize(format!("CSV points must be EPSG:4326, set is {}", ps.crs)));
    }
    let mut extra: Vec<&str> = ps
        .features
        .iter()
        .flat_map(|f| f.attributes.keys())
        .map(String::as_str)
        .filter(|k| *k != CATEGORY)
        .collect();
    extra.sort_unstable();
    extra.dedup();
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["lon", "lat", CATEGORY];
    header.extend(&extra);
    w.write_record(&header).map_err(|e| GeodataError::Serialize(e.to_string()))?;
    for f in &ps.features {
        let mut rec = vec![format!("{}", f.x), format!("{}", f.y), f.category().unwrap_or("").to_string()];
        rec.extend(extra.iter().map(|k| f.attributes.get(*k).map(AttrValue::to_cell).unwrap_or_default()));
        w.write_record(&rec).map_err(|e| GeodataError::Serialize(e.to_string()))?;
    }
    w.into_inner().map_err(|e| GeodataError::Serialize(e.to_string()))
}

fn write_geojson(ps: &PointSet) -> Vec<u8> {
    let features: Vec<Value> = ps
        .features
        .iter()
        .map(|f| {
            let props: Map<String, Value> = f
                .attributes
                .iter()
                .map(|(k, v)| {
                    let v = match v {
                        AttrValue::Int(i) => json!(i),
                        AttrValue::Text(s) => json!(s),
                    };
                    (k.clone(), v)
                })
                .collect();
            json!({
                "type": "Feature",
                "geometry": { "type": "Point", "coordinates": [f.x, f.y] },
                "properties": props,
            })
        })
        .collect();
    let mut doc = json!({ "type": "FeatureCollection", "features": features });
    if !ps.crs.is_geographic() {
        doc["crs"] = json!({
            "type": "name",
            "properties": { "name": format!("urn:ogc:def:crs:EPSG::{}", ps.crs.epsg()) },
        });
    }
    serde_json::to_vec(&doc).expect("JSON values always serialise")
}

/// Boundary polygon from a GeoJSON Polygon geometry, Feature or
/// FeatureCollection (first Polygon feature). Coordinates are in the CRS
/// declared by a `crs` member, EPSG:4326 when absent.
pub fn read_boundary(bytes: &[u8]) -> Result<(Polygon, CrsId)> {
    let bad = |m: &str| GeodataError::InvalidPolygon(m.to_string());
    let doc: Value = serde_json::from_slice(bytes).map_err(|e| bad(&format!("invalid JSON: {e}")))?;
    let crs = match doc.get("crs") {
        Some(c) if !c.is_null() => parse_crs_member(c)?,
        _ => CrsId::WGS84,
    };
    let geom = match doc.get("type").and_then(Value::as_str) {
        Some("Polygon") => &doc,
        Some("Feature") => doc.get("geometry").ok_or_else(|| bad("feature without geometry"))?,
        Some("FeatureCollection") => doc
            .get("features")
            .and_then(Value::as_array)
            .and_then(|fs| {
                fs.iter().filter_map(|f| f.get("geometry")).find(|g| g.get("type").and_then(Value::as_str) == Some("Polygon"))
            })
            .ok_or_else(|| bad("no Polygon feature"))?,
        _ => return Err(bad("expected a Polygon, Feature or FeatureCollection")),
    };
    if geom.get("type").and_then(Value::as_str) != Some("Polygon") {
        return Err(bad("geometry is not a Polygon"));
    }
    let rings = geom.get("coordinates").and_then(Value::as_array).ok_or_else(|| bad("missing coordinates"))?;
    let mut parsed = Vec::with_capacity(rings.len());
    for ring in rings {
        let pts = ring.as_array().ok_or_else(|| bad("ring is not an array"))?;
        let ring: Option<Vec<(f64, f64)>> = pts
            .iter()
            .map(|p| {
                let p = p.as_array()?;
                Some((p.first()?.as_f64()?, p.get(1)?.as_f64()?))
            })
            .collect();
        parsed.push(ring.ok_or_else(|| bad("vertex is not a number pair"))?);
    }
    if parsed.is_empty() {
        return Err(bad("polygon without rings"));
    }
    let exterior = parsed.remove(0);
    Ok((Polygon::new(exterior, parsed)?, crs))
}

pub fn write_boundary(poly: &Polygon, crs: CrsId) -> Vec<u8> {
    let ring = |r: &[(f64, f64)]| Value::Array(r.iter().map(|(x, y)| json!([x, y])).collect());
    let mut rings = vec![ring(poly.exterior())];
    rings.extend(poly.interiors().iter().map(|r| ring(r)));
    let mut doc = json!({ "type": "Polygon", "coordinates": rings });
    if !crs.is_geographic() {
        doc["crs"] = json!({ "type": "name", "properties": { "name": format!("urn:ogc:def:crs:EPSG::{}", crs.epsg()) } });
    }
    let mut out = serde_json::to_vec(&doc).expect("JSON value serialises");
    out.push(b'\n');
    out
}
