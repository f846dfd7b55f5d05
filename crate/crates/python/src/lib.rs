//! Python bindings. Rasters, models and sample tables are wrapped as
//! classes; everything else goes in and out as bytes, strings and plain
//! Python containers.

use std::collections::BTreeMap;

use canopy::carbon::{assess_carbon, carbon_report, vehicle_equivalent, CarbonConfig};
use canopy::classify::{classify_raster, Algorithm, ForestParams, SvmParams, TrainConfig, TrainedModel};
use canopy::evaluate::{confusion_matrix, metrics, normalize};
use canopy::geodata::{
    read_boundary, read_geotiff, read_points, render_classmap, reproject_points, reproject_polygon, write_geotiff,
    write_points, LabelScheme, PointFormat, RasterGrid,
};
use canopy::geodesy::{self as geo, CrsId, GeoBox, GeoPoint, Hemisphere, ProjPoint};
use canopy::sampling::{extract_pixel_values, stratified_split, SampleTable, SplitSpec};
use canopy::synthscene::{generate_scene, sample_points_from_truth, SceneSpec};
use canopy::workflow::{self as wf, DataCatalog, ExecOptions, WorkflowSpec};
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict, PyList};
use serde_json::Value;

fn value_err(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn runtime_err(e: impl std::fmt::Display) -> PyErr {
    PyRuntimeError::new_err(e.to_string())
}

fn to_py<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    Ok(match v {
        Value::Null => py.None().into_bound(py),
        Value::Bool(b) => b.into_pyobject(py)?.to_owned().into_any(),
        Value::Number(n) => match n.as_i64() {
            Some(i) => i.into_pyobject(py)?.into_any(),
            None => n.as_f64().unwrap_or(f64::NAN).into_pyobject(py)?.into_any(),
        },
        Value::String(s) => s.into_pyobject(py)?.into_any(),
        Value::Array(items) => {
            let list = PyList::empty(py);
            for item in items {
                list.append(to_py(py, item)?)?;
            }
            list.into_any()
        }
        Value::Object(map) => {
            let dict = PyDict::new(py);
            for (k, item) in map {
                dict.set_item(k, to_py(py, item)?)?;
            }
            dict.into_any()
        }
    })
}

fn serialize_to_py<'py, T: serde::Serialize>(py: Python<'py>, v: &T) -> PyResult<Bound<'py, PyAny>> {
    to_py(py, &serde_json::to_value(v).map_err(runtime_err)?)
}

fn scheme_from(entries: Option<Vec<(String, u8)>>) -> PyResult<LabelScheme> {
    match entries {
        None => Ok(LabelScheme::default()),
        Some(e) => LabelScheme::new(e).map_err(value_err),
    }
}

/// A georeferenced raster (u8, u16 or f32 samples, band-sequential).
#[pyclass(name = "Raster", module = "canopy_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyRaster {
    inner: RasterGrid,
}

#[pymethods]
impl PyRaster {
    #[staticmethod]
    fn from_geotiff(data: &[u8]) -> PyResult<Self> {
        read_geotiff(data).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_geotiff<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyBytes>> {
        Ok(PyBytes::new(py, &write_geotiff(&self.inner).map_err(runtime_err)?))
    }

    #[getter]
    fn width(&self) -> usize {
        self.inner.width()
    }

    #[getter]
    fn height(&self) -> usize {
        self.inner.height()
    }

    #[getter]
    fn band_count(&self) -> usize {
        self.inner.band_count()
    }

    #[getter]
    fn epsg(&self) -> u32 {
        self.inner.crs().epsg()
    }

    #[getter]
    fn nodata(&self) -> Option<f64> {
        self.inner.nodata()
    }

    #[getter]
    fn description(&self) -> Option<String> {
        self.inner.description().map(str::to_owned)
    }

    /// (origin_x, origin_y, pixel_size_x, pixel_size_y)
    #[getter]
    fn transform(&self) -> (f64, f64, f64, f64) {
        let t = self.inner.transform();
        (t.origin_x, t.origin_y, t.pixel_size_x, t.pixel_size_y)
    }

    fn get(&self, band: usize, row: usize, col: usize) -> PyResult<f64> {
        if band >= self.inner.band_count() || row >= self.inner.height() || col >= self.inner.width() {
            return Err(value_err("index out of range"));
        }
        Ok(self.inner.get(band, row, col))
    }

    /// All samples of one band, row-major.
    fn band(&self, band: usize) -> PyResult<Vec<f64>> {
        if band >= self.inner.band_count() {
            return Err(value_err("band out of range"));
        }
        let (w, h) = (self.inner.width(), self.inner.height());
        Ok((0..h).flat_map(|r| (0..w).map(move |c| (r, c))).map(|(r, c)| self.inner.get(band, r, c)).collect())
    }

    fn __repr__(&self) -> String {
        format!(
            "Raster({}x{}x{}, {:?}, EPSG:{})",
            self.inner.width(),
            self.inner.height(),
            self.inner.band_count(),
            self.inner.sample_type(),
            self.inner.crs().epsg()
        )
    }

    fn __eq__(&self, other: &Self) -> bool {
        self.inner == other.inner
    }
}

/// Labelled band values, one row per sample point.
#[pyclass(name = "SampleTable", module = "canopy_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PySampleTable {
    inner: SampleTable,
}

#[pymethods]
impl PySampleTable {
    #[staticmethod]
    fn from_csv(data: &[u8]) -> PyResult<Self> {
        SampleTable::from_csv(data).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_csv(&self) -> String {
        String::from_utf8(self.inner.to_csv()).expect("table CSV is UTF-8")
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn band_count(&self) -> usize {
        self.inner.band_count()
    }

    #[getter]
    fn labels(&self) -> Vec<u32> {
        self.inner.labels().into_iter().map(u32::from).collect()
    }

    #[getter]
    fn features(&self) -> Vec<Vec<f64>> {
        self.inner.rows().iter().map(|r| r.features.clone()).collect()
    }

    fn label_counts(&self) -> BTreeMap<u8, usize> {
        self.inner.label_counts()
    }

    /// Returns (train, test).
    #[pyo3(signature = (train_fraction = 0.8, seed = 42, stratified = true))]
    fn split(&self, train_fraction: f64, seed: u64, stratified: bool) -> PyResult<(Self, Self)> {
        let (a, b) = stratified_split(&self.inner, &SplitSpec { train_fraction, seed, stratified }).map_err(value_err)?;
        Ok((Self { inner: a }, Self { inner: b }))
    }
}

/// A trained random forest or SVM.
#[pyclass(name = "Model", module = "canopy_py", frozen, skip_from_py_object)]
#[derive(Clone)]
pub struct PyModel {
    inner: TrainedModel,
}

#[pymethods]
impl PyModel {
    #[staticmethod]
    fn from_bytes(data: &[u8]) -> PyResult<Self> {
        TrainedModel::from_bytes(data).map(|inner| Self { inner }).map_err(value_err)
    }

    fn to_bytes<'py>(&self, py: Python<'py>) -> Bound<'py, PyBytes> {
        PyBytes::new(py, &self.inner.to_bytes())
    }

    #[getter]
    fn digest(&self) -> String {
        self.inner.digest().to_string()
    }

    #[getter]
    fn classes(&self) -> Vec<u32> {
        self.inner.classes().iter().map(|&c| u32::from(c)).collect()
    }

    #[getter]
    fn algorithm(&self) -> &'static str {
        match self.inner {
            TrainedModel::Rf(_) => "rf",
            TrainedModel::Svm(_) => "svm",
        }
    }

    fn predict(&self, features: Vec<f64>) -> PyResult<u8> {
        self.inner.predict(&features).map_err(value_err)
    }

    fn predict_many(&self, rows: Vec<Vec<f64>>) -> PyResult<Vec<u32>> {
        rows.iter().map(|r| self.inner.predict(r).map(u32::from)).collect::<Result<_, _>>().map_err(value_err)
    }

    /// Label map with nodata 0, tagged with this model's digest.
    #[pyo3(signature = (raster, workers = 1))]
    fn classify(&self, py: Python<'_>, raster: &PyRaster, workers: usize) -> PyResult<PyRaster> {
        let labels = py.detach(|| classify_raster(&self.inner, &raster.inner, workers)).map_err(value_err)?;
        let labels = labels.with_description(Some(format!("classified by model {}", self.inner.digest())));
        Ok(PyRaster { inner: labels })
    }

    fn __repr__(&self) -> String {
        format!("Model({}, classes={:?})", self.algorithm(), self.inner.classes())
    }
}

#[pyfunction]
#[pyo3(signature = (
    table, algorithm = "rf", seed = 42, workers = 1, n_trees = 100, mtry = None, max_depth = 25,
    min_leaf = 5, c = 1.0, gamma = None, tolerance = 1e-3, max_passes = 10
))]
#[allow(clippy::too_many_arguments)]
fn train(
    py: Python<'_>,
    table: &PySampleTable,
    algorithm: &str,
    seed: u64,
    workers: usize,
    n_trees: usize,
    mtry: Option<usize>,
    max_depth: usize,
    min_leaf: usize,
    c: f64,
    gamma: Option<f64>,
    tolerance: f64,
    max_passes: usize,
) -> PyResult<PyModel> {
    let cfg = TrainConfig {
        algorithm: algorithm.parse::<Algorithm>().map_err(value_err)?,
        rf: ForestParams { n_trees, mtry, max_depth, min_leaf },
        svm: SvmParams { c, gamma, tolerance, max_passes },
        seed,
    };
    let model = py.detach(|| canopy::classify::train(&table.inner, &cfg, workers)).map_err(value_err)?;
    Ok(PyModel { inner: model })
}

/// Band values under each labelled point (GeoJSON or CSV bytes, same CRS as
/// the raster). Returns (table, skipped point indices).
#[pyfunction]
#[pyo3(signature = (raster, points, format = "geojson"))]
fn extract(raster: &PyRaster, points: &[u8], format: &str) -> PyResult<(PySampleTable, Vec<usize>)> {
    let fmt: PointFormat = format.parse().map_err(value_err)?;
    let ps = read_points(points, fmt).map_err(value_err)?;
    let ex = extract_pixel_values(&raster.inner, &ps).map_err(value_err)?;
    let mut skipped: Vec<usize> = ex.skipped.outside.iter().chain(&ex.skipped.nodata).copied().collect();
    skipped.sort_unstable();
    Ok((PySampleTable { inner: ex.table }, skipped))
}

/// Reprojects a GeoJSON point file and returns GeoJSON bytes.
#[pyfunction]
fn reproject_points_geojson<'py>(py: Python<'py>, points: &[u8], target_epsg: u32) -> PyResult<Bound<'py, PyBytes>> {
    let ps = read_points(points, PointFormat::GeoJson).map_err(value_err)?;
    let target = CrsId::from_epsg(target_epsg).map_err(value_err)?;
    let out = reproject_points(&ps, target).map_err(value_err)?;
    Ok(PyBytes::new(py, &write_points(&out, PointFormat::GeoJson).map_err(runtime_err)?))
}

#[pyfunction]
fn utm_zone(lon: f64, lat: f64) -> PyResult<(u8, bool)> {
    let (zone, h) = geo::utm_zone_for(GeoPoint::new(lon, lat)).map_err(value_err)?;
    Ok((zone, h == Hemisphere::South))
}

/// Forward projection; the hemisphere follows the latitude sign.
#[pyfunction]
#[pyo3(signature = (lon, lat, zone = None))]
fn geo_to_utm(lon: f64, lat: f64, zone: Option<u8>) -> PyResult<(f64, f64, u8, bool)> {
    let p = GeoPoint::new(lon, lat);
    let zone = match zone {
        Some(z) => z,
        None => geo::utm_zone_for(p).map_err(value_err)?.0,
    };
    let out = geo::geo_to_utm(p, zone).map_err(value_err)?;
    Ok((out.easting, out.northing, out.zone, out.hemisphere == Hemisphere::South))
}

#[pyfunction]
#[pyo3(signature = (easting, northing, zone, south = false))]
fn utm_to_geo(easting: f64, northing: f64, zone: u8, south: bool) -> PyResult<(f64, f64)> {
    let hemisphere = if south { Hemisphere::South } else { Hemisphere::North };
    let g = geo::utm_to_geo(ProjPoint { easting, northing, zone, hemisphere }).map_err(value_err)?;
    Ok((g.lon, g.lat))
}

/// Returns (epsg, ambiguous, first_zone, last_zone).
#[pyfunction]
fn suggest_crs(min_lon: f64, min_lat: f64, max_lon: f64, max_lat: f64) -> PyResult<(u32, bool, u8, u8)> {
    let s = geo::suggest_crs(GeoBox::new(min_lon, min_lat, max_lon, max_lat)).map_err(value_err)?;
    Ok((s.crs.epsg(), s.ambiguous, s.first_zone, s.last_zone))
}

/// Confusion matrix, row-normalised ratios and accuracy figures as a dict.
#[pyfunction]
#[pyo3(signature = (truth, predicted, scheme = None))]
fn evaluate<'py>(
    py: Python<'py>,
    truth: Vec<u8>,
    predicted: Vec<u8>,
    scheme: Option<Vec<(String, u8)>>,
) -> PyResult<Bound<'py, PyAny>> {
    let scheme = scheme_from(scheme)?;
    let cm = confusion_matrix(&truth, &predicted, &scheme).map_err(value_err)?;
    let report = metrics(&cm).map_err(value_err)?;
    let doc = serde_json::json!({ "matrix": cm, "normalized": normalize(&cm), "metrics": report });
    to_py(py, &doc)
}

/// Annual removal for a canopy area, as an exact decimal string.
#[pyfunction]
#[pyo3(signature = (canopy_area_ha, removal_factor = "2.9"))]
fn assess(canopy_area_ha: &str, removal_factor: &str) -> PyResult<String> {
    let cfg = CarbonConfig { removal_factor: removal_factor.parse().map_err(value_err)?, ..CarbonConfig::default() };
    let area = canopy_area_ha.parse().map_err(value_err)?;
    Ok(assess_carbon(area, &cfg).map_err(value_err)?.normalize().to_string())
}

#[pyfunction]
#[pyo3(signature = (tonnes, vehicle_factor = "4.6"))]
fn vehicles(tonnes: &str, vehicle_factor: &str) -> PyResult<u64> {
    let cfg = CarbonConfig { vehicle_factor: vehicle_factor.parse().map_err(value_err)?, ..CarbonConfig::default() };
    cfg.validate().map_err(value_err)?;
    Ok(vehicle_equivalent(tonnes.parse().map_err(value_err)?, &cfg))
}

/// Full carbon report for a label map. `boundary` is GeoJSON bytes.
#[pyfunction]
#[pyo3(signature = (labels, removal_factor = "2.9", tree_label = 1, vehicle_factor = "4.6", boundary = None, scheme = None, workers = 1))]
#[allow(clippy::too_many_arguments)]
fn carbon<'py>(
    py: Python<'py>,
    labels: &PyRaster,
    removal_factor: &str,
    tree_label: u8,
    vehicle_factor: &str,
    boundary: Option<&[u8]>,
    scheme: Option<Vec<(String, u8)>>,
    workers: usize,
) -> PyResult<Bound<'py, PyAny>> {
    let cfg = CarbonConfig {
        removal_factor: removal_factor.parse().map_err(value_err)?,
        vehicle_factor: vehicle_factor.parse().map_err(value_err)?,
        tree_label,
        ..CarbonConfig::default()
    };
    let poly = match boundary {
        None => None,
        Some(bytes) => {
            let (poly, crs) = read_boundary(bytes).map_err(value_err)?;
            Some(reproject_polygon(&poly, crs, labels.inner.crs()).map_err(value_err)?)
        }
    };
    let report =
        carbon_report(&labels.inner, &scheme_from(scheme)?, &cfg, poly.as_ref(), workers).map_err(value_err)?;
    serialize_to_py(py, &report)
}

/// PNG bytes of a label map in the category palette.
#[pyfunction]
#[pyo3(signature = (labels, scheme = None))]
fn render_png<'py>(py: Python<'py>, labels: &PyRaster, scheme: Option<Vec<(String, u8)>>) -> PyResult<Bound<'py, PyBytes>> {
    let map = render_classmap(&labels.inner, &scheme_from(scheme)?).map_err(value_err)?;
    Ok(PyBytes::new(py, &map.png))
}

/// Returns (imagery, truth).
#[pyfunction]
#[pyo3(signature = (size = 256, seed = 42, sigma = None))]
fn synth_scene(size: usize, seed: u64, sigma: Option<f64>) -> PyResult<(PyRaster, PyRaster)> {
    let mut spec = SceneSpec::square(size, seed);
    if let Some(s) = sigma {
        spec = spec.with_sigma(s);
    }
    let (img, truth) = generate_scene(&spec).map_err(value_err)?;
    Ok((PyRaster { inner: img }, PyRaster { inner: truth }))
}

/// Distinct labelled pixel centres drawn from a truth map, as GeoJSON bytes
/// in the truth CRS.
#[pyfunction]
#[pyo3(signature = (truth, per_category = 1000, seed = 42))]
fn sample_points<'py>(py: Python<'py>, truth: &PyRaster, per_category: usize, seed: u64) -> PyResult<Bound<'py, PyBytes>> {
    let ps = sample_points_from_truth(&truth.inner, &LabelScheme::default(), per_category, seed).map_err(value_err)?;
    Ok(PyBytes::new(py, &write_points(&ps, PointFormat::GeoJson).map_err(runtime_err)?))
}

#[pyfunction]
fn reference_workflow() -> &'static str {
    wf::reference_workflow_json()
}

/// Issue messages; empty when the workflow is valid.
#[pyfunction]
fn validate_workflow(workflow_json: &str) -> PyResult<Vec<String>> {
    let ws = WorkflowSpec::from_json(workflow_json.as_bytes()).map_err(value_err)?;
    Ok(wf::validate(&ws).issues.iter().map(|i| i.to_string()).collect())
}

/// Runs a workflow against a catalog directory. Returns a dict with
/// `outputs` (name -> bytes), `cache_hits`, `executed` and `provenance`
/// (JSON lines).
#[pyfunction]
#[pyo3(signature = (workflow_json, inputs, catalog_dir, seed = 42, workers = 1))]
fn run_workflow<'py>(
    py: Python<'py>,
    workflow_json: &str,
    inputs: BTreeMap<String, Vec<u8>>,
    catalog_dir: std::path::PathBuf,
    seed: u64,
    workers: usize,
) -> PyResult<Bound<'py, PyDict>> {
    let ws = WorkflowSpec::from_json(workflow_json.as_bytes()).map_err(value_err)?;
    let report = wf::validate(&ws);
    if !report.is_valid() {
        return Err(value_err(report));
    }
    let catalog = DataCatalog::open(&catalog_dir).map_err(runtime_err)?;
    let opts = ExecOptions { workers, seed };
    let out = py.detach(|| wf::execute(&ws, &inputs, &catalog, &opts)).map_err(|e| {
        let at = e.component.map(|c| format!("component {c}: ")).unwrap_or_default();
        runtime_err(format!("{at}{}", e.message))
    })?;
    let result = PyDict::new(py);
    let outputs = PyDict::new(py);
    for o in &out.outputs {
        outputs.set_item(&o.name, PyBytes::new(py, &o.bytes))?;
    }
    result.set_item("outputs", outputs)?;
    result.set_item("cache_hits", out.cache_hits())?;
    result.set_item("executed", out.executed().into_iter().collect::<Vec<_>>())?;
    result.set_item("provenance", wf::provenance_jsonl(&out.provenance))?;
    Ok(result)
}

/// Adds every class and function to `m`.
pub fn register(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyRaster>()?;
    m.add_class::<PySampleTable>()?;
    m.add_class::<PyModel>()?;
    m.add_function(wrap_pyfunction!(train, m)?)?;
    m.add_function(wrap_pyfunction!(extract, m)?)?;
    m.add_function(wrap_pyfunction!(reproject_points_geojson, m)?)?;
    m.add_function(wrap_pyfunction!(utm_zone, m)?)?;
    m.add_function(wrap_pyfunction!(geo_to_utm, m)?)?;
    m.add_function(wrap_pyfunction!(utm_to_geo, m)?)?;
    m.add_function(wrap_pyfunction!(suggest_crs, m)?)?;
    m.add_function(wrap_pyfunction!(evaluate, m)?)?;
    m.add_function(wrap_pyfunction!(assess, m)?)?;
    m.add_function(wrap_pyfunction!(vehicles, m)?)?;
    m.add_function(wrap_pyfunction!(carbon, m)?)?;
    m.add_function(wrap_pyfunction!(render_png, m)?)?;
    m.add_function(wrap_pyfunction!(synth_scene, m)?)?;
    m.add_function(wrap_pyfunction!(sample_points, m)?)?;
    m.add_function(wrap_pyfunction!(reference_workflow, m)?)?;
    m.add_function(wrap_pyfunction!(validate_workflow, m)?)?;
    m.add_function(wrap_pyfunction!(run_workflow, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}

#[pymodule]
fn canopy_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    register(m)
}
