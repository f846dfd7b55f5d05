//! Component kinds: typed ports, parameter schemas and implementations.

use std::collections::BTreeMap;

use rust_decimal::Decimal;
use serde::Serialize;
use serde_json::{json, Value};

use super::{Artifact, DataType};
use crate::carbon::{carbon_report, CarbonConfig};
use crate::classify::{classify_raster, train, Algorithm, ForestParams, SvmParams, TrainConfig};
use crate::evaluate::{confusion_matrix, metrics, normalize};
use crate::geodata::{
    clip_points, clip_raster, read_boundary, read_geotiff, read_points, recode_attributes, render_classmap,
    reproject_points, reproject_polygon, reproject_raster, Bounds, LabelScheme, PointFormat, PointSet, Polygon,
    RasterGrid, Region, Resampling,
};
use crate::geodesy::CrsId;
use crate::sampling::{extract_pixel_values, stratified_split, SampleTable, SplitSpec};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Preparation,
    Mapping,
    Carbon,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PortSpec {
    pub name: &'static str,
    pub ty: DataType,
    pub optional: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ParamKind {
    Int,
    Float,
    Bool,
    Text,
    /// EPSG code.
    Crs,
    /// `[min_x, min_y, max_x, max_y]`.
    Bbox,
    /// Object mapping category names to label codes.
    Scheme,
    /// Exact decimal, given as a JSON number or string.
    Decimal,
}

impl ParamKind {
    /// `null` is accepted for every kind and means "unset".
    pub fn check(self, v: &Value) -> Result<(), String> {
        if v.is_null() {
            return Ok(());
        }
        let ok = match self {
            ParamKind::Int => v.as_u64().is_some(),
            ParamKind::Float => v.as_f64().is_some_and(f64::is_finite),
            ParamKind::Bool => v.is_boolean(),
            ParamKind::Text => v.is_string(),
            ParamKind::Crs => {
                return match v.as_u64().map(|c| CrsId::from_epsg(c as u32)) {
                    Some(Ok(_)) => Ok(()),
                    Some(Err(e)) => Err(e.to_string()),
                    None => Err("expected an EPSG code".into()),
                }
            }
            ParamKind::Bbox => v
                .as_array()
                .is_some_and(|a| a.len() == 4 && a.iter().all(|x| x.as_f64().is_some_and(f64::is_finite))),
            ParamKind::Scheme => return scheme_from(v).map(|_| ()),
            ParamKind::Decimal => return decimal_from(v).map(|_| ()),
        };
        if ok {
            Ok(())
        } else {
            Err(format!("expected {}", self.describe()))
        }
    }

    fn describe(self) -> &'static str {
        match self {
            ParamKind::Int => "a non-negative integer",
            ParamKind::Float => "a finite number",
            ParamKind::Bool => "a boolean",
            ParamKind::Text => "a string",
            ParamKind::Crs => "an EPSG code",
            ParamKind::Bbox => "[min_x, min_y, max_x, max_y]",
            ParamKind::Scheme => "an object of category name to label code",
            ParamKind::Decimal => "a decimal number",
        }
    }
}

fn scheme_from(v: &Value) -> Result<LabelScheme, String> {
    let obj = v.as_object().ok_or("expected an object of category name to label code")?;
    let mut entries = Vec::with_capacity(obj.len());
    for (name, code) in obj {
        let code = code.as_u64().filter(|c| *c <= 255).ok_or_else(|| format!("label code for {name:?} is not 0..=255"))?;
        entries.push((name.clone(), code as u8));
    }
    // JSON objects are unordered; keep the scheme in code order.
    entries.sort_by_key(|(_, c)| *c);
    LabelScheme::new(entries).map_err(|e| e.to_string())
}

fn decimal_from(v: &Value) -> Result<Decimal, String> {
    let text = match v {
        Value::Number(n) => n.to_string(),
        Value::String(s) => s.clone(),
        _ => return Err("expected a decimal number".into()),
    };
    text.parse::<Decimal>()
        .or_else(|_| Decimal::from_scientific(&text))
        .map_err(|e| format!("{text:?} is not a decimal: {e}"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum ParamDefault {
    Unset,
    Int(u64),
    Float(f64),
    Bool(bool),
    Text(&'static str),
    /// The run's seed.
    Seed,
    DefaultScheme,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSpec {
    pub name: &'static str,
    pub kind: ParamKind,
    pub default: ParamDefault,
}

impl ParamSpec {
    pub(crate) fn default_value(&self, seed: u64) -> Value {
        match self.default {
            ParamDefault::Unset => Value::Null,
            ParamDefault::Int(i) => json!(i),
            ParamDefault::Float(f) => json!(f),
            ParamDefault::Bool(b) => json!(b),
            ParamDefault::Text(s) => json!(s),
            ParamDefault::Seed => json!(seed),
            ParamDefault::DefaultScheme => scheme_value(&LabelScheme::default()),
        }
    }
}

fn scheme_value(s: &LabelScheme) -> Value {
    Value::Object(s.entries().iter().map(|(n, c)| (n.clone(), json!(c))).collect())
}

pub(crate) type Outputs = Vec<(&'static str, Artifact)>;

pub(crate) struct RunCtx<'a> {
    pub params: &'a BTreeMap<String, Value>,
    pub inputs: BTreeMap<&'static str, &'a Artifact>,
    pub workers: usize,
}

impl RunCtx<'_> {
    fn param(&self, name: &str) -> &Value {
        self.params.get(name).unwrap_or(&Value::Null)
    }

    fn int(&self, name: &str) -> Result<Option<u64>, String> {
        let v = self.param(name);
        if v.is_null() {
            return Ok(None);
        }
        v.as_u64().map(Some).ok_or_else(|| format!("parameter {name} must be an integer"))
    }

    fn float(&self, name: &str) -> Result<Option<f64>, String> {
        let v = self.param(name);
        if v.is_null() {
            return Ok(None);
        }
        v.as_f64().map(Some).ok_or_else(|| format!("parameter {name} must be a number"))
    }

    fn required<T>(&self, name: &str, v: Option<T>) -> Result<T, String> {
        v.ok_or_else(|| format!("parameter {name} is unset"))
    }

    fn crs(&self, name: &str) -> Result<Option<CrsId>, String> {
        self.int(name)?.map(|c| CrsId::from_epsg(c as u32).map_err(|e| e.to_string())).transpose()
    }

    fn scheme(&self) -> Result<LabelScheme, String> {
        let v = self.param("scheme");
        if v.is_null() {
            return Ok(LabelScheme::default());
        }
        scheme_from(v)
    }

    fn decimal(&self, name: &str) -> Result<Decimal, String> {
        decimal_from(self.param(name)).map_err(|e| format!("parameter {name}: {e}"))
    }

    fn input(&self, port: &str) -> Option<&Artifact> {
        self.inputs.get(port).copied()
    }

    fn raster(&self, port: &str) -> Result<&RasterGrid, String> {
        match self.input(port) {
            Some(Artifact::Raster(r)) => Ok(r),
            _ => Err(format!("input {port} is not a raster")),
        }
    }

    fn points(&self, port: &str) -> Result<&PointSet, String> {
        match self.input(port) {
            Some(Artifact::Points(p)) => Ok(p),
            _ => Err(format!("input {port} is not a point set")),
        }
    }

    fn table(&self, port: &str) -> Result<&SampleTable, String> {
        match self.input(port) {
            Some(Artifact::Table(t)) => Ok(t),
            _ => Err(format!("input {port} is not a table")),
        }
    }

    fn file(&self, port: &str) -> Result<Option<&[u8]>, String> {
        match self.input(port) {
            None => Ok(None),
            Some(Artifact::File(b)) => Ok(Some(b)),
            Some(_) => Err(format!("input {port} is not a file")),
        }
    }

    /// Optional boundary polygon, reprojected into `crs`.
    fn boundary(&self, crs: CrsId) -> Result<Option<Polygon>, String> {
        let Some(bytes) = self.file("boundary")? else { return Ok(None) };
        let (poly, from) = read_boundary(bytes).map_err(|e| e.to_string())?;
        reproject_polygon(&poly, from, crs).map(Some).map_err(|e| e.to_string())
    }
}

pub struct KindSpec {
    pub name: &'static str,
    pub stage: Stage,
    pub summary: &'static str,
    pub inputs: &'static [PortSpec],
    pub outputs: &'static [PortSpec],
    pub params: &'static [ParamSpec],
    pub(crate) run: fn(&RunCtx) -> Result<Outputs, String>,
}

impl std::fmt::Debug for KindSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("KindSpec").field("name", &self.name).finish_non_exhaustive()
    }
}

const fn port(name: &'static str, ty: DataType) -> PortSpec {
    PortSpec { name, ty, optional: false }
}

const fn optional(name: &'static str, ty: DataType) -> PortSpec {
    PortSpec { name, ty, optional: true }
}

const fn param(name: &'static str, kind: ParamKind, default: ParamDefault) -> ParamSpec {
    ParamSpec { name, kind, default }
}

use DataType as T;
use ParamDefault as D;
use ParamKind as P;

static KINDS: &[KindSpec] = &[
    KindSpec {
        name: "read_points",
        stage: Stage::Preparation,
        summary: "parse a CSV or GeoJSON point file",
        inputs: &[port("source", T::File)],
        outputs: &[port("points", T::Points)],
        params: &[param("format", P::Text, D::Text("geojson"))],
        run: run_read_points,
    },
    KindSpec {
        name: "reproject_points",
        stage: Stage::Preparation,
        summary: "transform point coordinates into the target CRS",
        inputs: &[port("points", T::Points)],
        outputs: &[port("points", T::Points)],
        params: &[param("target_crs", P::Crs, D::Unset)],
        run: run_reproject_points,
    },
    KindSpec {
        name: "recode",
        stage: Stage::Preparation,
        summary: "map category names to integer label codes",
        inputs: &[port("points", T::Points)],
        outputs: &[port("points", T::Points)],
        params: &[param("scheme", P::Scheme, D::DefaultScheme)],
        run: run_recode,
    },
    KindSpec {
        name: "clip_points",
        stage: Stage::Preparation,
        summary: "keep points inside the raster extent and optional boundary",
        inputs: &[port("points", T::Points), port("extent", T::Raster), optional("boundary", T::File)],
        outputs: &[port("points", T::Points)],
        params: &[],
        run: run_clip_points,
    },
    KindSpec {
        name: "read_raster",
        stage: Stage::Preparation,
        summary: "parse a GeoTIFF",
        inputs: &[port("source", T::File)],
        outputs: &[port("raster", T::Raster)],
        params: &[],
        run: run_read_raster,
    },
    KindSpec {
        name: "assign_crs",
        stage: Stage::Preparation,
        summary: "declare the raster CRS without resampling (unset keeps the file's)",
        inputs: &[port("raster", T::Raster)],
        outputs: &[port("raster", T::Raster)],
        params: &[param("crs", P::Crs, D::Unset)],
        run: run_assign_crs,
    },
    KindSpec {
        name: "reproject_raster",
        stage: Stage::Preparation,
        summary: "resample the raster into the target CRS (nearest neighbour)",
        inputs: &[port("raster", T::Raster)],
        outputs: &[port("raster", T::Raster)],
        params: &[param("target_crs", P::Crs, D::Unset)],
        run: run_reproject_raster,
    },
    KindSpec {
        name: "clip_raster",
        stage: Stage::Preparation,
        summary: "subset the raster to a bbox and/or boundary polygon",
        inputs: &[port("raster", T::Raster), optional("boundary", T::File)],
        outputs: &[port("raster", T::Raster)],
        params: &[param("bbox", P::Bbox, D::Unset)],
        run: run_clip_raster,
    },
    KindSpec {
        name: "extract",
        stage: Stage::Mapping,
        summary: "read band values under each labelled point",
        inputs: &[port("raster", T::Raster), port("points", T::Points)],
        outputs: &[port("table", T::Table)],
        params: &[],
        run: run_extract,
    },
    KindSpec {
        name: "split_train",
        stage: Stage::Mapping,
        summary: "stratified train/test split, then train a classifier",
        inputs: &[port("table", T::Table)],
        outputs: &[port("model", T::Model), port("test", T::Table)],
        params: &[
            param("train_fraction", P::Float, D::Float(0.8)),
            param("stratified", P::Bool, D::Bool(true)),
            param("split_seed", P::Int, D::Seed),
            param("algorithm", P::Text, D::Text("rf")),
            param("n_trees", P::Int, D::Int(100)),
            param("mtry", P::Int, D::Unset),
            param("max_depth", P::Int, D::Int(25)),
            param("min_leaf", P::Int, D::Int(5)),
            param("c", P::Float, D::Float(1.0)),
            param("gamma", P::Float, D::Unset),
            param("tolerance", P::Float, D::Float(1e-3)),
            param("max_passes", P::Int, D::Int(10)),
            param("seed", P::Int, D::Seed),
        ],
        run: run_split_train,
    },
    KindSpec {
        name: "classify",
        stage: Stage::Mapping,
        summary: "label every raster pixel with the model",
        inputs: &[port("model", T::Model), port("raster", T::Raster)],
        outputs: &[port("labels", T::Raster)],
        params: &[],
        run: run_classify,
    },
    KindSpec {
        name: "render",
        stage: Stage::Mapping,
        summary: "colour the label map as a PNG",
        inputs: &[port("labels", T::Raster)],
        outputs: &[port("png", T::File)],
        params: &[param("scheme", P::Scheme, D::DefaultScheme)],
        run: run_render,
    },
    KindSpec {
        name: "evaluate",
        stage: Stage::Mapping,
        summary: "confusion matrix and accuracy metrics on the test table",
        inputs: &[port("model", T::Model), port("test", T::Table)],
        outputs: &[port("matrix", T::Matrix), port("metrics", T::Report)],
        params: &[param("scheme", P::Scheme, D::DefaultScheme)],
        run: run_evaluate,
    },
    KindSpec {
        name: "carbon",
        stage: Stage::Carbon,
        summary: "canopy area and annual carbon removal",
        inputs: &[port("labels", T::Raster), optional("boundary", T::File)],
        outputs: &[port("report", T::Report)],
        params: &[
            param("removal_factor", P::Decimal, D::Text("2.9")),
            param("tree_label", P::Int, D::Int(1)),
            param("vehicle_factor", P::Decimal, D::Text("4.6")),
            param("scheme", P::Scheme, D::DefaultScheme),
        ],
        run: run_carbon,
    },
];

pub fn kinds() -> &'static [KindSpec] {
    KINDS
}

pub fn kind(name: &str) -> Option<&'static KindSpec> {
    KINDS.iter().find(|k| k.name == name)
}

fn run_read_points(ctx: &RunCtx) -> Result<Outputs, String> {
    let format: PointFormat = ctx.param("format").as_str().unwrap_or("geojson").parse()?;
    let bytes = ctx.file("source")?.ok_or("missing source")?;
    let ps = read_points(bytes, format).map_err(|e| e.to_string())?;
    Ok(vec![("points", Artifact::Points(ps))])
}

fn run_reproject_points(ctx: &RunCtx) -> Result<Outputs, String> {
    let target = ctx.required("target_crs", ctx.crs("target_crs")?)?;
    let ps = reproject_points(ctx.points("points")?, target).map_err(|e| e.to_string())?;
    Ok(vec![("points", Artifact::Points(ps))])
}

fn run_recode(ctx: &RunCtx) -> Result<Outputs, String> {
    let ps = recode_attributes(ctx.points("points")?, &ctx.scheme()?).map_err(|e| e.to_string())?;
    Ok(vec![("points", Artifact::Points(ps))])
}

fn run_clip_points(ctx: &RunCtx) -> Result<Outputs, String> {
    let ps = ctx.points("points")?;
    let extent = ctx.raster("extent")?;
    if extent.crs() != ps.crs {
        return Err(format!("points are in {}, extent raster in {}", ps.crs, extent.crs()));
    }
    let mut out = clip_points(ps, &extent.bounds().to_polygon());
    if let Some(poly) = ctx.boundary(ps.crs)? {
        out = clip_points(&out, &poly);
    }
    Ok(vec![("points", Artifact::Points(out))])
}

fn run_read_raster(ctx: &RunCtx) -> Result<Outputs, String> {
    let bytes = ctx.file("source")?.ok_or("missing source")?;
    let grid = read_geotiff(bytes).map_err(|e| e.to_string())?;
    Ok(vec![("raster", Artifact::Raster(grid))])
}

fn run_assign_crs(ctx: &RunCtx) -> Result<Outputs, String> {
    let grid = ctx.raster("raster")?.clone();
    let grid = match ctx.crs("crs")? {
        Some(c) => grid.with_crs(c),
        None => grid,
    };
    Ok(vec![("raster", Artifact::Raster(grid))])
}

fn run_reproject_raster(ctx: &RunCtx) -> Result<Outputs, String> {
    let target = ctx.required("target_crs", ctx.crs("target_crs")?)?;
    let grid = reproject_raster(ctx.raster("raster")?, target, Resampling::Nearest, ctx.workers).map_err(|e| e.to_string())?;
    Ok(vec![("raster", Artifact::Raster(grid))])
}

fn run_clip_raster(ctx: &RunCtx) -> Result<Outputs, String> {
    let mut grid = ctx.raster("raster")?.clone();
    if let Some(b) = ctx.param("bbox").as_array() {
        let v: Vec<f64> = b.iter().filter_map(Value::as_f64).collect();
        let region = Region::Bbox(Bounds::new(v[0], v[1], v[2], v[3]));
        grid = clip_raster(&grid, &region).map_err(|e| e.to_string())?;
    }
    if let Some(poly) = ctx.boundary(grid.crs())? {
        grid = clip_raster(&grid, &Region::Polygon(poly)).map_err(|e| e.to_string())?;
    }
    Ok(vec![("raster", Artifact::Raster(grid))])
}

fn run_extract(ctx: &RunCtx) -> Result<Outputs, String> {
    let ex = extract_pixel_values(ctx.raster("raster")?, ctx.points("points")?).map_err(|e| e.to_string())?;
    Ok(vec![("table", Artifact::Table(ex.table))])
}

fn run_split_train(ctx: &RunCtx) -> Result<Outputs, String> {
    let split = SplitSpec {
        train_fraction: ctx.required("train_fraction", ctx.float("train_fraction")?)?,
        seed: ctx.required("split_seed", ctx.int("split_seed")?)?,
        stratified: ctx.param("stratified").as_bool().unwrap_or(true),
    };
    let (train_table, test_table) = stratified_split(ctx.table("table")?, &split).map_err(|e| e.to_string())?;
    let usize_of = |name: &str| -> Result<Option<usize>, String> { Ok(ctx.int(name)?.map(|v| v as usize)) };
    let cfg = TrainConfig {
        algorithm: ctx.param("algorithm").as_str().unwrap_or("rf").parse::<Algorithm>()?,
        rf: ForestParams {
            n_trees: ctx.required("n_trees", usize_of("n_trees")?)?,
            mtry: usize_of("mtry")?,
            max_depth: ctx.required("max_depth", usize_of("max_depth")?)?,
            min_leaf: ctx.required("min_leaf", usize_of("min_leaf")?)?,
        },
        svm: SvmParams {
            c: ctx.required("c", ctx.float("c")?)?,
            gamma: ctx.float("gamma")?,
            tolerance: ctx.required("tolerance", ctx.float("tolerance")?)?,
            max_passes: ctx.required("max_passes", usize_of("max_passes")?)?,
        },
        seed: ctx.required("seed", ctx.int("seed")?)?,
    };
    let model = train(&train_table, &cfg, ctx.workers).map_err(|e| e.to_string())?;
    Ok(vec![("model", Artifact::Model(model)), ("test", Artifact::Table(test_table))])
}

fn model<'a>(ctx: &'a RunCtx) -> Result<&'a crate::classify::TrainedModel, String> {
    match ctx.input("model") {
        Some(Artifact::Model(m)) => Ok(m),
        _ => Err("input model is not a model".into()),
    }
}

fn run_classify(ctx: &RunCtx) -> Result<Outputs, String> {
    let m = model(ctx)?;
    let labels = classify_raster(m, ctx.raster("raster")?, ctx.workers).map_err(|e| e.to_string())?;
    // Record which model produced the map.
    let labels = labels.with_description(Some(format!("classified by model {}", m.digest())));
    Ok(vec![("labels", Artifact::Raster(labels))])
}

fn run_render(ctx: &RunCtx) -> Result<Outputs, String> {
    let map = render_classmap(ctx.raster("labels")?, &ctx.scheme()?).map_err(|e| e.to_string())?;
    Ok(vec![("png", Artifact::File(map.png))])
}

fn run_evaluate(ctx: &RunCtx) -> Result<Outputs, String> {
    let m = model(ctx)?;
    let test = ctx.table("test")?;
    let predicted = test.rows().iter().map(|r| m.predict(&r.features)).collect::<Result<Vec<u8>, _>>().map_err(|e| e.to_string())?;
    let cm = confusion_matrix(&test.labels(), &predicted, &ctx.scheme()?).map_err(|e| e.to_string())?;
    let report = metrics(&cm).map_err(|e| e.to_string())?;
    let doc = json!({ "metrics": report, "normalized": normalize(&cm), "model": m.digest() });
    Ok(vec![("matrix", Artifact::Matrix(cm)), ("metrics", Artifact::Report(doc))])
}

fn run_carbon(ctx: &RunCtx) -> Result<Outputs, String> {
    let labels = ctx.raster("labels")?;
    let tree_label = ctx.required("tree_label", ctx.int("tree_label")?)?;
    let cfg = CarbonConfig {
        removal_factor: ctx.decimal("removal_factor")?,
        tree_label: u8::try_from(tree_label).map_err(|_| "tree_label must be 0..=255")?,
        vehicle_factor: ctx.decimal("vehicle_factor")?,
        ..CarbonConfig::default()
    };
    let boundary = ctx.boundary(labels.crs())?;
    let report = carbon_report(labels, &ctx.scheme()?, &cfg, boundary.as_ref(), ctx.workers).map_err(|e| e.to_string())?;
    let doc = serde_json::to_value(&report).map_err(|e| e.to_string())?;
    Ok(vec![("report", Artifact::Report(doc))])
}
