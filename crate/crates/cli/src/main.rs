use std::collections::BTreeMap;
use std::fmt::Display;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::str::FromStr;

use canopy::carbon::{carbon_report, CarbonConfig};
use canopy::classify::{classify_raster, train, Algorithm, ForestParams, SvmParams, TrainConfig, TrainedModel};
use canopy::evaluate::{confusion_matrix, metrics, normalize};
use canopy::geodata::{
    clip_points, clip_raster, raster_geo_extent, read_boundary, read_geotiff, read_points, recode_attributes,
    render_classmap, reproject_points, reproject_polygon, reproject_raster, write_boundary, write_geotiff, write_points,
    Bounds, LabelScheme, PointFormat, PointSet, Polygon, RasterGrid, Region, Resampling,
};
use canopy::geodesy::{suggest_crs, CrsId, GeoBox};
use canopy::sampling::{extract_pixel_values, stratified_split, SampleTable, SplitSpec};
use canopy::synthscene::{generate_scene, sample_points_from_truth, SceneSpec};
use canopy::workflow::{
    execute, provenance_jsonl, reference_workflow_json, suggest_parameters, validate, DataCatalog, ExecOptions,
    WorkflowSpec,
};
use clap::{Args, Parser, Subcommand};
use serde_json::json;

/// Urban tree canopy mapping and carbon accounting.
#[derive(Parser, Debug)]
#[command(name = "canopy", version)]
struct Cli {
    /// Seed for every random choice (splits, bootstraps, synthetic scenes).
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
    /// Worker threads for data-parallel raster stages. Output does not depend on it.
    #[arg(long, global = true, default_value_t = 1)]
    workers: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Convert sample points between CSV and GeoJSON.
    Convert(ConvertArgs),
    /// Reproject points (.csv/.geojson) or a raster (.tif) to another CRS.
    Reproject(ReprojectArgs),
    /// Clip points or a raster to a bounding box and/or boundary polygon.
    Clip(ClipArgs),
    /// Attach integer label codes to points from their category names.
    Recode(RecodeArgs),
    /// Read band values under each labelled point into a sample table.
    Extract(ExtractArgs),
    /// Split a sample table into train and test tables.
    Split(SplitArgs),
    /// Train a random forest or SVM on a sample table.
    Train(TrainArgs),
    /// Classify every pixel of a raster with a trained model.
    Classify(ClassifyArgs),
    /// Render a label map as a colour PNG.
    Render(RenderArgs),
    /// Confusion matrix and accuracy of a model on a test table.
    Evaluate(EvaluateArgs),
    /// Canopy area and annual carbon removal from a label map.
    Carbon(CarbonArgs),
    /// Suggest the UTM CRS for the extent of one or more inputs.
    SuggestCrs(SuggestArgs),
    /// Write a synthetic scene, truth map, sample points and workflow.
    Synth(SynthArgs),
    /// Execute a workflow with the content-addressed cache.
    Run(RunArgs),
    /// Check a workflow file without running it.
    Validate(ValidateArgs),
}

#[derive(Args, Debug)]
struct ConvertArgs {
    /// Input points (.csv, .geojson or .json).
    #[arg(long)]
    input: PathBuf,
    /// Output points; the format follows the extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ReprojectArgs {
    #[arg(long)]
    input: PathBuf,
    /// Target EPSG code (4326 or a WGS84 UTM zone, 326xx/327xx).
    #[arg(long)]
    target_crs: u32,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClipArgs {
    #[arg(long)]
    input: PathBuf,
    /// Box in the input CRS: min_x,min_y,max_x,max_y.
    #[arg(long)]
    bbox: Option<String>,
    /// Boundary polygon (GeoJSON); reprojected to the input CRS if needed.
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SchemeArg {
    /// Category codes as Name=code pairs, e.g. Trees=1,Grass=2,Impervious=3,Water=4.
    #[arg(long)]
    scheme: Option<String>,
}

#[derive(Args, Debug)]
struct RecodeArgs {
    #[arg(long)]
    input: PathBuf,
    #[command(flatten)]
    scheme: SchemeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ExtractArgs {
    /// Imagery GeoTIFF.
    #[arg(long)]
    raster: PathBuf,
    /// Labelled points in the raster CRS.
    #[arg(long)]
    points: PathBuf,
    /// Output sample table (CSV).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SplitArgs {
    #[arg(long)]
    table: PathBuf,
    #[arg(long, default_value_t = 0.8)]
    train_fraction: f64,
    /// Shuffle all rows together instead of per category.
    #[arg(long)]
    no_stratify: bool,
    #[arg(long)]
    train_out: PathBuf,
    #[arg(long)]
    test_out: PathBuf,
}

#[derive(Args, Debug)]
struct TrainArgs {
    /// Training sample table (CSV).
    #[arg(long)]
    table: PathBuf,
    /// rf or svm.
    #[arg(long, default_value = "rf")]
    algorithm: String,
    #[arg(long, default_value_t = 100)]
    n_trees: usize,
    /// Bands tried per split; defaults to floor(sqrt(bands)).
    #[arg(long)]
    mtry: Option<usize>,
    #[arg(long, default_value_t = 25)]
    max_depth: usize,
    #[arg(long, default_value_t = 5)]
    min_leaf: usize,
    /// SVM box constraint.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// RBF width; defaults to 1 / (bands * variance of scaled features).
    #[arg(long)]
    gamma: Option<f64>,
    #[arg(long, default_value_t = 1e-3)]
    tolerance: f64,
    #[arg(long, default_value_t = 10)]
    max_passes: usize,
    /// Model file (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ClassifyArgs {
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    raster: PathBuf,
    /// Label map GeoTIFF (u8, 0 = nodata).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RenderArgs {
    #[arg(long)]
    labels: PathBuf,
    #[command(flatten)]
    scheme: SchemeArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[arg(long)]
    model: PathBuf,
    /// Test sample table (CSV).
    #[arg(long)]
    table: PathBuf,
    #[command(flatten)]
    scheme: SchemeArg,
    /// Metrics report (JSON).
    #[arg(long)]
    out: PathBuf,
    /// Optional confusion matrix CSV.
    #[arg(long)]
    matrix_out: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct CarbonArgs {
    #[arg(long)]
    labels: PathBuf,
    /// Removal factor in t C per ha per year.
    #[arg(long, default_value = "2.9")]
    factor: String,
    /// Tonnes per passenger vehicle per year.
    #[arg(long, default_value = "4.6")]
    vehicle_factor: String,
    #[arg(long, default_value_t = 1)]
    tree_label: u8,
    /// City boundary; adds within-boundary figures.
    #[arg(long)]
    boundary: Option<PathBuf>,
    #[command(flatten)]
    scheme: SchemeArg,
    /// Report (JSON).
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct SuggestArgs {
    /// Points, raster or boundary files whose combined extent is used.
    #[arg(long = "input")]
    inputs: Vec<PathBuf>,
    /// Geographic box: min_lon,min_lat,max_lon,max_lat.
    #[arg(long)]
    bbox: Option<String>,
    /// Instead, list suggestions for every unset CRS parameter of this workflow.
    #[arg(long)]
    workflow: Option<PathBuf>,
}

#[derive(Args, Debug)]
struct SynthArgs {
    /// Scene width and height in pixels.
    #[arg(long, default_value_t = 256)]
    size: usize,
    #[arg(long, default_value_t = 1000)]
    points_per_category: usize,
    /// Override every band's noise standard deviation.
    #[arg(long)]
    sigma: Option<f64>,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct RunArgs {
    #[arg(long)]
    workflow: PathBuf,
    /// Cache directory.
    #[arg(long, env = "CANOPY_CATALOG", default_value = ".canopy-catalog")]
    catalog: PathBuf,
    /// Bind an external input to a file, overriding its path: id=path.
    #[arg(long = "input")]
    inputs: Vec<String>,
    /// Directory for declared outputs and provenance.jsonl.
    #[arg(long, default_value = "outputs")]
    out: PathBuf,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    #[arg(long)]
    workflow: PathBuf,
}

enum Failure {
    Invalid(String),
    Runtime(String),
}

type Outcome<T = ()> = Result<T, Failure>;

fn invalid(e: impl Display) -> Failure {
    Failure::Invalid(e.to_string())
}

fn runtime(e: impl Display) -> Failure {
    Failure::Runtime(e.to_string())
}

fn read(path: &Path) -> Outcome<Vec<u8>> {
    fs::read(path).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| runtime(format!("{}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn extension(path: &Path) -> String {
    path.extension().and_then(|e| e.to_str()).unwrap_or("").to_ascii_lowercase()
}

fn is_raster(path: &Path) -> bool {
    matches!(extension(path).as_str(), "tif" | "tiff")
}

fn point_format(path: &Path) -> Outcome<PointFormat> {
    match extension(path).as_str() {
        "csv" => Ok(PointFormat::Csv),
        "geojson" | "json" => Ok(PointFormat::GeoJson),
        _ => Err(invalid(format!("{}: expected a .csv, .geojson or .json points file", path.display()))),
    }
}

fn load_points(path: &Path) -> Outcome<PointSet> {
    read_points(&read(path)?, point_format(path)?).map_err(runtime)
}

fn save_points(path: &Path, ps: &PointSet) -> Outcome {
    write(path, &write_points(ps, point_format(path)?).map_err(runtime)?)
}

fn load_raster(path: &Path) -> Outcome<RasterGrid> {
    read_geotiff(&read(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn save_raster(path: &Path, grid: &RasterGrid) -> Outcome {
    write(path, &write_geotiff(grid).map_err(runtime)?)
}

fn load_table(path: &Path) -> Outcome<SampleTable> {
    SampleTable::from_csv(&read(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_model(path: &Path) -> Outcome<TrainedModel> {
    TrainedModel::from_bytes(&read(path)?).map_err(|e| runtime(format!("{}: {e}", path.display())))
}

fn load_boundary(path: &Path, target: CrsId) -> Outcome<Polygon> {
    let (poly, crs) = read_boundary(&read(path)?).map_err(runtime)?;
    reproject_polygon(&poly, crs, target).map_err(runtime)
}

fn crs(code: u32) -> Outcome<CrsId> {
    CrsId::from_epsg(code).map_err(invalid)
}

fn four_numbers(text: &str, what: &str) -> Outcome<[f64; 4]> {
    let v: Vec<f64> = text
        .split(',')
        .map(|s| f64::from_str(s.trim()))
        .collect::<Result<_, _>>()
        .map_err(|_| invalid(format!("{what} must be four comma-separated numbers")))?;
    let v: [f64; 4] = v.try_into().map_err(|_| invalid(format!("{what} must be four comma-separated numbers")))?;
    if v.iter().any(|x| !x.is_finite()) || v[0] >= v[2] || v[1] >= v[3] {
        return Err(invalid(format!("{what} must satisfy min < max on both axes")));
    }
    Ok(v)
}

impl SchemeArg {
    fn resolve(&self) -> Outcome<LabelScheme> {
        let Some(text) = &self.scheme else { return Ok(LabelScheme::default()) };
        let mut entries = Vec::new();
        for part in text.split(',') {
            let (name, code) = part
                .split_once('=')
                .ok_or_else(|| invalid(format!("scheme entry {part:?} is not Name=code")))?;
            let code: u8 = code.trim().parse().map_err(|_| invalid(format!("scheme code {code:?} is not 1..=255")))?;
            entries.push((name.trim().to_string(), code));
        }
        LabelScheme::new(entries).map_err(invalid)
    }
}

fn convert(a: &ConvertArgs) -> Outcome {
    let ps = load_points(&a.input)?;
    save_points(&a.out, &ps)?;
    println!("wrote {} points to {}", ps.len(), a.out.display());
    Ok(())
}

fn reproject(a: &ReprojectArgs, workers: usize) -> Outcome {
    let target = crs(a.target_crs)?;
    if is_raster(&a.input) {
        let grid = load_raster(&a.input)?;
        let out = reproject_raster(&grid, target, Resampling::Nearest, workers).map_err(runtime)?;
        save_raster(&a.out, &out)?;
        println!("reprojected {}x{} raster to EPSG:{}", out.width(), out.height(), target.epsg());
    } else {
        let ps = reproject_points(&load_points(&a.input)?, target).map_err(runtime)?;
        save_points(&a.out, &ps)?;
        println!("reprojected {} points to EPSG:{}", ps.len(), target.epsg());
    }
    Ok(())
}

fn clip(a: &ClipArgs) -> Outcome {
    if a.bbox.is_none() && a.boundary.is_none() {
        return Err(invalid("clip needs --bbox and/or --boundary"));
    }
    let bbox = a.bbox.as_deref().map(|b| four_numbers(b, "--bbox")).transpose()?;
    let bbox = bbox.map(|v| Bounds::new(v[0], v[1], v[2], v[3]));
    if is_raster(&a.input) {
        let mut grid = load_raster(&a.input)?;
        if let Some(b) = bbox {
            grid = clip_raster(&grid, &Region::Bbox(b)).map_err(runtime)?;
        }
        if let Some(path) = &a.boundary {
            let poly = load_boundary(path, grid.crs())?;
            grid = clip_raster(&grid, &Region::Polygon(poly)).map_err(runtime)?;
        }
        save_raster(&a.out, &grid)?;
        println!("clipped raster to {}x{}", grid.width(), grid.height());
    } else {
        let mut ps = load_points(&a.input)?;
        let before = ps.len();
        if let Some(b) = bbox {
            ps = clip_points(&ps, &b.to_polygon());
        }
        if let Some(path) = &a.boundary {
            let poly = load_boundary(path, ps.crs)?;
            ps = clip_points(&ps, &poly);
        }
        save_points(&a.out, &ps)?;
        println!("kept {} of {before} points", ps.len());
    }
    Ok(())
}

fn recode(a: &RecodeArgs) -> Outcome {
    let scheme = a.scheme.resolve()?;
    let ps = recode_attributes(&load_points(&a.input)?, &scheme).map_err(runtime)?;
    save_points(&a.out, &ps)?;
    println!("recoded {} points", ps.len());
    Ok(())
}

fn extract(a: &ExtractArgs) -> Outcome {
    let grid = load_raster(&a.raster)?;
    let ps = load_points(&a.points)?;
    let ex = extract_pixel_values(&grid, &ps).map_err(runtime)?;
    write(&a.out, &ex.table.to_csv())?;
    println!(
        "extracted {} rows; skipped {} outside the raster and {} on nodata",
        ex.table.len(),
        ex.skipped.outside.len(),
        ex.skipped.nodata.len()
    );
    Ok(())
}

fn split(a: &SplitArgs, seed: u64) -> Outcome {
    let t = load_table(&a.table)?;
    let spec = SplitSpec { train_fraction: a.train_fraction, seed, stratified: !a.no_stratify };
    let (train_t, test_t) = stratified_split(&t, &spec).map_err(invalid)?;
    write(&a.train_out, &train_t.to_csv())?;
    write(&a.test_out, &test_t.to_csv())?;
    println!("train {} rows, test {} rows", train_t.len(), test_t.len());
    Ok(())
}

fn train_cmd(a: &TrainArgs, seed: u64, workers: usize) -> Outcome {
    let cfg = TrainConfig {
        algorithm: a.algorithm.parse::<Algorithm>().map_err(invalid)?,
        rf: ForestParams { n_trees: a.n_trees, mtry: a.mtry, max_depth: a.max_depth, min_leaf: a.min_leaf },
        svm: SvmParams { c: a.c, gamma: a.gamma, tolerance: a.tolerance, max_passes: a.max_passes },
        seed,
    };
    let t = load_table(&a.table)?;
    let model = train(&t, &cfg, workers).map_err(|e| match e {
        canopy::classify::ClassifyError::BadConfig(_) => invalid(e),
        other => runtime(other),
    })?;
    write(&a.out, &model.to_bytes())?;
    println!("trained on {} rows; model {}", t.len(), model.digest());
    Ok(())
}

fn classify_cmd(a: &ClassifyArgs, workers: usize) -> Outcome {
    let model = load_model(&a.model)?;
    let grid = load_raster(&a.raster)?;
    let labels = classify_raster(&model, &grid, workers).map_err(runtime)?;
    let labels = labels.with_description(Some(format!("classified by model {}", model.digest())));
    save_raster(&a.out, &labels)?;
    println!("classified {}x{} pixels", labels.width(), labels.height());
    Ok(())
}

fn render(a: &RenderArgs) -> Outcome {
    let map = render_classmap(&load_raster(&a.labels)?, &a.scheme.resolve()?).map_err(runtime)?;
    write(&a.out, &map.png)?;
    if map.unknown_labels > 0 {
        eprintln!("warning: {} pixels carry labels outside the scheme", map.unknown_labels);
    }
    Ok(())
}

fn evaluate(a: &EvaluateArgs) -> Outcome {
    let scheme = a.scheme.resolve()?;
    let model = load_model(&a.model)?;
    let test = load_table(&a.table)?;
    let predicted: Vec<u8> =
        test.rows().iter().map(|r| model.predict(&r.features)).collect::<Result<_, _>>().map_err(runtime)?;
    let cm = confusion_matrix(&test.labels(), &predicted, &scheme).map_err(runtime)?;
    let report = metrics(&cm).map_err(runtime)?;
    let norm = normalize(&cm);
    let doc = json!({ "metrics": report, "normalized": norm, "model": model.digest() });
    write(&a.out, (serde_json::to_string_pretty(&doc).map_err(runtime)? + "\n").as_bytes())?;
    if let Some(path) = &a.matrix_out {
        write(path, cm.to_csv().as_bytes())?;
    }
    print!("{}\n{}\n{}", cm.to_text(), norm.to_text(), report.to_text());
    Ok(())
}

fn carbon(a: &CarbonArgs, workers: usize) -> Outcome {
    let cfg = CarbonConfig {
        removal_factor: a.factor.parse().map_err(|_| invalid("--factor is not a decimal number"))?,
        vehicle_factor: a.vehicle_factor.parse().map_err(|_| invalid("--vehicle-factor is not a decimal number"))?,
        tree_label: a.tree_label,
        ..CarbonConfig::default()
    };
    cfg.validate().map_err(invalid)?;
    let scheme = a.scheme.resolve()?;
    let labels = load_raster(&a.labels)?;
    let boundary = a.boundary.as_deref().map(|p| load_boundary(p, labels.crs())).transpose()?;
    let report = carbon_report(&labels, &scheme, &cfg, boundary.as_ref(), workers).map_err(runtime)?;
    write(&a.out, report.to_json().as_bytes())?;
    print!("{}", report.to_text());
    Ok(())
}

fn extent_of(path: &Path) -> Outcome<GeoBox> {
    let none = || runtime(format!("{}: no extent", path.display()));
    if is_raster(path) {
        return raster_geo_extent(&load_raster(path)?).map_err(runtime);
    }
    let bytes = read(path)?;
    if let Ok(ps) = read_points(&bytes, point_format(path)?) {
        let ps = reproject_points(&ps, CrsId::WGS84).map_err(runtime)?;
        return ps.geo_extent().ok_or_else(none);
    }
    let (poly, from) = read_boundary(&bytes).map_err(|e| runtime(format!("{}: {e}", path.display())))?;
    let b = reproject_polygon(&poly, from, CrsId::WGS84).map_err(runtime)?.bounds();
    Ok(GeoBox::new(b.min_x, b.min_y, b.max_x, b.max_y))
}

fn suggest(a: &SuggestArgs) -> Outcome {
    if let Some(path) = &a.workflow {
        let ws = load_workflow(path)?;
        let inputs = bind_inputs(&ws, path, &[])?;
        for s in suggest_parameters(&ws, &inputs) {
            let note = if s.ambiguous { format!(" (ambiguous: zones {}-{})", s.first_zone, s.last_zone) } else { String::new() };
            println!("{}.{} = {}{note}", s.component, s.parameter, s.epsg);
        }
        return Ok(());
    }
    let mut boxes = Vec::new();
    if let Some(b) = &a.bbox {
        let v = four_numbers(b, "--bbox")?;
        boxes.push(GeoBox::new(v[0], v[1], v[2], v[3]));
    }
    for p in &a.inputs {
        boxes.push(extent_of(p)?);
    }
    let Some(first) = boxes.first().copied() else {
        return Err(invalid("suggest-crs needs --input, --bbox or --workflow"));
    };
    let all = boxes.iter().fold(first, |acc, b| {
        GeoBox::new(acc.min_lon.min(b.min_lon), acc.min_lat.min(b.min_lat), acc.max_lon.max(b.max_lon), acc.max_lat.max(b.max_lat))
    });
    let s = suggest_crs(all).map_err(invalid)?;
    println!("EPSG:{}", s.crs.epsg());
    if s.ambiguous {
        eprintln!("warning: the extent spans UTM zones {} to {}; chose the zone of its centre", s.first_zone, s.last_zone);
    }
    Ok(())
}

fn synth(a: &SynthArgs, seed: u64) -> Outcome {
    let mut spec = SceneSpec::square(a.size, seed);
    if let Some(sigma) = a.sigma {
        spec = spec.with_sigma(sigma);
    }
    let (imagery, truth) = generate_scene(&spec).map_err(invalid)?;
    let scheme = spec.scheme();
    let ps = sample_points_from_truth(&truth, &scheme, a.points_per_category, seed).map_err(invalid)?;
    let ps = reproject_points(&ps, CrsId::WGS84).map_err(runtime)?;
    let b = imagery.bounds();
    let (qx, qy) = (b.width() / 4.0, b.height() / 4.0);
    let boundary = Bounds::new(b.min_x + qx, b.min_y + qy, b.max_x - qx, b.max_y - qy).to_polygon();
    save_raster(&a.out.join("imagery.tif"), &imagery)?;
    save_raster(&a.out.join("truth.tif"), &truth)?;
    save_points(&a.out.join("points.geojson"), &ps)?;
    write(&a.out.join("boundary.geojson"), &write_boundary(&boundary, imagery.crs()))?;
    write(&a.out.join("workflow.json"), reference_workflow_json().as_bytes())?;
    println!("wrote {}x{} scene and {} points to {}", a.size, a.size, ps.len(), a.out.display());
    Ok(())
}

fn load_workflow(path: &Path) -> Outcome<WorkflowSpec> {
    WorkflowSpec::from_json(&read(path)?).map_err(invalid)
}

/// Input bytes keyed by id. Paths in the workflow are relative to its file.
fn bind_inputs(ws: &WorkflowSpec, workflow_path: &Path, overrides: &[String]) -> Outcome<BTreeMap<String, Vec<u8>>> {
    let mut paths: BTreeMap<String, PathBuf> = BTreeMap::new();
    let base = workflow_path.parent().unwrap_or(Path::new(""));
    for input in &ws.inputs {
        if let Some(p) = &input.path {
            paths.insert(input.id.clone(), base.join(p));
        }
    }
    for o in overrides {
        let (id, p) = o.split_once('=').ok_or_else(|| invalid(format!("--input {o:?} is not id=path")))?;
        if ws.input(id).is_none() {
            return Err(invalid(format!("workflow has no external input {id:?}")));
        }
        paths.insert(id.to_string(), PathBuf::from(p));
    }
    let mut bytes = BTreeMap::new();
    for (id, p) in paths {
        let optional = ws.input(&id).is_some_and(|i| i.optional);
        match fs::read(&p) {
            Ok(b) => {
                bytes.insert(id, b);
            }
            Err(e) if optional && e.kind() == std::io::ErrorKind::NotFound => {}
            Err(e) => return Err(runtime(format!("input {id} ({}): {e}", p.display()))),
        }
    }
    Ok(bytes)
}

fn run(a: &RunArgs, seed: u64, workers: usize) -> Outcome {
    let ws = load_workflow(&a.workflow)?;
    let report = validate(&ws);
    if !report.is_valid() {
        return Err(invalid(report));
    }
    let inputs = bind_inputs(&ws, &a.workflow, &a.inputs)?;
    let catalog = DataCatalog::open(&a.catalog).map_err(runtime)?;
    let opts = ExecOptions { workers, seed };
    let provenance_path = a.out.join("provenance.jsonl");
    match execute(&ws, &inputs, &catalog, &opts) {
        Ok(out) => {
            for o in &out.outputs {
                write(&a.out.join(&o.name), &o.bytes)?;
            }
            write(&provenance_path, provenance_jsonl(&out.provenance).as_bytes())?;
            println!(
                "{}/{} cache hits; {} outputs written to {}",
                out.cache_hits(),
                out.provenance.len(),
                out.outputs.len(),
                a.out.display()
            );
            Ok(())
        }
        Err(e) => {
            write(&provenance_path, provenance_jsonl(&e.provenance).as_bytes())?;
            let at = e.component.map(|c| format!("component {c}: ")).unwrap_or_default();
            Err(runtime(format!("{at}{}", e.message)))
        }
    }
}

fn validate_cmd(a: &ValidateArgs) -> Outcome {
    let ws = load_workflow(&a.workflow)?;
    let report = validate(&ws);
    if !report.is_valid() {
        return Err(invalid(report));
    }
    let order = canopy::workflow::plan(&ws).map_err(invalid)?;
    println!("valid: {} components; order {}", order.len(), order.join(" -> "));
    Ok(())
}

fn dispatch(cli: Cli) -> Outcome {
    let (seed, workers) = (cli.seed, cli.workers.max(1));
    match &cli.command {
        Command::Convert(a) => convert(a),
        Command::Reproject(a) => reproject(a, workers),
        Command::Clip(a) => clip(a),
        Command::Recode(a) => recode(a),
        Command::Extract(a) => extract(a),
        Command::Split(a) => split(a, seed),
        Command::Train(a) => train_cmd(a, seed, workers),
        Command::Classify(a) => classify_cmd(a, workers),
        Command::Render(a) => render(a),
        Command::Evaluate(a) => evaluate(a),
        Command::Carbon(a) => carbon(a, workers),
        Command::SuggestCrs(a) => suggest(a),
        Command::Synth(a) => synth(a, seed),
        Command::Run(a) => run(a, seed, workers),
        Command::Validate(a) => validate_cmd(a),
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Invalid(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(1)
        }
        Err(Failure::Runtime(m)) => {
            eprintln!("error: {m}");
            ExitCode::from(2)
        }
    }
}
