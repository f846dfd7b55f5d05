use std::path::Path;
use std::process::{Command, Output};

const SUBCOMMANDS: [&str; 15] = [
    "convert",
    "reproject",
    "clip",
    "recode",
    "extract",
    "split",
    "train",
    "classify",
    "render",
    "evaluate",
    "carbon",
    "suggest-crs",
    "synth",
    "run",
    "validate",
];

fn canopy(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_canopy")).args(args).env_remove("CANOPY_CATALOG").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn every_subcommand_has_help() {
    for sub in SUBCOMMANDS {
        let o = canopy(&[sub, "--help"]);
        assert_eq!(o.status.code(), Some(0), "{sub}");
        let text = stdout(&o);
        assert!(text.contains("--seed") && text.contains("--workers"), "{sub} help lacks global flags");
    }
    let carbon = stdout(&canopy(&["carbon", "--help"]));
    for flag in ["--labels", "--factor", "--vehicle-factor", "--tree-label", "--boundary", "--scheme", "--out"] {
        assert!(carbon.contains(flag), "carbon help lacks {flag}");
    }
}

#[test]
fn bad_arguments_exit_1() {
    assert_eq!(canopy(&["synth", "--out", "x", "--no-such-flag"]).status.code(), Some(1));
    assert_eq!(canopy(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(canopy(&[]).status.code(), Some(1));
    let o = canopy(&["carbon", "--labels", "x.tif", "--factor", "two", "--out", "r.json"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("--factor"));
}

#[test]
fn missing_files_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let o = canopy(&["render", "--labels", p(&dir.path().join("nope.tif")), "--out", p(&dir.path().join("x.png"))]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn invalid_workflow_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let wf = dir.path().join("bad.json");
    std::fs::write(
        &wf,
        r#"{"name":"bad","inputs":[],"components":[{"id":"a","kind":"not_a_kind"}],"edges":[],"outputs":[]}"#,
    )
    .unwrap();
    let o = canopy(&["validate", "--workflow", p(&wf)]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("not_a_kind"));
    assert_eq!(canopy(&["run", "--workflow", p(&wf), "--catalog", p(dir.path())]).status.code(), Some(1));
}

#[test]
fn carbon_on_known_tree_count() {
    use canopy::geodata::{write_geotiff, GeoTransform, RasterGrid, Samples};
    use canopy::geodesy::CrsId;
    let dir = tempfile::tempdir().unwrap();
    let (w, h) = (1000, 1052);
    let mut labels = vec![1u8; w * h];
    for v in labels.iter_mut().take(100) {
        *v = 2;
    }
    let grid = RasterGrid::new(
        w,
        h,
        1,
        Samples::U8(labels),
        Some(0.0),
        CrsId::from_epsg(32636).unwrap(),
        GeoTransform::new(320_000.0, 550_000.0, 10.0, 10.0).unwrap(),
    )
    .unwrap();
    let map = dir.path().join("map.tif");
    std::fs::write(&map, write_geotiff(&grid).unwrap()).unwrap();
    let out = dir.path().join("report.json");
    let o = canopy(&["carbon", "--labels", p(&map), "--factor", "2.9", "--out", p(&out)]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let report: serde_json::Value = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(report["canopy_area_ha"], "10519");
    assert_eq!(report["carbon_tonnes_per_year"], "30505.1");
    assert!(stdout(&o).contains("30505.1"));
}

#[test]
fn synth_then_run_is_cached_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let scene = dir.path().join("scene");
    let o = canopy(&["synth", "--size", "64", "--points-per-category", "100", "--seed", "7", "--out", p(&scene)]);
    assert_eq!(o.status.code(), Some(0));
    for f in ["imagery.tif", "truth.tif", "points.geojson", "boundary.geojson", "workflow.json"] {
        assert!(scene.join(f).exists(), "{f}");
    }
    let again = dir.path().join("again");
    canopy(&["synth", "--size", "64", "--points-per-category", "100", "--seed", "7", "--out", p(&again)]);
    for f in ["imagery.tif", "truth.tif", "points.geojson"] {
        assert_eq!(std::fs::read(scene.join(f)).unwrap(), std::fs::read(again.join(f)).unwrap(), "{f}");
    }

    let wf = scene.join("workflow.json");
    let catalog = dir.path().join("cache");
    let run = |out: &str| {
        Command::new(env!("CARGO_BIN_EXE_canopy"))
            .args(["--workers", "2", "run", "--workflow", p(&wf), "--out", p(&dir.path().join(out))])
            .env("CANOPY_CATALOG", &catalog)
            .output()
            .unwrap()
    };
    let first = run("o1");
    assert_eq!(first.status.code(), Some(0), "{}", String::from_utf8_lossy(&first.stderr));
    assert!(stdout(&first).starts_with("0/14 cache hits"));
    let second = run("o2");
    assert!(stdout(&second).starts_with("14/14 cache hits"), "{}", stdout(&second));
    assert!(catalog.join("keys").is_dir());
    for f in ["land_cover.tif", "land_cover.png", "confusion_matrix.json", "metrics.json", "model.json", "carbon_report.json"] {
        let a = std::fs::read(dir.path().join("o1").join(f)).unwrap();
        assert_eq!(a, std::fs::read(dir.path().join("o2").join(f)).unwrap(), "{f}");
    }
    let prov = std::fs::read_to_string(dir.path().join("o2/provenance.jsonl")).unwrap();
    assert_eq!(prov.lines().count(), 14);
}

#[test]
fn stage_commands_chain() {
    let dir = tempfile::tempdir().unwrap();
    let d = |f: &str| dir.path().join(f).to_str().unwrap().to_string();
    let ok = |args: &[&str]| {
        let o = canopy(args);
        assert_eq!(o.status.code(), Some(0), "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
        stdout(&o)
    };
    ok(&["synth", "--size", "48", "--points-per-category", "40", "--out", &d("s")]);
    assert_eq!(ok(&["suggest-crs", "--input", &d("s/points.geojson")]).trim(), "EPSG:32636");
    ok(&["convert", "--input", &d("s/points.geojson"), "--out", &d("pts.csv")]);
    ok(&["reproject", "--input", &d("pts.csv"), "--target-crs", "32636", "--out", &d("utm.geojson")]);
    ok(&["clip", "--input", &d("utm.geojson"), "--boundary", &d("s/boundary.geojson"), "--out", &d("inner.geojson")]);
    ok(&["recode", "--input", &d("utm.geojson"), "--out", &d("coded.geojson")]);
    ok(&["extract", "--raster", &d("s/imagery.tif"), "--points", &d("coded.geojson"), "--out", &d("t.csv")]);
    assert!(ok(&["split", "--table", &d("t.csv"), "--train-out", &d("tr.csv"), "--test-out", &d("te.csv")])
        .contains("train 128 rows, test 32 rows"));
    ok(&["train", "--table", &d("tr.csv"), "--n-trees", "10", "--out", &d("m.json")]);
    ok(&["classify", "--model", &d("m.json"), "--raster", &d("s/imagery.tif"), "--out", &d("lab.tif")]);
    ok(&["render", "--labels", &d("lab.tif"), "--out", &d("lab.png")]);
    let ev = ok(&["evaluate", "--model", &d("m.json"), "--table", &d("te.csv"), "--out", &d("ev.json")]);
    assert!(ev.contains("Overall accuracy"));
    ok(&["clip", "--input", &d("lab.tif"), "--bbox", "340000,539600,340200,539800", "--out", &d("lab_c.tif")]);
    ok(&["carbon", "--labels", &d("lab.tif"), "--boundary", &d("s/boundary.geojson"), "--out", &d("c.json")]);
    assert_eq!(&std::fs::read(d("lab.png")).unwrap()[1..4], b"PNG");
}
