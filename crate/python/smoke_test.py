"""End-to-end smoke test of the canopy_py extension module.

Build and install first:  pip install --no-build-isolation -e crates/python
"""

import json
import tempfile

import canopy_py as cp


def main():
    # geodesy
    e, n, zone, south = cp.geo_to_utm(31.58, 4.85)
    assert (zone, south) == (36, False), (zone, south)
    lon, lat = cp.utm_to_geo(e, n, zone)
    assert abs(lon - 31.58) < 1e-9 and abs(lat - 4.85) < 1e-9
    assert cp.suggest_crs(31.5, 4.8, 31.7, 4.9)[0] == 32636

    # carbon arithmetic
    assert cp.assess("10519", "2.9") == "30505.1"
    assert cp.vehicles("30506", "4.6") == 6632

    # scene -> points -> table -> model -> map
    imagery, truth = cp.synth_scene(size=64, seed=3)
    assert (imagery.width, imagery.band_count, imagery.epsg) == (64, 4, 32636)
    assert cp.Raster.from_geotiff(imagery.to_geotiff()) == imagery
    points = cp.sample_points(truth, per_category=100, seed=3)
    table, skipped = cp.extract(imagery, points)
    assert len(table) == 400 and skipped == []
    train, test = table.split(0.8, seed=42)
    assert (len(train), len(test)) == (320, 80)
    model = cp.train(train, n_trees=20, seed=42)
    again = cp.Model.from_bytes(model.to_bytes())
    assert again.digest == model.digest
    labels = model.classify(imagery, workers=2)
    assert model.digest in labels.description
    report = cp.evaluate(test.labels, model.predict_many(test.features))
    acc = report["metrics"]["overall_accuracy"]
    assert acc >= 0.9, acc
    carbon = cp.carbon(labels)
    assert carbon["canopy_area_ha"] == carbon["areas"]["categories"][0]["area_ha"]
    assert cp.render_png(labels)[:4] == b"\x89PNG"

    # workflow
    wf = cp.reference_workflow()
    assert cp.validate_workflow(wf) == []
    inputs = {
        "points_file": cp.reproject_points_geojson(points, 4326),
        "imagery_file": imagery.to_geotiff(),
    }
    with tempfile.TemporaryDirectory() as cache:
        first = cp.run_workflow(wf, inputs, cache, workers=2)
        second = cp.run_workflow(wf, inputs, cache, workers=2)
    assert first["cache_hits"] == 0 and second["cache_hits"] == 14
    assert first["outputs"] == second["outputs"]
    metrics = json.loads(first["outputs"]["metrics.json"])
    print(f"smoke test ok: accuracy {acc:.4f}, workflow accuracy "
          f"{metrics['metrics']['overall_accuracy']:.4f}, "
          f"canopy {carbon['canopy_area_ha']} ha")


if __name__ == "__main__":
    main()
