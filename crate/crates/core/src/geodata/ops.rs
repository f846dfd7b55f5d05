use serde::{Deserialize, Serialize};

use super::points::{AttrValue, PointSet, LABEL};
use super::{Bounds, GeoTransform, GeodataError, LabelScheme, Polygon, RasterGrid, Region, Result, Samples};
use crate::geodesy::{self, CrsId, GeoBox};
use crate::parallel::for_each_row_block;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Resampling {
    #[default]
    Nearest,
}

/// Maps every location into `target`; attributes are untouched. All
/// failing feature indices are reported together.
pub fn reproject_points(ps: &PointSet, target: CrsId) -> Result<PointSet> {
    if ps.crs == target {
        return Ok(ps.clone());
    }
    let mut failed = Vec::new();
    let mut cause = None;
    let mut features = Vec::with_capacity(ps.len());
    for (i, f) in ps.features.iter().enumerate() {
        match geodesy::transform(f.x, f.y, ps.crs, target) {
            Ok((x, y)) => {
                let mut g = f.clone();
                g.x = x;
                g.y = y;
                features.push(g);
            }
            Err(e) => {
                failed.push(i);
                cause.get_or_insert(e);
            }
        }
    }
    match cause {
        Some(cause) => Err(GeodataError::Reprojection { indices: failed, cause }),
        None => Ok(PointSet::new(target, features)),
    }
}

/// Maps every vertex of a polygon between CRSs.
pub fn reproject_polygon(poly: &Polygon, from: CrsId, to: CrsId) -> Result<Polygon> {
    let ring = |r: &[(f64, f64)]| -> Result<Vec<(f64, f64)>> {
        r.iter().map(|&(x, y)| geodesy::transform(x, y, from, to).map_err(GeodataError::from)).collect()
    };
    let interiors = poly.interiors().iter().map(|r| ring(r)).collect::<Result<Vec<_>>>()?;
    Polygon::new(ring(poly.exterior())?, interiors)
}

/// Longitude/latitude box covering the raster footprint.
pub fn raster_geo_extent(grid: &RasterGrid) -> Result<GeoBox> {
    let b = footprint(grid, CrsId::WGS84)?;
    Ok(GeoBox::new(b.min_x, b.min_y, b.max_x, b.max_y))
}

fn footprint(grid: &RasterGrid, target: CrsId) -> Result<Bounds> {
    let b = grid.bounds();
    let steps = grid.width().max(grid.height()).clamp(1, 512);
    let mut out = Bounds::new(f64::INFINITY, f64::INFINITY, f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..=steps {
        let t = k as f64 / steps as f64;
        let x = b.min_x + t * b.width();
        let y = b.min_y + t * b.height();
        for (px, py) in [(x, b.min_y), (x, b.max_y), (b.min_x, y), (b.max_x, y)] {
            let (tx, ty) = geodesy::transform(px, py, grid.crs(), target)?;
            out = Bounds::new(out.min_x.min(tx), out.min_y.min(ty), out.max_x.max(tx), out.max_y.max(ty));
        }
    }
    if out.is_empty() || !out.width().is_finite() || out.width() <= 0.0 || out.height() <= 0.0 {
        return Err(GeodataError::DegenerateFootprint);
    }
    Ok(out)
}

/// Output pixel size: the source's own when both CRSs share units,
/// otherwise the source pixel's local extent measured in the target CRS.
fn target_pixel_size(grid: &RasterGrid, target: CrsId) -> Result<(f64, f64)> {
    let t = grid.transform();
    if grid.crs().is_geographic() == target.is_geographic() {
        return Ok((t.pixel_size_x, t.pixel_size_y));
    }
    let cx = grid.bounds().min_x + grid.bounds().width() / 2.0;
    let cy = grid.bounds().min_y + grid.bounds().height() / 2.0;
    let origin = geodesy::transform(cx, cy, grid.crs(), target)?;
    let east = geodesy::transform(cx + t.pixel_size_x, cy, grid.crs(), target)?;
    let south = geodesy::transform(cx, cy - t.pixel_size_y, grid.crs(), target)?;
    let dist = |a: (f64, f64), b: (f64, f64)| ((a.0 - b.0).powi(2) + (a.1 - b.1).powi(2)).sqrt();
    Ok((dist(origin, east), dist(origin, south)))
}

const MAX_OUTPUT_PIXELS: f64 = 1e9;

/// Nearest-neighbour reprojection onto an axis-aligned grid covering the
/// projected footprint. Output pixels whose centre maps outside the source
/// get nodata (the source's value, or 0 when it has none).
pub fn reproject_raster(grid: &RasterGrid, target: CrsId, method: Resampling, workers: usize) -> Result<RasterGrid> {
    let Resampling::Nearest = method;
    if grid.crs() == target {
        return Ok(grid.clone());
    }
    let fp = footprint(grid, target)?;
    let (px, py) = target_pixel_size(grid, target)?;
    let w = (fp.width() / px).ceil();
    let h = (fp.height() / py).ceil();
    if !(w >= 1.0 && h >= 1.0) || w * h > MAX_OUTPUT_PIXELS {
        return Err(GeodataError::DegenerateFootprint);
    }
    let (w, h) = (w as usize, h as usize);
    let transform = GeoTransform::new(fp.min_x, fp.max_y, px, py)?;

    // Source pixel index per output pixel, computed in parallel rows.
    let mut lookup = vec![usize::MAX; w * h];
    let src_crs = grid.crs();
    for_each_row_block(&mut lookup, w, workers, |first_row, block| {
        for (k, slot) in block.iter_mut().enumerate() {
            let (row, col) = (first_row + k / w, k % w);
            let (x, y) = transform.pixel_center(row, col);
            if let Ok((sx, sy)) = geodesy::transform(x, y, target, src_crs) {
                if let Some((r, c)) = grid.locate(sx, sy) {
                    *slot = r * grid.width() + c;
                }
            }
        }
    });

    let fill = grid.fill_value();
    let mut out = RasterGrid::filled(w, h, grid.band_count(), grid.sample_type(), fill, Some(fill), target, transform)?;
    for (i, &src) in lookup.iter().enumerate() {
        if src != usize::MAX {
            out.copy_pixel_from(i / w, i % w, grid, src / grid.width(), src % grid.width());
        }
    }
    Ok(out)
}

/// Crops to the region's bounding box (pixels whose centres fall inside
/// it); for polygon regions, pixels whose centres fall outside the polygon
/// are set to nodata.
pub fn clip_raster(grid: &RasterGrid, region: &Region) -> Result<RasterGrid> {
    let b = region.bounds();
    if b.is_empty() {
        return Err(GeodataError::EmptyIntersection);
    }
    let t = grid.transform();
    let col_lo = (((b.min_x - t.origin_x) / t.pixel_size_x) - 0.5).ceil().max(0.0);
    let col_hi = (((b.max_x - t.origin_x) / t.pixel_size_x) - 0.5).floor().min(grid.width() as f64 - 1.0);
    let row_lo = (((t.origin_y - b.max_y) / t.pixel_size_y) - 0.5).ceil().max(0.0);
    let row_hi = (((t.origin_y - b.min_y) / t.pixel_size_y) - 0.5).floor().min(grid.height() as f64 - 1.0);
    if !(col_lo <= col_hi && row_lo <= row_hi) {
        return Err(GeodataError::EmptyIntersection);
    }
    let (c0, c1, r0, r1) = (col_lo as usize, col_hi as usize, row_lo as usize, row_hi as usize);
    let (w, h) = (c1 - c0 + 1, r1 - r0 + 1);
    let transform = GeoTransform::new(
        t.origin_x + c0 as f64 * t.pixel_size_x,
        t.origin_y - r0 as f64 * t.pixel_size_y,
        t.pixel_size_x,
        t.pixel_size_y,
    )?;
    let mut out = RasterGrid::new(
        w,
        h,
        grid.band_count(),
        Samples::zeros(grid.sample_type(), w * h * grid.band_count()),
        grid.nodata(),
        grid.crs(),
        transform,
    )?;
    let polygon = match region {
        Region::Polygon(p) => Some(p),
        Region::Bbox(_) => None,
    };
    let fill = grid.fill_value();
    let mut kept = 0usize;
    for r in 0..h {
        for c in 0..w {
            let inside = match polygon {
                Some(p) => {
                    let (x, y) = transform.pixel_center(r, c);
                    p.contains(x, y)
                }
                None => true,
            };
            if inside {
                kept += 1;
                out.copy_pixel_from(r, c, grid, r0 + r, c0 + c);
            } else {
                for band in 0..grid.band_count() {
                    out.set(band, r, c, fill);
                }
            }
        }
    }
    if kept == 0 {
        return Err(GeodataError::EmptyIntersection);
    }
    if polygon.is_some() {
        out = out.with_nodata(Some(fill));
    }
    Ok(out)
}

/// Keeps the features inside the polygon, preserving order.
pub fn clip_points(ps: &PointSet, region: &Polygon) -> PointSet {
    let features = ps.features.iter().filter(|f| region.contains(f.x, f.y)).cloned().collect();
    PointSet::new(ps.crs, features)
}

/// Adds the integer `label` attribute from each feature's category.
/// Unknown categories are reported with their 1-based row numbers.
pub fn recode_attributes(ps: &PointSet, scheme: &LabelScheme) -> Result<PointSet> {
    let mut unknown = Vec::new();
    let mut out = ps.clone();
    for (i, f) in out.features.iter_mut().enumerate() {
        let category = f.category().unwrap_or("");
        match scheme.code_of(category) {
            Some(code) => {
                f.attributes.insert(LABEL.into(), AttrValue::Int(code as i64));
            }
            None => unknown.push((i + 1, category.to_string())),
        }
    }
    if unknown.is_empty() {
        Ok(out)
    } else {
        Err(GeodataError::UnknownCategories(unknown))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geodata::PointFeature;

    fn utm36() -> CrsId {
        CrsId::from_epsg(32636).unwrap()
    }

    fn ramp(w: usize, h: usize) -> RasterGrid {
        let t = GeoTransform::new(0.0, 100.0, 10.0, 10.0).unwrap();
        RasterGrid::new(w, h, 1, Samples::U8((0..w * h).map(|v| (v % 250 + 1) as u8).collect()), Some(0.0), utm36(), t).unwrap()
    }

    #[test]
    fn central_meridian_point() {
        let ps = PointSet::new(CrsId::WGS84, vec![PointFeature::new(33.0, 0.0).with_category("Water")]);
        let out = reproject_points(&ps, utm36()).unwrap();
        assert_eq!((out.features[0].x, out.features[0].y), (500_000.0, 0.0));
        assert_eq!(out.features[0].category(), Some("Water"));
        assert_eq!(reproject_points(&ps, CrsId::WGS84).unwrap(), ps);
    }

    #[test]
    fn reprojection_failures_list_indices() {
        let ps = PointSet::new(
            CrsId::WGS84,
            vec![PointFeature::new(33.0, 0.0), PointFeature::new(60.0, 0.0), PointFeature::new(33.0, 89.0)],
        );
        match reproject_points(&ps, utm36()) {
            Err(GeodataError::Reprojection { indices, .. }) => assert_eq!(indices, vec![1, 2]),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn bbox_identity_and_single_pixel() {
        let g = ramp(10, 10);
        assert_eq!(clip_raster(&g, &Region::Bbox(g.bounds())).unwrap(), g);
        let one = clip_raster(&g, &Region::Bbox(Bounds::new(30.0, 60.0, 40.0, 70.0))).unwrap();
        assert_eq!((one.width(), one.height()), (1, 1));
        // pixel (row 3, col 3)
        assert_eq!(one.get(0, 0, 0), g.get(0, 3, 3));
        assert_eq!(one.transform().origin_x, 30.0);
        assert_eq!(one.transform().origin_y, 70.0);
        assert!(matches!(
            clip_raster(&g, &Region::Bbox(Bounds::new(500.0, 500.0, 600.0, 600.0))),
            Err(GeodataError::EmptyIntersection)
        ));
    }

    #[test]
    fn polygon_mask() {
        let g = ramp(10, 10);
        // lower-left triangle-ish: the half-plane x < 50 as a rectangle polygon
        let p = Polygon::new(vec![(0.0, 0.0), (50.0, 0.0), (50.0, 100.0), (0.0, 100.0), (0.0, 0.0)], vec![]).unwrap();
        let out = clip_raster(&g, &Region::Polygon(p)).unwrap();
        let valid = (0..out.height())
            .flat_map(|r| (0..out.width()).map(move |c| (r, c)))
            .filter(|&(r, c)| !out.pixel_is_nodata(r, c))
            .count();
        assert_eq!(valid, 50);
    }

    #[test]
    fn recode_default_scheme() {
        let ps = PointSet::new(
            CrsId::WGS84,
            vec![PointFeature::new(0.0, 0.0).with_category("Trees"), PointFeature::new(0.0, 0.0).with_category("water")],
        );
        let out = recode_attributes(&ps, &LabelScheme::default()).unwrap();
        assert_eq!(out.features[0].label(), Some(1));
        assert_eq!(out.features[1].label(), Some(4));

        let bad = PointSet::new(CrsId::WGS84, vec![PointFeature::new(0.0, 0.0).with_category("Crops")]);
        let err = recode_attributes(&bad, &LabelScheme::default()).unwrap_err();
        assert!(err.to_string().contains("Crops"));
        assert!(matches!(err, GeodataError::UnknownCategories(v) if v == vec![(1, "Crops".to_string())]));
    }

    #[test]
    fn reprojection_keeps_label_values() {
        let t = GeoTransform::new(200_000.0, 600_000.0, 10.0, 10.0).unwrap();
        let vals: Vec<u8> = (0..40 * 30).map(|i| [1u8, 2, 3, 4][(i / 7) % 4]).collect();
        let g = RasterGrid::new(40, 30, 1, Samples::U8(vals), Some(0.0), utm36(), t).unwrap();
        let out = reproject_raster(&g, CrsId::from_epsg(32635).unwrap(), Resampling::Nearest, 2).unwrap();
        let mut seen = std::collections::BTreeSet::new();
        for r in 0..out.height() {
            for c in 0..out.width() {
                seen.insert(out.get(0, r, c) as u8);
            }
        }
        assert!(seen.is_subset(&[0u8, 1, 2, 3, 4].into_iter().collect()));
        assert!(seen.len() >= 4);
        assert_eq!(out.transform().pixel_size_x, 10.0);
        let same = reproject_raster(&g, utm36(), Resampling::Nearest, 1).unwrap();
        assert_eq!(same, g);
    }
}
