use canopy::geodata::{
    clip_points, clip_raster, read_boundary, read_geotiff, read_points, write_boundary, write_geotiff, write_points,
    Bounds, GeoTransform, PointFeature, PointFormat, PointSet, Polygon, RasterGrid, Region, SampleType, Samples,
};
use canopy::geodesy::CrsId;
use proptest::prelude::*;

fn grid_strategy() -> impl Strategy<Value = RasterGrid> {
    (1usize..40, 1usize..40, 1usize..4, 0u8..3, 1u32..120, any::<u64>(), proptest::option::of("[ -~]{0,40}"))
        .prop_map(|(w, h, b, ty, zone_off, seed, desc)| {
            let n = w * h * b;
            let mut s = seed;
            let mut next = || {
                s = s.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                s >> 16
            };
            let (samples, nodata) = match ty {
                0 => (Samples::U8((0..n).map(|_| next() as u8).collect()), Some(0.0)),
                1 => (Samples::U16((0..n).map(|_| next() as u16).collect()), None),
                _ => (Samples::F32((0..n).map(|_| (next() % 100_000) as f32 / 7.0 - 5000.0).collect()), Some(-9999.0)),
            };
            let epsg = if zone_off <= 60 { 32600 + zone_off } else { 32700 + zone_off - 60 };
            let crs = CrsId::from_epsg(epsg).unwrap();
            let t = GeoTransform::new(300_000.0 + zone_off as f64, 500_000.0, 10.0, 10.0).unwrap();
            RasterGrid::new(w, h, b, samples, nodata, crs, t).unwrap().with_description(desc)
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn geotiff_round_trip(grid in grid_strategy()) {
        let bytes = write_geotiff(&grid).unwrap();
        let back = read_geotiff(&bytes).unwrap();
        prop_assert_eq!(&back, &grid);
        prop_assert_eq!(write_geotiff(&back).unwrap(), bytes);
    }

    #[test]
    fn damaged_geotiff_never_panics(grid in grid_strategy(), cut in any::<prop::sample::Index>(), flips in proptest::collection::vec((any::<prop::sample::Index>(), any::<u8>()), 1..8)) {
        let bytes = write_geotiff(&grid).unwrap();
        let truncated = &bytes[..cut.index(bytes.len())];
        prop_assert!(read_geotiff(truncated).is_err());
        let mut flipped = bytes.clone();
        for (at, v) in flips {
            let i = at.index(flipped.len());
            flipped[i] ^= v | 1;
        }
        // either a typed error or some raster; never a panic
        let _ = read_geotiff(&flipped);
    }

    #[test]
    fn points_round_trip(pts in proptest::collection::vec((-179.0f64..179.0, -80.0f64..80.0, 0usize..3), 0..30)) {
        let names = ["Trees", "Grass", "Water"];
        let ps = PointSet::new(
            CrsId::WGS84,
            pts.iter().map(|&(x, y, c)| PointFeature::new(x, y).with_category(names[c])).collect(),
        );
        for fmt in [PointFormat::GeoJson, PointFormat::Csv] {
            let bytes = write_points(&ps, fmt).unwrap();
            let back = read_points(&bytes, fmt).unwrap();
            prop_assert_eq!(back.len(), ps.len());
            for (a, b) in back.features.iter().zip(&ps.features) {
                prop_assert_eq!((a.x, a.y, a.category()), (b.x, b.y, b.category()));
            }
        }
    }

    #[test]
    fn clipped_raster_is_a_window(grid in grid_strategy(), a in 0.0f64..1.0, b in 0.0f64..1.0, c in 0.0f64..1.0, d in 0.0f64..1.0) {
        let bb = grid.bounds();
        let (x0, x1) = (bb.min_x + a.min(b) * bb.width(), bb.min_x + a.max(b) * bb.width());
        let (y0, y1) = (bb.min_y + c.min(d) * bb.height(), bb.min_y + c.max(d) * bb.height());
        let region = Region::Bbox(Bounds::new(x0, y0, x1, y1));
        let Ok(out) = clip_raster(&grid, &region) else { return Ok(()) };
        prop_assert_eq!(out.band_count(), grid.band_count());
        for r in 0..out.height() {
            for col in 0..out.width() {
                let (x, y) = out.transform().pixel_center(r, col);
                prop_assert!(region.contains(x, y));
                let (sr, sc) = grid.locate(x, y).unwrap();
                prop_assert_eq!(out.pixel(r, col), grid.pixel(sr, sc));
            }
        }
        // every source pixel centre inside the box survives
        let inside = (0..grid.height())
            .flat_map(|r| (0..grid.width()).map(move |c| (r, c)))
            .filter(|&(r, c)| { let (x, y) = grid.transform().pixel_center(r, c); region.contains(x, y) })
            .count();
        prop_assert_eq!(inside, out.width() * out.height());
    }

    #[test]
    fn triangle_clip_matches_containment(pts in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 0..60)) {
        let tri = Polygon::new(vec![(1.0, 1.0), (9.0, 2.0), (4.0, 8.0), (1.0, 1.0)], vec![]).unwrap();
        let crs = CrsId::from_epsg(32636).unwrap();
        let ps = PointSet::new(crs, pts.iter().map(|&(x, y)| PointFeature::new(x, y)).collect());
        let kept = clip_points(&ps, &tri);
        let expected: Vec<_> = ps.features.iter().filter(|f| tri.contains(f.x, f.y)).cloned().collect();
        prop_assert_eq!(kept.features, expected);
    }
}

#[test]
fn boundary_round_trip() {
    let crs = CrsId::from_epsg(32636).unwrap();
    let poly = Polygon::new(
        vec![(0.0, 0.0), (100.0, 0.0), (100.0, 50.0), (0.0, 50.0), (0.0, 0.0)],
        vec![vec![(10.0, 10.0), (20.0, 10.0), (20.0, 20.0), (10.0, 10.0)]],
    )
    .unwrap();
    let (back, back_crs) = read_boundary(&write_boundary(&poly, crs)).unwrap();
    assert_eq!((back, back_crs), (poly.clone(), crs));
    assert!(poly.contains(50.0, 40.0));
    assert!(!poly.contains(16.0, 12.0));
}

#[test]
fn geotiff_rejects_garbage() {
    for bytes in [&b""[..], b"II", b"MM\0*\0\0\0\x08", b"II*\0\xff\xff\xff\xff", b"PK\x03\x04 not a tiff"] {
        assert!(read_geotiff(bytes).is_err(), "{bytes:?}");
    }
    let g = RasterGrid::filled(
        3,
        2,
        1,
        SampleType::U8,
        1.0,
        None,
        CrsId::WGS84,
        GeoTransform::new(30.0, 1.0, 0.001, 0.001).unwrap(),
    )
    .unwrap()
    .with_description(Some("bad\u{e9}".into()));
    assert!(write_geotiff(&g).is_err());
}
