use std::collections::BTreeSet;

use canopy::carbon::{assess_carbon, category_areas, vehicle_equivalent, CarbonConfig, CarbonError};
use canopy::evaluate::{confusion_matrix, metrics, normalize, EvaluateError, Ratio};
use canopy::geodata::{GeoTransform, LabelScheme, RasterGrid, Samples};
use canopy::geodesy::CrsId;
use canopy::sampling::{stratified_split, train_count, SampleRow, SampleTable, SamplingError, SplitSpec};
use canopy::synthscene::{generate_scene, sample_points_from_truth, SceneSpec};
use proptest::prelude::*;
use rust_decimal::Decimal;

fn labels(n: std::ops::Range<usize>) -> impl Strategy<Value = (Vec<u8>, Vec<u8>)> {
    n.prop_flat_map(|n| (proptest::collection::vec(1u8..=4, n), proptest::collection::vec(1u8..=4, n)))
}

fn label_grid(w: usize, h: usize, values: Vec<u8>, px: f64) -> RasterGrid {
    let crs = CrsId::from_epsg(32636).unwrap();
    RasterGrid::new(w, h, 1, Samples::U8(values), Some(0.0), crs, GeoTransform::new(0.0, 0.0, px, px).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn confusion_matrix_tallies((truth, pred) in labels(1..300)) {
        let scheme = LabelScheme::default();
        let cm = confusion_matrix(&truth, &pred, &scheme).unwrap();
        prop_assert_eq!(cm.total(), truth.len() as u64);
        for i in 0..4 {
            for j in 0..4 {
                let n = truth.iter().zip(&pred).filter(|&(&t, &p)| t == i as u8 + 1 && p == j as u8 + 1).count();
                prop_assert_eq!(cm.counts()[i][j], n as u64);
            }
            prop_assert_eq!(cm.row_sum(i), truth.iter().filter(|&&t| t == i as u8 + 1).count() as u64);
        }
        let m = metrics(&cm).unwrap();
        let correct = truth.iter().zip(&pred).filter(|(t, p)| t == p).count();
        prop_assert_eq!(m.correct, correct as u64);
        prop_assert!((m.overall_accuracy - correct as f64 / truth.len() as f64).abs() < 1e-15);
        for (k, c) in m.categories.iter().enumerate() {
            prop_assert_eq!(c.support, cm.row_sum(k));
            prop_assert_eq!(c.recall_undefined, cm.row_sum(k) == 0);
            prop_assert_eq!(c.precision_undefined, cm.col_sum(k) == 0);
            prop_assert!((0.0..=1.0).contains(&c.recall) && (0.0..=1.0).contains(&c.precision));
        }
    }

    #[test]
    fn normalized_rows_sum_to_one((truth, pred) in labels(1..300)) {
        let cm = confusion_matrix(&truth, &pred, &LabelScheme::default()).unwrap();
        let nm = normalize(&cm);
        for (i, row) in nm.rows.iter().enumerate() {
            let s: f64 = row.iter().sum();
            if nm.empty_rows.contains(&i) {
                prop_assert!(row.iter().all(|&v| v == 0.0));
            } else {
                prop_assert!((s - 1.0).abs() < 1e-12);
                let num: u64 = (0..4).map(|j| nm.ratio(i, j).num).sum();
                prop_assert_eq!(num, nm.ratio(i, 0).den);
            }
        }
    }

    #[test]
    fn matrix_ignores_pair_order((truth, pred) in labels(2..200), rot in 0usize..200) {
        let scheme = LabelScheme::default();
        let mut pairs: Vec<(u8, u8)> = truth.iter().copied().zip(pred.iter().copied()).collect();
        let k = rot % pairs.len();
        pairs.rotate_left(k);
        pairs.reverse();
        let (t2, p2): (Vec<u8>, Vec<u8>) = pairs.into_iter().unzip();
        prop_assert_eq!(confusion_matrix(&truth, &pred, &scheme).unwrap(), confusion_matrix(&t2, &p2, &scheme).unwrap());
    }

    #[test]
    fn ratio_display_rounds_half_away(num in 0u64..10_000, den in 1u64..10_000) {
        let shown: f64 = Ratio { num, den }.display(2).parse().unwrap();
        // exact: shown*100 is the integer nearest num*100/den, halves upward
        let want = (200 * num + den) / (2 * den);
        prop_assert_eq!((shown * 100.0).round() as u64, want);
    }

    #[test]
    fn areas_partition_the_grid(w in 1usize..40, h in 1usize..40, seed in any::<u64>(), px in 1u32..40, workers in 1usize..6) {
        let mut rng = canopy::rng::SplitMix64::new(seed);
        let values: Vec<u8> = (0..w * h).map(|_| rng.below(7) as u8).collect();
        let grid = label_grid(w, h, values.clone(), px as f64);
        let a = category_areas(&grid, &LabelScheme::default(), workers).unwrap();
        let listed: u64 = a.categories.iter().map(|c| c.pixels).sum();
        prop_assert_eq!(listed + a.unlabelled_pixels + a.other_pixels, (w * h) as u64);
        prop_assert_eq!(a.unlabelled_pixels, values.iter().filter(|&&v| v == 0).count() as u64);
        prop_assert_eq!(a.other_pixels, values.iter().filter(|&&v| v > 4).count() as u64);
        let px_ha = Decimal::from(px * px) / Decimal::from(10_000);
        for c in &a.categories {
            prop_assert_eq!(c.area_ha, Decimal::from(c.pixels) * px_ha);
        }
        prop_assert_eq!(a, category_areas(&grid, &LabelScheme::default(), 1).unwrap());
    }

    #[test]
    fn carbon_is_linear_in_area(x in 0u64..10_000_000, y in 0u64..10_000_000) {
        let cfg = CarbonConfig::default();
        let (a, b) = (Decimal::new(x as i64, 2), Decimal::new(y as i64, 2));
        let sum = assess_carbon(a + b, &cfg).unwrap();
        prop_assert_eq!(sum, assess_carbon(a, &cfg).unwrap() + assess_carbon(b, &cfg).unwrap());
        prop_assert_eq!(assess_carbon(a, &cfg).unwrap(), a * cfg.removal_factor);
        let v = vehicle_equivalent(sum, &cfg);
        let exact = sum / cfg.vehicle_factor;
        prop_assert!((Decimal::from(v) - exact).abs() <= Decimal::new(5, 1));
    }

    #[test]
    fn split_counts_are_exact(counts in proptest::collection::vec(2usize..60, 1..5), frac in 0.05f64..0.95, seed in any::<u64>()) {
        let mut rows = Vec::new();
        for (k, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                let i = rows.len();
                rows.push(SampleRow { features: vec![i as f64], label: k as u8 + 1, source_index: i });
            }
        }
        let t = SampleTable::new(1, rows).unwrap();
        let (train, test) = stratified_split(&t, &SplitSpec { train_fraction: frac, seed, stratified: true }).unwrap();
        for (k, &n) in counts.iter().enumerate() {
            prop_assert_eq!(train.label_counts().get(&(k as u8 + 1)).copied().unwrap_or(0), train_count(frac, n));
        }
        let a: BTreeSet<usize> = train.rows().iter().map(|r| r.source_index).collect();
        let b: BTreeSet<usize> = test.rows().iter().map(|r| r.source_index).collect();
        prop_assert!(a.is_disjoint(&b));
        prop_assert_eq!(a.len() + b.len(), t.len());
        let again = stratified_split(&t, &SplitSpec { train_fraction: frac, seed, stratified: true }).unwrap();
        prop_assert_eq!(again.0, train);
    }
}

#[test]
fn default_split_of_1000_is_800_200() {
    let rows: Vec<SampleRow> = (0..1000)
        .map(|i| SampleRow { features: vec![i as f64], label: (i / 250) as u8 + 1, source_index: i })
        .collect();
    let t = SampleTable::new(1, rows).unwrap();
    let (train, test) = stratified_split(&t, &SplitSpec::default()).unwrap();
    assert_eq!((train.len(), test.len()), (800, 200));
    assert!(test.label_counts().values().all(|&n| n == 50));
    assert_eq!(train_count(0.29, 100), 29);
    let bad = SplitSpec { train_fraction: 1.0, ..SplitSpec::default() };
    assert_eq!(stratified_split(&t, &bad), Err(SamplingError::BadFraction(1.0)));
}

#[test]
fn evaluate_rejects_bad_input() {
    let s = LabelScheme::default();
    assert!(matches!(confusion_matrix(&[1, 2], &[1], &s), Err(EvaluateError::LengthMismatch { truth: 2, predicted: 1 })));
    assert!(matches!(confusion_matrix(&[], &[], &s), Err(EvaluateError::Empty)));
    assert!(matches!(confusion_matrix(&[1, 9], &[1, 1], &s), Err(EvaluateError::UnknownLabel { index: 1, code: 9 })));
}

#[test]
fn carbon_rejects_bad_input() {
    let cfg = CarbonConfig::default();
    assert!(matches!(assess_carbon(Decimal::from(-1), &cfg), Err(CarbonError::NegativeArea(_))));
    let zero = CarbonConfig { removal_factor: Decimal::ZERO, ..CarbonConfig::default() };
    assert!(matches!(assess_carbon(Decimal::ONE, &zero), Err(CarbonError::NonPositiveFactor(_))));
    let geo = label_grid(2, 2, vec![1; 4], 1.0).with_crs(CrsId::WGS84);
    assert!(matches!(category_areas(&geo, &LabelScheme::default(), 1), Err(CarbonError::NoMetricTransform(_))));
}

#[test]
fn scenes_are_deterministic_and_layout_ignores_noise() {
    let spec = SceneSpec::square(64, 7);
    let (img_a, truth_a) = generate_scene(&spec).unwrap();
    let (img_b, truth_b) = generate_scene(&spec).unwrap();
    assert_eq!((&img_a, &truth_a), (&img_b, &truth_b));
    let (img_noisy, truth_noisy) = generate_scene(&spec.clone().with_sigma(500.0)).unwrap();
    assert_eq!(truth_noisy, truth_a);
    assert_ne!(img_noisy, img_a);
    let (_, other) = generate_scene(&SceneSpec::square(64, 8)).unwrap();
    assert_ne!(other, truth_a);

    let scheme = spec.scheme();
    let pts = sample_points_from_truth(&truth_a, &scheme, 20, 3).unwrap();
    assert_eq!(pts.len(), 20 * scheme.len());
    let mut seen = BTreeSet::new();
    for f in &pts.features {
        let (r, c) = truth_a.locate(f.x, f.y).unwrap();
        assert!(seen.insert((r, c)), "duplicate pixel");
        assert_eq!(f.label(), Some(truth_a.get(0, r, c) as i64));
        assert_eq!(scheme.code_of(f.category().unwrap()), Some(truth_a.get(0, r, c) as u8));
    }
    assert_eq!(pts, sample_points_from_truth(&truth_a, &scheme, 20, 3).unwrap());
}
