use std::fs;
use std::path::Path;

use conbatch::data::{
    gen_synthetic, grid_cell, load_dataset, validate_dir, write_dataset, Dataset, FindingKind,
    GeoBox, GeoPoint, Severity, SplitState, SynthSpec, EMBEDDINGS_FILE, METADATA_FILE,
};
use conbatch::Error;
use proptest::prelude::*;

fn spec(n: usize) -> SynthSpec {
    SynthSpec {
        n_samples: n,
        dim: 3,
        class_count: 4,
        cluster_spread: 0.7,
        geo_bbox: GeoBox {
            lat_min: 51.90,
            lat_max: 51.95,
            lon_min: 4.40,
            lon_max: 4.50,
        },
        area_grid: (4, 4),
        split_fractions: (0.1, 0.3, 0.6),
        geo_hotspots: None,
    }
}

fn rewrite_metadata(dir: &Path, f: impl Fn(usize, &mut Vec<String>)) {
    let path = dir.join(METADATA_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    let mut out = vec![lines.next().unwrap().to_owned()];
    for (i, line) in lines.enumerate() {
        let mut cells: Vec<String> = line.split(',').map(str::to_owned).collect();
        f(i, &mut cells);
        out.push(cells.join(","));
    }
    fs::write(&path, out.join("\n") + "\n").unwrap();
}

#[test]
fn round_trip_preserves_every_field() {
    let (ds, split) = gen_synthetic(&spec(120), 3).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    let (back, back_split) = load_dataset(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back_split, split);
    let bits = |d: &Dataset| d.embeddings.iter().map(|v| v.to_bits()).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&ds));
    let blob = fs::read(dir.path().join(EMBEDDINGS_FILE)).unwrap();
    assert_eq!(blob.len(), 120 * 3 * 4);
}

#[test]
fn truncated_blob_is_a_dimension_mismatch() {
    let (ds, split) = gen_synthetic(&spec(50), 1).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    let path = dir.path().join(EMBEDDINGS_FILE);
    let mut blob = fs::read(&path).unwrap();
    blob.truncate(blob.len() - 4);
    fs::write(&path, blob).unwrap();
    assert!(matches!(
        load_dataset(dir.path()),
        Err(Error::DimensionMismatch(_))
    ));
    let report = validate_dir(dir.path());
    assert!(report
        .findings
        .iter()
        .any(|f| f.kind == FindingKind::DimensionMismatch));
}

#[test]
fn label_equal_to_class_count_is_an_error() {
    let (ds, split) = gen_synthetic(&spec(40), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    rewrite_metadata(dir.path(), |i, cells| {
        if i == 7 {
            cells[3] = "4".into();
        }
    });
    let report = validate_dir(dir.path());
    assert!(report.has_errors());
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::LabelRange)
        .unwrap();
    assert!(f.message.contains("row 7"), "{}", f.message);
    assert!(load_dataset(dir.path()).is_err());
}

#[test]
fn row_count_mismatch_reports_both_counts() {
    let (ds, split) = gen_synthetic(&spec(40), 2).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    let path = dir.path().join(METADATA_FILE);
    let text = fs::read_to_string(&path).unwrap();
    let kept: Vec<&str> = text.lines().take(40).collect();
    fs::write(&path, kept.join("\n") + "\n").unwrap();
    let report = validate_dir(dir.path());
    assert!(report.has_errors());
    let f = report
        .findings
        .iter()
        .find(|f| f.kind == FindingKind::DimensionMismatch && f.message.contains("metadata"))
        .unwrap();
    assert!(
        f.message.contains("39") && f.message.contains("40"),
        "{}",
        f.message
    );
}

#[test]
fn missing_files_are_listed() {
    let dir = tempfile::tempdir().unwrap();
    let report = validate_dir(dir.path());
    assert_eq!(
        report
            .findings
            .iter()
            .filter(|f| f.kind == FindingKind::MissingFile)
            .count(),
        3
    );
    assert!(report.summary.is_none());
    assert!(matches!(
        load_dataset(dir.path()),
        Err(Error::MissingFile(_))
    ));
}

#[test]
fn duplicate_ids_and_bad_coordinates_are_errors() {
    let (ds, split) = gen_synthetic(&spec(30), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    rewrite_metadata(dir.path(), |i, cells| {
        if i == 5 {
            cells[0] = "s4".into();
        }
        if i == 6 {
            cells[1] = "95.0".into();
        }
    });
    let report = validate_dir(dir.path());
    let kinds: Vec<FindingKind> = report
        .findings
        .iter()
        .filter(|f| f.severity == Severity::Error)
        .map(|f| f.kind)
        .collect();
    assert!(kinds.contains(&FindingKind::DuplicateId));
    assert!(kinds.contains(&FindingKind::Coordinates));
}

#[test]
fn unknown_split_name_is_an_error() {
    let (ds, split) = gen_synthetic(&spec(30), 4).unwrap();
    let dir = tempfile::tempdir().unwrap();
    write_dataset(&ds, &split, dir.path()).unwrap();
    rewrite_metadata(dir.path(), |i, cells| {
        if i == 0 {
            cells[4] = "holdout".into();
        }
    });
    assert!(validate_dir(dir.path()).has_errors());
}

#[test]
fn build6k_layout_summary() {
    // a stand-in with the published build6k counts and a tiny embedding
    let n = 5999;
    let mut ds = Dataset {
        dim: 2,
        embeddings: (0..n * 2).map(|i| (i % 7) as f32).collect(),
        labels: (0..n).map(|i| i % 2).collect(),
        geoloc: (0..n)
            .map(|i| {
                GeoPoint::new(
                    51.9 + (i % 100) as f64 * 1e-4,
                    4.4 + (i / 100) as f64 * 1e-4,
                )
            })
            .collect(),
        area_id: vec![None; n],
        class_count: 2,
        class_names: vec!["no_damage".into(), "damage".into()],
        ids: (0..n).map(|i| format!("b{i}")).collect(),
    };
    ds.area_id = (0..n).map(|i| Some((i % 9) as u32)).collect();
    let split = SplitState::new(
        (0..30).collect(),
        (30..1530).collect(),
        (1530..n).collect(),
        n,
    )
    .unwrap();
    let root = tempfile::tempdir().unwrap();
    let dir = root.path().join("build6k");
    write_dataset(&ds, &split, &dir).unwrap();
    let report = validate_dir(&dir);
    assert!(report.findings.is_empty(), "{:?}", report.findings);
    let s = report.summary.unwrap();
    assert_eq!(
        (s.classes, s.samples, s.train, s.test, s.pool),
        (2, 5999, 30, 1500, 4469)
    );
    assert_eq!(
        s.to_string(),
        "build6k      classes=2   samples=5999   train=30    test=1500  pool=4469"
    );

    // a different split under the same name draws a layout warning only
    let other = SplitState::new(
        (0..31).collect(),
        (31..1530).collect(),
        (1530..n).collect(),
        n,
    )
    .unwrap();
    write_dataset(&ds, &other, &dir).unwrap();
    let report = validate_dir(&dir);
    assert!(!report.has_errors());
    assert!(report
        .findings
        .iter()
        .any(|f| f.kind == FindingKind::Layout));
}

#[test]
fn synthetic_generation_is_deterministic() {
    let a = gen_synthetic(&spec(90), 11).unwrap();
    let b = gen_synthetic(&spec(90), 11).unwrap();
    assert_eq!(a, b);
    let c = gen_synthetic(&spec(90), 12).unwrap();
    assert_ne!(a.0.embeddings, c.0.embeddings);
}

#[test]
fn synthetic_areas_follow_the_grid() {
    let s = spec(400);
    let (ds, _) = gen_synthetic(&s, 5).unwrap();
    for (p, a) in ds.geoloc.iter().zip(&ds.area_id) {
        let r = ((p.lat - 51.90) / 0.05 * 4.0).floor().clamp(0.0, 3.0) as u32;
        let c = ((p.lon - 4.40) / 0.10 * 4.0).floor().clamp(0.0, 3.0) as u32;
        assert_eq!(a.unwrap(), r * 4 + c);
    }
    let center = GeoPoint::new(51.925, 4.45);
    assert_eq!(grid_cell(&s.geo_bbox, (4, 4), center), 10);
    assert_eq!(
        grid_cell(&s.geo_bbox, (4, 4), GeoPoint::new(51.95, 4.50)),
        15
    );
    assert_eq!(
        grid_cell(&s.geo_bbox, (4, 4), GeoPoint::new(51.90, 4.40)),
        0
    );
}

#[test]
fn split_fractions_must_sum_to_one() {
    let bad = SynthSpec {
        split_fractions: (0.5, 0.5, 0.5),
        ..spec(10)
    };
    assert!(gen_synthetic(&bad, 0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn acquisition_conserves_the_sample_count(seed in any::<u64>(), picks in proptest::collection::vec(any::<prop::sample::Index>(), 0..10)) {
        let (_, split) = gen_synthetic(&spec(60), seed).unwrap();
        let mut batch: Vec<usize> = picks.iter().map(|ix| split.pool_idx[ix.index(split.pool_idx.len())]).collect();
        batch.sort_unstable();
        batch.dedup();
        let next = split.apply_acquisition(&batch).unwrap();
        prop_assert_eq!(next.total(), split.total());
        prop_assert_eq!(next.train_idx.len(), split.train_idx.len() + batch.len());
        prop_assert_eq!(&next.test_idx, &split.test_idx);
        for b in &batch {
            prop_assert!(!next.pool_idx.contains(b));
        }
        let mut all: Vec<usize> = next.train_idx.iter().chain(&next.test_idx).chain(&next.pool_idx).copied().collect();
        all.sort_unstable();
        prop_assert_eq!(all, (0..60).collect::<Vec<_>>());
    }

    #[test]
    fn acquiring_outside_the_pool_fails(seed in any::<u64>()) {
        let (_, split) = gen_synthetic(&spec(60), seed).unwrap();
        let t = split.test_idx[0];
        prop_assert!(matches!(split.apply_acquisition(&[t]), Err(Error::NotInPool(i)) if i == t));
        let p = split.pool_idx[0];
        prop_assert!(split.apply_acquisition(&[p, p]).is_err());
    }
}
