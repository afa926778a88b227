use std::path::Path;

use openset::error::Error;
use openset::formats::{self, fmt_f64};
use openset_core::{FeatureVector, LabeledFeature};
use proptest::prelude::*;

fn write(dir: &Path, name: &str, text: &str) -> std::path::PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}

#[test]
fn two_record_file() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "identity,image,f0,f1\na,1,0.5,1e-3\nb,2,-1,2\n");
    let d = formats::read_feature_table(&p).unwrap();
    assert_eq!(d.len(), 2);
    assert_eq!(d.records()[0].feature.as_slice(), &[0.5, 1e-3]);
}

#[test]
fn wrong_column_count_cites_line() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "identity,image,f0,f1\na,1,0.5,1\nb,2,1\n");
    match formats::read_feature_table(&p).unwrap_err() {
        Error::Parse { line, .. } => assert_eq!(line, 3),
        e => panic!("{e}"),
    }
    let p = write(dir.path(), "g.csv", "identity,image,f0\na,1,x\n");
    assert!(matches!(
        formats::read_feature_table(&p).unwrap_err(),
        Error::Parse { line: 2, .. }
    ));
    let p = write(dir.path(), "h.csv", "name,image,f0\na,1,1\n");
    assert!(matches!(
        formats::read_feature_table(&p).unwrap_err(),
        Error::Parse { line: 1, .. }
    ));
}

#[test]
fn duplicate_rows_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "identity,image,f0\na,1,1\nb,1,1\na,1,2\n");
    let e = formats::read_feature_table(&p).unwrap_err();
    assert!(matches!(e, Error::Parse { line: 4, .. }), "{e}");
    assert_eq!(e.exit_code(), 2);
    assert_eq!(formats::read_feature_records(&p).unwrap().len(), 3);
}

#[test]
fn zero_and_nan_rows_fail_validation() {
    let dir = tempfile::tempdir().unwrap();
    let p = write(dir.path(), "f.csv", "identity,image,f0\na,1,0\n");
    assert!(formats::read_feature_table(&p).is_err());
    let p = write(dir.path(), "g.csv", "identity,image,f0\na,1,NaN\n");
    assert!(formats::read_feature_table(&p).is_err());
    let p = write(dir.path(), "h.csv", "identity,image,f0\na,0,1\n");
    assert!(formats::read_feature_table(&p).is_err());
}

#[test]
fn score_matrix_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let m = openset_core::ScoreMatrix::new(
        vec![openset_core::ImageKey::new("p", 4)],
        vec!["g1".into(), "g2".into()],
        vec![0.1, -0.75],
    )
    .unwrap();
    let p = dir.path().join("s.csv");
    formats::write_score_matrix(&p, &m).unwrap();
    assert_eq!(formats::read_score_matrix(&p).unwrap(), m);
}

fn finite_nonzero() -> impl Strategy<Value = f64> {
    prop_oneof![-1e6..1e6f64, any::<f64>().prop_filter("finite", |v| v.is_finite())]
        .prop_filter("nonzero", |v| *v != 0.0)
}

fn records() -> impl Strategy<Value = Vec<LabeledFeature>> {
    (1usize..5, 1usize..8).prop_flat_map(|(dim, n)| {
        proptest::collection::vec(
            ("[a-zA-Z0-9_]{1,6}", proptest::collection::vec(finite_nonzero(), dim)),
            n,
        )
        .prop_map(|rows| {
            rows.into_iter()
                .enumerate()
                .map(|(i, (id, v))| LabeledFeature::new(id, i as u32 + 1, FeatureVector::new(v)))
                .collect()
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn canonical_tables_round_trip_byte_for_byte(recs in records()) {
        let dir = tempfile::tempdir().unwrap();
        let a = dir.path().join("a.csv");
        let b = dir.path().join("b.csv");
        formats::write_feature_table(&a, &recs).unwrap();
        let back = formats::read_feature_table(&a).unwrap();
        prop_assert_eq!(back.records(), &recs[..]);
        formats::write_feature_table(&b, back.records()).unwrap();
        prop_assert_eq!(std::fs::read(&a).unwrap(), std::fs::read(&b).unwrap());
    }

    #[test]
    fn float_text_is_exact(v in any::<f64>().prop_filter("finite", |v| v.is_finite())) {
        prop_assert_eq!(fmt_f64(v).parse::<f64>().unwrap().to_bits(), v.to_bits());
    }
}
