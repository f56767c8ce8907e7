use std::path::PathBuf;

use msvr_forecast::harness::{ingest_csv, load_series, ExperimentManifest};
use msvr_forecast::Error;

fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

#[test]
fn header_columns_become_series() {
    let s = ingest_csv(&fixture("two_columns.csv")).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[0].id, "s1");
    assert_eq!(s[1].values(), &[4.0, 5.0, 6.0]);
}

#[test]
fn trailing_blanks_give_unequal_lengths() {
    let s = ingest_csv(&fixture("padded.csv")).unwrap();
    assert_eq!((s[0].len(), s[1].len()), (5, 3));
    assert_eq!(s[0].values()[4], 5.5);
}

#[test]
fn row_labels_switch_orientation() {
    let s = ingest_csv(&fixture("rows.csv")).unwrap();
    assert_eq!(s.len(), 2);
    assert_eq!(s[0].id, "n1");
    assert_eq!(s[0].values(), &[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(s[1].values(), &[5.0, 6.0]);
}

#[test]
fn headerless_columns_are_numbered() {
    let s = ingest_csv(&fixture("no_header.csv")).unwrap();
    assert_eq!(s.iter().map(|x| x.id.as_str()).collect::<Vec<_>>(), vec!["s1", "s2"]);
}

#[test]
fn bad_cells_report_coordinates() {
    match ingest_csv(&fixture("bad_cell.csv")) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 2)),
        other => panic!("expected a parse error, got {other:?}"),
    }
    match ingest_csv(&fixture("gap.csv")) {
        Err(Error::Parse { row, column, .. }) => assert_eq!((row, column), (3, 1)),
        other => panic!("expected a parse error, got {other:?}"),
    }
}

#[test]
fn empty_file_is_an_error() {
    assert!(ingest_csv(&fixture("empty.csv")).is_err());
}

#[test]
fn manifest_paths_resolve_against_the_manifest() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::copy(fixture("padded.csv"), dir.path().join("data.csv")).unwrap();
    let path = dir.path().join("m.toml");
    std::fs::write(&path, "[[series]]\nkind = \"csv\"\npath = \"data.csv\"\nperiod = 2\n").unwrap();
    let m = ExperimentManifest::load(&path).unwrap();
    let loaded: Vec<_> = load_series(&m).into_iter().map(Result::unwrap).collect();
    assert_eq!(loaded.len(), 2);
    assert!(loaded.iter().all(|s| s.period == Some(2)));
}
