use std::fs;

use hetgibbs::io::{load_csv, parse_number, read_table, Selection};
use hetgibbs_core::design::Column;

fn selection(cols: &[&str]) -> Selection {
    Selection {
        response: "y".into(),
        columns: cols.iter().map(|c| c.to_string()).collect(),
        ..Selection::default()
    }
}

#[test]
fn header_only_file_is_an_error() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("h.csv");
    fs::write(&p, "y,x\n").unwrap();
    assert!(read_table(&p).is_err());
}

#[test]
fn text_columns_become_categorical() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "y,g,x\n1,a,1e3\n2,b,2\n3,a,-0.5\n").unwrap();
    let rep = load_csv(&p, &selection(&["g", "x"])).unwrap();
    match rep.dataset.column("g") {
        Some(Column::Categorical(v)) => {
            let mut levels = v.clone();
            levels.sort();
            levels.dedup();
            assert_eq!(levels, ["a", "b"]);
        }
        other => panic!("{other:?}"),
    }
    match rep.dataset.column("x") {
        Some(Column::Numeric(v)) => assert_eq!(v[0], 1000.0),
        other => panic!("{other:?}"),
    }
}

#[test]
fn rows_with_missing_cells_are_dropped() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "y,x,unused\n1,1,\n,2,3\n3,,3\n4,4,4\n").unwrap();
    let rep = load_csv(&p, &selection(&["x"])).unwrap();
    assert_eq!(rep.rows_read, 4);
    assert_eq!(rep.rows_dropped, 2);
    assert_eq!(rep.dataset.y(), &[1.0, 4.0][..]);
}

#[test]
fn unknown_column_is_named() {
    let dir = tempfile::tempdir().unwrap();
    let p = dir.path().join("d.csv");
    fs::write(&p, "y,x\n1,2\n").unwrap();
    let err = load_csv(&p, &selection(&["xx"])).unwrap_err();
    assert!(err.to_string().contains("xx"), "{err}");
}

#[test]
fn number_parsing() {
    assert_eq!(parse_number("1e3"), Some(1000.0));
    assert_eq!(parse_number(" -2.5 "), Some(-2.5));
    assert_eq!(parse_number("inf"), None);
    assert_eq!(parse_number("abc"), None);
}
