use std::io::Write;
use std::path::PathBuf;

use jedi::csvio::{load_csv, read_examples, write_examples};
use jedi::Error;
use jedi_core::model::{Example, Label};

fn file(dir: &tempfile::TempDir, name: &str, body: &str) -> PathBuf {
    let p = dir.path().join(name);
    std::fs::File::create(&p).unwrap().write_all(body.as_bytes()).unwrap();
    p
}

#[test]
fn minimal_table_round_trips_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let p = file(&dir, "a.csv", "id,label,f1,f2\na,1,0.1,-2.5e-3\nb,-1,3,0.30000000000000004\n");
    let ex = read_examples(&p).unwrap();
    assert_eq!(ex.len(), 2);
    assert_eq!(ex[0].y, Label::Pos);
    assert_eq!(ex[1].x, vec![3.0, 0.30000000000000004]);
    let q = dir.path().join("b.csv");
    write_examples(&q, &ex).unwrap();
    assert_eq!(read_examples(&q).unwrap(), ex);
}

#[test]
fn zero_labels_read_as_negative_and_payload_is_kept() {
    let dir = tempfile::tempdir().unwrap();
    let p = file(&dir, "a.csv", "id,label,f1,payload\na,1,1.0,img/a.png\nb,0,-1.0,img/b.png\n");
    let ex = read_examples(&p).unwrap();
    assert_eq!(ex[1].y, Label::Neg);
    assert_eq!(ex[0].payload.as_deref(), Some("img/a.png"));
    let q = dir.path().join("b.csv");
    write_examples(&q, &ex).unwrap();
    assert_eq!(read_examples(&q).unwrap(), ex);
}

#[test]
fn duplicate_id_reports_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let p = file(&dir, "a.csv", "id,label,f1\na,1,1\nb,-1,2\na,-1,3\n");
    match read_examples(&p) {
        Err(Error::Csv { row, msg, .. }) => {
            assert_eq!(row, 4);
            assert!(msg.contains("duplicate id `a`") && msg.contains("row 2"), "{msg}");
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn malformed_tables_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("ragged", "id,label,f1,f2\na,1,1,2\nb,-1,3\n", 3),
        ("text", "id,label,f1\na,1,1\nb,-1,x\n", 3),
        ("badlabel", "id,label,f1\na,2,1\nb,-1,1\n", 2),
        ("header", "name,label,f1\na,1,1\n", 1),
    ];
    for (name, body, want) in cases {
        let p = file(&dir, &format!("{name}.csv"), body);
        match read_examples(&p) {
            Err(Error::Csv { row, .. }) => assert_eq!(row, want, "{name}"),
            other => panic!("{name}: {other:?}"),
        }
    }
    let p = file(&dir, "one.csv", "id,label,f1\na,1,1\nb,1,2\n");
    assert!(matches!(read_examples(&p), Err(Error::Validation(_))));
    assert!(read_examples(&dir.path().join("missing.csv")).is_err());
}

#[test]
fn normalized_rows_are_detected_as_unit_sphere() {
    let dir = tempfile::tempdir().unwrap();
    let s = 0.5f64.sqrt();
    let p = file(&dir, "u.csv", &format!("id,label,f1,f2\na,1,{s:?},{s:?}\nb,-1,0,-1\nc,1,1,0\n"));
    let (pool, report) = load_csv(&p).unwrap();
    assert!(report.unit_sphere && report.max_unit_deviation < 1e-12);
    assert_eq!((report.dimension, report.positives, report.negatives), (2, 2, 1));
    assert!(pool.unit_sphere());
    let p = file(&dir, "n.csv", "id,label,f1,f2\na,1,2,0\nb,-1,0,-1\n");
    let (_, report) = load_csv(&p).unwrap();
    assert!(!report.unit_sphere);
    assert!((report.max_unit_deviation - 1.0).abs() < 1e-12);
}

#[test]
fn written_payloads_stay_optional() {
    let dir = tempfile::tempdir().unwrap();
    let mut ex = vec![Example::new("a", vec![1.0], Label::Pos), Example::new("b", vec![-1.0], Label::Neg)];
    ex[0].payload = Some("a.png".into());
    let q = dir.path().join("p.csv");
    write_examples(&q, &ex).unwrap();
    assert_eq!(read_examples(&q).unwrap(), ex);
}
