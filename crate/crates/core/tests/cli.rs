use std::path::Path;
use std::process::Command;

fn wsss(args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_wsss"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) {
    let out = wsss(args);
    assert!(
        out.status.success(),
        "{args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn usage_error_exits_two() {
    let out = wsss(&["segment-slice", "--out", "x"]);
    assert_eq!(out.status.code(), Some(2));
    let out = wsss(&["no-such-command"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn missing_annotation_exits_one() {
    let dir = tempfile::tempdir().unwrap();
    let missing = dir.path().join("none.csv");
    let out = wsss(&["grabcut-3de", "--annotation", s(&missing), "--out", s(dir.path())]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
}

#[test]
fn phantom_gen_is_deterministic() {
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    ok(&["phantom-gen", "--n", "2", "--out", s(a.path()), "--seed", "9"]);
    ok(&["phantom-gen", "--n", "2", "--out", s(b.path()), "--seed", "9"]);
    let mut names: Vec<_> = std::fs::read_dir(a.path())
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert_eq!(names.len(), 2 * 3 + 1, "{names:?}");
    for name in names {
        assert_eq!(
            std::fs::read(a.path().join(&name)).unwrap(),
            std::fs::read(b.path().join(&name)).unwrap(),
            "{name:?} differs"
        );
    }
}

#[test]
fn pipeline_outputs_parse() {
    let dir = tempfile::tempdir().unwrap();
    let d = |x: &str| dir.path().join(x);
    let (train, test) = (d("train"), d("test"));
    let (train_csv, test_csv) = (train.join("annotations.csv"), test.join("annotations.csv"));
    ok(&["phantom-gen", "--n", "4", "--out", s(&train)]);
    ok(&["phantom-gen", "--n", "3", "--out", s(&test), "--seed", "43", "--prefix", "t_"]);
    ok(&[
        "train", "--annotation", s(&train_csv), "--k-slices", "3", "--epochs", "4",
        "--out", s(&d("model.bin")), "--checkpoint-dir", s(&d("ckpt")),
    ]);
    assert!(d("ckpt/stage_0/model.bin").is_file());
    assert!(d("ckpt/stage_1/model.bin").is_file());

    ok(&["segment-slice", "--annotation", s(&test_csv), "--method", "grabcut-i", "--out", s(&d("slice"))]);
    ok(&["grabcut-3de", "--annotation", s(&test_csv), "--out", s(&d("g3")), "--jobs", "2"]);
    ok(&[
        "segment-volume", "--annotation", s(&test_csv), "--model", s(&d("model.bin")),
        "--out", s(&d("vol")),
    ]);
    ok(&[
        "evaluate", "--annotation", s(&test_csv), "--pred-dir", s(&d("vol")),
        "--scope", "both", "--out", s(&d("metrics.csv")),
    ]);
    let mut rd = csv::Reader::from_path(d("metrics.csv")).unwrap();
    assert_eq!(
        rd.headers().unwrap(),
        vec!["lesion_id", "scope", "dice", "precision", "recall"]
    );
    let rows: Vec<csv::StringRecord> = rd.records().map(|r| r.unwrap()).collect();
    assert_eq!(rows.len(), 6);
    for r in &rows {
        assert!(r[0].starts_with("t_"));
        assert!(["SLICE", "VOLUME"].contains(&&r[1]), "{r:?}");
        for k in 2..5 {
            let v: f64 = r[k].parse().unwrap();
            assert!((0.0..=1.0).contains(&v));
        }
    }

    ok(&[
        "pr-curve", "--annotation", s(&test_csv), "--model", s(&d("model.bin")),
        "--thresholds", "11", "--out", s(&d("pr.csv")),
    ]);
    let recalls: Vec<f64> = csv::Reader::from_path(d("pr.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap()[2].parse().unwrap())
        .collect();
    assert_eq!(recalls.len(), 11);
    assert!(recalls.windows(2).all(|w| w[1] <= w[0]));

    ok(&[
        "offset-curve", "--annotation", s(&test_csv), "--model", s(&d("model.bin")),
        "--max-offset", "2", "--out", s(&d("offsets.csv")),
    ]);
    let rows: Vec<csv::StringRecord> = csv::Reader::from_path(d("offsets.csv"))
        .unwrap()
        .records()
        .map(|r| r.unwrap())
        .collect();
    let methods: std::collections::BTreeSet<&str> = rows.iter().map(|r| r.get(1).unwrap()).collect();
    assert_eq!(methods.len(), 2);
    assert!(methods.contains("grabcut-3de"));
    assert!(rows.iter().all(|r| r[0].parse::<i64>().unwrap().abs() <= 2));
}
