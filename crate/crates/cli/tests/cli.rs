use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use jico::io::{read_matrix, write_dataset};
use jico::{decompose, identifiability_report, load_model, predict, Group, GroupedDataset};
use nalgebra::{DMatrix, DVector};

fn noise(seed: usize, i: usize, j: usize) -> f64 {
    let v = ((seed * 7919 + i * 131 + j * 17) as f64 * 12.9898).sin() * 43758.5453;
    v - v.floor() - 0.5
}

fn dataset() -> GroupedDataset {
    let groups = [("alpha", 18usize), ("beta two", 14)]
        .iter()
        .enumerate()
        .map(|(s, &(label, n))| {
            let x = DMatrix::from_fn(n, 6, |i, j| noise(s + 1, i, j) + 0.2 * s as f64);
            let y = DVector::from_fn(n, |i, _| {
                x[(i, 0)] - 0.7 * x[(i, 2)] + 0.3 * s as f64 + 0.05 * noise(9, i, s)
            });
            Group::new(label, x, y)
        })
        .collect();
    GroupedDataset::new(groups).unwrap()
}

fn write_data(dir: &Path, data: &GroupedDataset) -> PathBuf {
    let path = dir.join("data.csv");
    let mut bytes = Vec::new();
    write_dataset(data, &mut bytes).unwrap();
    fs::write(&path, bytes).unwrap();
    path
}

fn jico(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_jico"))
        .args(args)
        .output()
        .unwrap()
}

fn ok(args: &[&str]) -> String {
    let out = jico(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn fails(args: &[&str]) -> String {
    let out = jico(args);
    assert!(!out.status.success(), "{args:?} unexpectedly succeeded");
    String::from_utf8(out.stderr).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn predictions_reproduce_fitted_values() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let csv = write_data(dir.path(), &data);
    let model_path = dir.path().join("m.json");
    let report = ok(&[
        "fit",
        "--data",
        s(&csv),
        "--K",
        "1",
        "--Kg",
        "1",
        "--a",
        "0.4",
        "--out",
        s(&model_path),
    ]);
    assert!(report.contains("in-sample MSE"), "{report}");
    let preds = dir.path().join("p.csv");
    ok(&[
        "predict",
        "--model",
        s(&model_path),
        "--data",
        s(&csv),
        "--out",
        s(&preds),
    ]);

    let (model, labels) = load_model(&model_path).unwrap();
    let text = fs::read_to_string(&preds).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("row,group,prediction"));
    let mut expected = Vec::new();
    for (g, grp) in data.groups().iter().enumerate() {
        assert_eq!(labels[g], grp.label);
        for v in predict(&model, &grp.x, g).unwrap().iter() {
            expected.push((grp.label.clone(), *v));
        }
    }
    let got: Vec<(String, f64)> = lines
        .map(|l| {
            let f: Vec<&str> = l.split(',').collect();
            (f[1].to_string(), f[2].parse().unwrap())
        })
        .collect();
    assert_eq!(got.len(), expected.len());
    for ((gl, gv), (el, ev)) in got.iter().zip(&expected) {
        assert_eq!(gl, el);
        assert!((gv - ev).abs() <= 1e-12 * (1.0 + ev.abs()), "{gv} vs {ev}");
    }
}

#[test]
fn unknown_groups_are_rejected_at_prediction() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_data(dir.path(), &dataset());
    let model_path = dir.path().join("m.json");
    ok(&["fit", "--data", s(&csv), "--out", s(&model_path)]);
    let features = dir.path().join("new.csv");
    fs::write(&features, "group,f1,f2,f3,f4,f5,f6\ngamma,0,0,0,0,0,0\n").unwrap();
    let err = fails(&["predict", "--model", s(&model_path), "--data", s(&features)]);
    assert!(err.contains("gamma"), "{err}");
}

#[test]
fn malformed_rows_report_their_line() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.csv");
    fs::write(&bad, "group,y,f1,f2\na,1,2,3\na,1,oops,3\n").unwrap();
    let err = fails(&[
        "fit",
        "--data",
        s(&bad),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert!(err.contains("line 3"), "{err}");
    fs::write(&bad, "group,y,f1,f2\na,1,2,3\na,1,NaN,3\n").unwrap();
    let err = fails(&[
        "fit",
        "--data",
        s(&bad),
        "--out",
        s(&dir.path().join("m.json")),
    ]);
    assert!(err.contains("line 3"), "{err}");
}

#[test]
fn null_model_predicts_group_means() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let csv = write_data(dir.path(), &data);
    let model_path = dir.path().join("m.json");
    let report = ok(&[
        "fit",
        "--data",
        s(&csv),
        "--K",
        "0",
        "--Kg",
        "0",
        "--centering",
        "per-group",
        "--out",
        s(&model_path),
    ]);
    assert!(report.contains("null model"), "{report}");
    let (model, _) = load_model(&model_path).unwrap();
    for (g, grp) in data.groups().iter().enumerate() {
        let pred = predict(&model, &grp.x, g).unwrap();
        for v in pred.iter() {
            assert!((v - grp.y.mean()).abs() < 1e-12);
        }
    }
}

#[test]
fn decompositions_reload_bit_for_bit() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let csv = write_data(dir.path(), &data);
    let model_path = dir.path().join("m.json");
    ok(&[
        "fit",
        "--data",
        s(&csv),
        "--K",
        "1",
        "--Kg",
        "1,2",
        "--a",
        "0.6",
        "--out",
        s(&model_path),
    ]);
    let out = dir.path().join("parts");
    ok(&[
        "decompose",
        "--model",
        s(&model_path),
        "--data",
        s(&csv),
        "--out-dir",
        s(&out),
    ]);

    let (model, _) = load_model(&model_path).unwrap();
    let parts = decompose(&model, &data).unwrap();
    let ident = identifiability_report(&model, &data).unwrap();
    for (g, stem) in ["alpha", "beta_two"].iter().enumerate() {
        let read = |name: &str, cols: usize| {
            read_matrix(fs::File::open(out.join(name)).unwrap(), cols).unwrap()
        };
        assert_eq!(read(&format!("J_{stem}.csv"), 6), parts[g].joint);
        assert_eq!(read(&format!("A_{stem}.csv"), 6), parts[g].individual);
        assert_eq!(
            read(&format!("J_Y_{stem}.csv"), 1).column(0),
            parts[g].joint_response.column(0)
        );
        assert_eq!(
            read(&format!("A_Y_{stem}.csv"), 1).column(0),
            parts[g].individual_response.column(0)
        );
    }
    let sidecar: serde_json::Value = serde_json::from_str(
        &fs::read_to_string(out.join("decomposition_diagnostics.json")).unwrap(),
    )
    .unwrap();
    for (g, entry) in sidecar["groups"].as_array().unwrap().iter().enumerate() {
        assert_eq!(
            entry["identifiability"],
            serde_json::to_value(ident[g]).unwrap()
        );
    }
}

#[test]
fn joint_free_models_have_zero_joint_parts() {
    let dir = tempfile::tempdir().unwrap();
    let csv = write_data(dir.path(), &dataset());
    let model_path = dir.path().join("m.json");
    ok(&[
        "fit",
        "--data",
        s(&csv),
        "--K",
        "0",
        "--Kg",
        "1",
        "--out",
        s(&model_path),
    ]);
    let out = dir.path().join("parts");
    ok(&[
        "decompose",
        "--model",
        s(&model_path),
        "--data",
        s(&csv),
        "--out-dir",
        s(&out),
    ]);
    let joint = read_matrix(fs::File::open(out.join("J_alpha.csv")).unwrap(), 6).unwrap();
    assert_eq!(joint.nrows(), 18);
    assert!(joint.iter().all(|&v| v == 0.0));
}

#[test]
fn simulation_requires_a_seed_and_a_known_setting() {
    let dir = tempfile::tempdir().unwrap();
    let d = s(dir.path());
    fails(&[
        "simulate",
        "--setting",
        "pls",
        "--reps",
        "1",
        "--out-dir",
        d,
    ]);
    let err = fails(&[
        "simulate",
        "--setting",
        "nope",
        "--reps",
        "1",
        "--seed",
        "1",
        "--out-dir",
        d,
    ]);
    assert!(err.contains("nope"), "{err}");
}
