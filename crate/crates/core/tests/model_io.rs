use std::fs;

use jico::io::write_dataset;
use jico::{
    fit, load_model, predict, read_dataset, save_model, CenteringMode, FitOptions, Gamma, Group,
    GroupedDataset, JicoError,
};
use nalgebra::{DMatrix, DVector};

/// Deterministic full-rank filler.
fn noise(seed: usize, i: usize, j: usize) -> f64 {
    let v = ((seed * 7919 + i * 131 + j * 17) as f64 * 12.9898).sin() * 43758.5453;
    v - v.floor() - 0.5
}

fn dataset() -> GroupedDataset {
    let x1 = DMatrix::from_fn(15, 8, |i, j| noise(1, i, j) + 0.3);
    let x2 = DMatrix::from_fn(11, 8, |i, j| noise(2, i, j));
    let y1 = DVector::from_fn(15, |i, _| x1[(i, 0)] - x1[(i, 3)] + 0.1 * noise(3, i, 0));
    let y2 = DVector::from_fn(11, |i, _| 2.0 * x2[(i, 1)] + 0.05 * noise(4, i, 0));
    GroupedDataset::new(vec![
        Group::new("north", x1, y1),
        Group::new("south", x2, y2),
    ])
    .unwrap()
}

#[test]
fn saved_models_reload_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let opts = FitOptions::new(Gamma::from_a(0.3).unwrap(), 1, vec![1, 2])
        .with_centering(CenteringMode::PerGroup);
    let model = fit(&data, &opts).unwrap();
    let first = dir.path().join("first.json");
    let second = dir.path().join("second.json");
    save_model(&model, &data.labels(), &first).unwrap();
    let (loaded, labels) = load_model(&first).unwrap();
    assert_eq!(labels, data.labels());
    save_model(&loaded, &labels, &second).unwrap();
    assert_eq!(fs::read(&first).unwrap(), fs::read(&second).unwrap());
    for g in 0..data.n_groups() {
        let x = &data.group(g).x;
        assert_eq!(
            predict(&model, x, g).unwrap(),
            predict(&loaded, x, g).unwrap()
        );
    }
}

#[test]
fn infinite_gamma_survives_a_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let model = fit(&data, &FitOptions::new(Gamma::PCR, 1, vec![0, 1])).unwrap();
    let path = dir.path().join("pcr.json");
    save_model(&model, &data.labels(), &path).unwrap();
    let (loaded, _) = load_model(&path).unwrap();
    assert!(loaded.gamma.is_infinite());
}

#[test]
fn corrupted_model_files_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let model = fit(&data, &FitOptions::new(Gamma::PLS, 1, vec![1, 1])).unwrap();
    let path = dir.path().join("m.json");
    save_model(&model, &data.labels(), &path).unwrap();
    let mut json: serde_json::Value = serde_json::from_slice(&fs::read(&path).unwrap()).unwrap();
    json["format_version"] = serde_json::json!(99);
    fs::write(&path, serde_json::to_vec(&json).unwrap()).unwrap();
    assert!(load_model(&path).is_err());
    fs::write(&path, b"{ not json").unwrap();
    assert!(load_model(&path).is_err());
}

#[test]
fn datasets_round_trip_through_csv() {
    let dir = tempfile::tempdir().unwrap();
    let data = dataset();
    let path = dir.path().join("d.csv");
    let mut bytes = Vec::new();
    write_dataset(&data, &mut bytes).unwrap();
    fs::write(&path, bytes).unwrap();
    let back = read_dataset(&path).unwrap();
    assert_eq!(back.labels(), data.labels());
    for g in 0..data.n_groups() {
        assert_eq!(back.group(g).x, data.group(g).x);
        assert_eq!(back.group(g).y, data.group(g).y);
    }
}

#[test]
fn missing_files_are_io_errors() {
    let err = read_dataset(std::path::Path::new("/nonexistent/never.csv")).unwrap_err();
    assert!(matches!(err, JicoError::Io(_)), "{err:?}");
}
