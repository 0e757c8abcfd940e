use std::fs;
use std::path::Path;

use gaugeatlas::SampleMatrix;
use gaugeatlas_cli::ingest::{encode_matrix, load_dataset, read_matrix, write_dataset, Dtype, IngestError};
use proptest::prelude::*;

fn f32_bytes(values: &[f32]) -> Vec<u8> {
    values.iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn manifest(dir: &Path, body: &str) -> std::path::PathBuf {
    let p = dir.join("m.json");
    fs::write(&p, body).unwrap();
    p
}

#[test]
fn four_by_three_f32_loads() {
    let dir = tempfile::tempdir().unwrap();
    let values: Vec<f32> = (0..12).map(|i| i as f32 * 0.5 - 2.0).collect();
    let bytes = f32_bytes(&values);
    assert_eq!(bytes.len(), 48);
    fs::write(dir.path().join("a.bin"), bytes).unwrap();
    let m = manifest(dir.path(), r#"{"n_samples": 4, "dim": 3, "dtype": "f32", "activations_path": "a.bin"}"#);
    let ds = load_dataset(&m).unwrap();
    assert_eq!((ds.activations.rows(), ds.activations.cols()), (4, 3));
    assert_eq!(ds.activations.row(2), &[1.0, 1.5, 2.0]);
    assert!(ds.gradients.is_none());
}

#[test]
fn short_file_is_a_format_error() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.bin"), vec![0u8; 40]).unwrap();
    let m = manifest(dir.path(), r#"{"n_samples": 4, "dim": 3, "dtype": "f32", "activations_path": "a.bin"}"#);
    let err = load_dataset(&m).unwrap_err();
    assert!(matches!(err, IngestError::DataFormat(_)), "{err}");
    assert!(err.to_string().contains("40 bytes"));
}

#[test]
fn nan_reports_its_row() {
    let dir = tempfile::tempdir().unwrap();
    let mut values = vec![1.0f32; 12];
    values[2 * 3 + 1] = f32::NAN;
    fs::write(dir.path().join("a.bin"), f32_bytes(&values)).unwrap();
    let m = manifest(dir.path(), r#"{"n_samples": 4, "dim": 3, "dtype": "f32", "activations_path": "a.bin"}"#);
    let err = load_dataset(&m).unwrap_err();
    assert_eq!(err.row(), Some(2));
    let mut values = vec![0.0f64; 12];
    values[11] = f64::INFINITY;
    let bytes: Vec<u8> = values.iter().flat_map(|v| v.to_le_bytes()).collect();
    fs::write(dir.path().join("b.bin"), bytes).unwrap();
    assert_eq!(read_matrix(&dir.path().join("b.bin"), 4, 3, Dtype::F64).unwrap_err().row(), Some(3));
}

#[test]
fn gradient_shape_must_match() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.bin"), f32_bytes(&[0.0; 12])).unwrap();
    fs::write(dir.path().join("g.bin"), f32_bytes(&[0.0; 9])).unwrap();
    let m = manifest(
        dir.path(),
        r#"{"n_samples": 4, "dim": 3, "dtype": "f32", "activations_path": "a.bin", "gradients_path": "g.bin"}"#,
    );
    assert!(matches!(load_dataset(&m).unwrap_err(), IngestError::DataFormat(_)));
    let x = SampleMatrix::zeros(4, 3);
    let g = SampleMatrix::zeros(3, 3);
    assert!(write_dataset(dir.path(), "bad", &x, Some(&g), Dtype::F64, "", None).is_err());
}

#[test]
fn missing_file_and_bad_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let m = manifest(dir.path(), r#"{"n_samples": 1, "dim": 1, "dtype": "f64", "activations_path": "nope.bin"}"#);
    assert!(matches!(load_dataset(&m).unwrap_err(), IngestError::Io { .. }));
    let m = manifest(dir.path(), r#"{"n_samples": 1, "dim": 1, "dtype": "f16", "activations_path": "a.bin"}"#);
    assert!(matches!(load_dataset(&m).unwrap_err(), IngestError::Manifest { .. }));
}

/// Manifest as the extractor writes it: f32 matrices in a subdirectory,
/// provenance in `source`, and a seed.
#[test]
fn extractor_manifest_is_accepted() {
    let dir = tempfile::tempdir().unwrap();
    fs::create_dir(dir.path().join("layer16")).unwrap();
    let x: Vec<f32> = (0..32).map(|i| (i as f32).sin()).collect();
    let g: Vec<f32> = (0..32).map(|i| (i as f32).cos() * 1e-3).collect();
    fs::write(dir.path().join("layer16/acts.bin"), f32_bytes(&x)).unwrap();
    fs::write(dir.path().join("layer16/grads.bin"), f32_bytes(&g)).unwrap();
    let m = manifest(
        dir.path(),
        r#"{
  "n_samples": 8,
  "dim": 4,
  "dtype": "f32",
  "activations_path": "layer16/acts.bin",
  "gradients_path": "layer16/grads.bin",
  "source": "model=stub-2l layer=1 corpora=text:1.0 stride=8 position=post",
  "seed": 11
}"#,
    );
    let ds = load_dataset(&m).unwrap();
    assert_eq!(ds.manifest.seed, Some(11));
    assert!(ds.manifest.source.contains("stride=8"));
    let grads = ds.gradients.unwrap();
    for i in 0..32 {
        assert_eq!(ds.activations.as_slice()[i], x[i] as f64);
        assert_eq!(grads.as_slice()[i], g[i] as f64);
    }
}

#[test]
fn unknown_manifest_keys_are_rejected() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("a.bin"), f32_bytes(&[0.0; 4])).unwrap();
    let m = manifest(dir.path(), r#"{"n_samples": 2, "dim": 2, "dtype": "f32", "activations_path": "a.bin", "layer": 16}"#);
    assert!(matches!(load_dataset(&m).unwrap_err(), IngestError::Manifest { .. }));
}

#[test]
fn f32_round_trip_is_within_one_ulp() {
    let dir = tempfile::tempdir().unwrap();
    let x = SampleMatrix::from_row_major(3, 5, (0..15).map(|i| (i as f64 * 0.37).exp() - 3.0).collect());
    let p = write_dataset(dir.path(), "x", &x, None, Dtype::F32, "t", None).unwrap();
    let back = load_dataset(&p).unwrap().activations;
    for (a, b) in x.as_slice().iter().zip(back.as_slice()) {
        let ulp = (*a as f32).abs() * f32::EPSILON;
        assert!((a - b).abs() <= ulp as f64, "{a} vs {b}");
    }
}

proptest! {
    #[test]
    fn f64_round_trip_is_exact(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>()) {
        let values: Vec<f64> = (0..rows * cols)
            .map(|i| f64::from_bits((seed ^ (i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)) >> 2 | 0x3000_0000_0000_0000))
            .collect();
        prop_assume!(values.iter().all(|v| v.is_finite()));
        let x = SampleMatrix::from_row_major(rows, cols, values);
        let dir = tempfile::tempdir().unwrap();
        let p = write_dataset(dir.path(), "x", &x, Some(&x), Dtype::F64, "", Some(seed)).unwrap();
        let ds = load_dataset(&p).unwrap();
        prop_assert_eq!(&ds.activations, &x);
        prop_assert_eq!(ds.gradients.as_ref().unwrap(), &x);
        prop_assert_eq!(encode_matrix(&ds.activations, Dtype::F64).len(), rows * cols * 8);
    }
}
