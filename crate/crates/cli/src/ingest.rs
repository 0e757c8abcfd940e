//! On-disk dataset format: a JSON manifest next to raw little-endian,
//! row-major matrix files without headers.

use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use gaugeatlas::SampleMatrix;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Dtype {
    F32,
    F64,
}

impl Dtype {
    pub fn size(self) -> usize {
        match self {
            Dtype::F32 => 4,
            Dtype::F64 => 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetManifest {
    pub n_samples: usize,
    pub dim: usize,
    pub dtype: Dtype,
    /// Relative paths resolve against the manifest's directory.
    pub activations_path: PathBuf,
    #[serde(default)]
    pub gradients_path: Option<PathBuf>,
    #[serde(default)]
    pub source: String,
    #[serde(default)]
    pub seed: Option<u64>,
}

#[derive(Debug, thiserror::Error)]
pub enum IngestError {
    #[error("cannot read {path}: {source}")]
    Io { path: PathBuf, source: io::Error },
    #[error("malformed manifest {path}: {source}")]
    Manifest { path: PathBuf, source: serde_json::Error },
    #[error("data format: {0}")]
    DataFormat(String),
    #[error("data validation: non-finite entry in {file}, row {row}")]
    DataValidation { file: PathBuf, row: usize },
}

impl IngestError {
    /// Row of the first non-finite entry, for validation failures.
    pub fn row(&self) -> Option<usize> {
        match self {
            IngestError::DataValidation { row, .. } => Some(*row),
            _ => None,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    pub manifest: DatasetManifest,
    pub activations: SampleMatrix,
    pub gradients: Option<SampleMatrix>,
}

fn io_err(path: &Path) -> impl FnOnce(io::Error) -> IngestError + '_ {
    move |source| IngestError::Io { path: path.to_path_buf(), source }
}

pub fn resolve(base: &Path, p: &Path) -> PathBuf {
    if p.is_absolute() {
        p.to_path_buf()
    } else {
        base.join(p)
    }
}

pub fn read_manifest(path: &Path) -> Result<DatasetManifest, IngestError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| IngestError::Manifest { path: path.to_path_buf(), source })
}

/// Decodes a matrix file, widening to f64.
pub fn read_matrix(path: &Path, rows: usize, cols: usize, dtype: Dtype) -> Result<SampleMatrix, IngestError> {
    let bytes = fs::read(path).map_err(io_err(path))?;
    let expected = rows
        .checked_mul(cols)
        .and_then(|n| n.checked_mul(dtype.size()))
        .ok_or_else(|| IngestError::DataFormat(format!("shape {rows}×{cols} overflows")))?;
    if bytes.len() != expected {
        return Err(IngestError::DataFormat(format!(
            "{} holds {} bytes, manifest shape {rows}×{cols} {:?} needs {expected}",
            path.display(),
            bytes.len(),
            dtype
        )));
    }
    let values: Vec<f64> = match dtype {
        Dtype::F32 => bytes.chunks_exact(4).map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64).collect(),
        Dtype::F64 => bytes.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect(),
    };
    let m = SampleMatrix::from_row_major(rows, cols, values);
    if let Some(row) = m.first_non_finite_row() {
        return Err(IngestError::DataValidation { file: path.to_path_buf(), row });
    }
    Ok(m)
}

pub fn encode_matrix(m: &SampleMatrix, dtype: Dtype) -> Vec<u8> {
    let mut out = Vec::with_capacity(m.as_slice().len() * dtype.size());
    for &v in m.as_slice() {
        match dtype {
            Dtype::F32 => out.extend_from_slice(&(v as f32).to_le_bytes()),
            Dtype::F64 => out.extend_from_slice(&v.to_le_bytes()),
        }
    }
    out
}

pub fn write_matrix(path: &Path, m: &SampleMatrix, dtype: Dtype) -> Result<(), IngestError> {
    fs::write(path, encode_matrix(m, dtype)).map_err(io_err(path))
}

pub fn load_dataset(manifest_path: &Path) -> Result<Dataset, IngestError> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let (n, d) = (manifest.n_samples, manifest.dim);
    let activations = read_matrix(&resolve(base, &manifest.activations_path), n, d, manifest.dtype)?;
    let gradients = match &manifest.gradients_path {
        Some(p) => Some(read_matrix(&resolve(base, p), n, d, manifest.dtype)?),
        None => None,
    };
    Ok(Dataset { manifest, activations, gradients })
}

/// Writes `<stem>.json` plus `<stem>.act.bin` (and `<stem>.grad.bin`) into
/// `dir`, returning the manifest path.
pub fn write_dataset(
    dir: &Path,
    stem: &str,
    activations: &SampleMatrix,
    gradients: Option<&SampleMatrix>,
    dtype: Dtype,
    source: &str,
    seed: Option<u64>,
) -> Result<PathBuf, IngestError> {
    if let Some(g) = gradients {
        if (g.rows(), g.cols()) != (activations.rows(), activations.cols()) {
            return Err(IngestError::DataFormat("gradient matrix shape differs from activations".into()));
        }
    }
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let act = PathBuf::from(format!("{stem}.act.bin"));
    write_matrix(&dir.join(&act), activations, dtype)?;
    let grad = match gradients {
        Some(g) => {
            let p = PathBuf::from(format!("{stem}.grad.bin"));
            write_matrix(&dir.join(&p), g, dtype)?;
            Some(p)
        }
        None => None,
    };
    let manifest = DatasetManifest {
        n_samples: activations.rows(),
        dim: activations.cols(),
        dtype,
        activations_path: act,
        gradients_path: grad,
        source: source.to_string(),
        seed,
    };
    let path = dir.join(format!("{stem}.json"));
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
