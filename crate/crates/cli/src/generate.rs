//! `synth`: synthetic datasets in the ingest format, plus ground truth.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use gaugeatlas::synth::{self, presets, rows_of, GroundTruth, SynthSpec};
use serde_json::json;

use crate::ingest::{self, Dtype};

#[derive(Debug, Clone, PartialEq)]
pub enum Preset {
    /// Planted triangle with net loop rotation `net` (radians).
    Triangle { net: f64 },
    Rotated { charts: usize, dim: usize, k: usize, n_per: usize },
    Shared { charts: usize, dim: usize, k: usize, n_per: usize, noise: f64, anisotropy: f64 },
}

impl Preset {
    pub fn spec(&self, seed: u64) -> SynthSpec {
        match *self {
            Preset::Triangle { net } => presets::planted_triangle(net, seed),
            Preset::Rotated { charts, dim, k, n_per } => presets::rotated_gaussians(charts, dim, k, n_per, seed),
            Preset::Shared { charts, dim, k, n_per, noise, anisotropy } => {
                presets::shared_plane(charts, dim, k, n_per, noise, anisotropy, seed)
            }
        }
    }
}

pub fn read_spec(path: &Path) -> Result<SynthSpec> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing synth spec {}", path.display()))
}

fn truth_json(spec: &SynthSpec, truth: &GroundTruth) -> serde_json::Value {
    json!({
        "spec": spec,
        "n_clusters": truth.n_clusters(),
        "centers": truth.centers,
        "planted_edges": truth.planted_edges.iter().map(|e| json!({
            "u": e.u, "v": e.v, "rotation": rows_of(&e.rotation),
        })).collect::<Vec<_>>(),
        "gradient_map": rows_of(&truth.gradient_map),
    })
}

/// Generates `spec`, writes `<dir>/<stem>.json` with its matrices, and
/// `labels.u64` plus `ground_truth.json` beside it. Returns the manifest
/// path.
pub fn write_synthetic(dir: &Path, stem: &str, spec: &SynthSpec, dtype: Dtype, with_gradients: bool) -> Result<PathBuf> {
    let (x, g, truth) = synth::synth_atlas_dataset(spec)?;
    let manifest = ingest::write_dataset(dir, stem, &x, with_gradients.then_some(&g), dtype, "synthetic", Some(spec.seed))?;
    let labels: Vec<u8> = truth.labels.iter().flat_map(|&l| (l as u64).to_le_bytes()).collect();
    fs::write(dir.join("labels.u64"), labels)?;
    let text = serde_json::to_string_pretty(&truth_json(spec, &truth))? + "\n";
    fs::write(dir.join("ground_truth.json"), text)?;
    Ok(manifest)
}
