//! Output files with content digests, and the CSV row layouts.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use sha2::{Digest, Sha256};

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct OutputFile {
    /// Relative to the output directory, with `/` separators.
    pub path: String,
    pub bytes: u64,
    pub sha256: String,
}

/// Collects every file written under one output directory.
#[derive(Debug)]
pub struct Outputs {
    pub dir: PathBuf,
    pub files: Vec<OutputFile>,
}

impl Outputs {
    pub fn new(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        Ok(Outputs { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn write_bytes(&mut self, name: &str, bytes: &[u8]) -> Result<()> {
        let path = self.dir.join(name);
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        fs::write(&path, bytes).with_context(|| format!("writing {}", path.display()))?;
        self.record(name, bytes);
        Ok(())
    }

    /// Registers a file that was written by other means.
    pub fn record(&mut self, name: &str, bytes: &[u8]) {
        self.files.retain(|f| f.path != name);
        self.files.push(OutputFile { path: name.to_string(), bytes: bytes.len() as u64, sha256: sha256_hex(bytes) });
    }

    pub fn record_existing(&mut self, name: &str) -> Result<()> {
        let bytes = fs::read(self.dir.join(name)).with_context(|| format!("reading back {name}"))?;
        self.record(name, &bytes);
        Ok(())
    }

    pub fn write_csv<T: Serialize>(&mut self, name: &str, rows: &[T], header: &[&str]) -> Result<()> {
        let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
        w.write_record(header)?;
        for r in rows {
            w.serialize(r)?;
        }
        let bytes = w.into_inner().map_err(|e| anyhow::anyhow!("csv buffer: {e}"))?;
        self.write_bytes(name, &bytes)
    }

    pub fn write_json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let text = serde_json::to_string_pretty(value)? + "\n";
        self.write_bytes(name, text.as_bytes())
    }

    pub fn sorted(&self) -> Vec<OutputFile> {
        let mut v = self.files.clone();
        v.sort_by(|a, b| a.path.cmp(&b.path));
        v
    }
}

pub const TRANSPORT_COLUMNS: [&str; 10] = [
    "u",
    "v",
    "n_overlap",
    "sigma_min",
    "d_shear",
    "delta_hat",
    "lambda_min_sigma",
    "lb_hat",
    "slack",
    "proxy_degenerate",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransportRow {
    pub u: usize,
    pub v: usize,
    pub n_overlap: usize,
    pub sigma_min: f64,
    pub d_shear: f64,
    pub delta_hat: f64,
    pub lambda_min_sigma: f64,
    pub lb_hat: f64,
    pub slack: f64,
    pub proxy_degenerate: bool,
}

pub const GAUGE_COLUMNS: [&str; 6] = ["chord_u", "chord_v", "cycle_len", "chord_residual", "holonomy_defect", "d_hol"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GaugeRow {
    pub chord_u: usize,
    pub chord_v: usize,
    pub cycle_len: usize,
    pub chord_residual: f64,
    pub holonomy_defect: f64,
    pub d_hol: f64,
}

pub const TREE_COLUMNS: [&str; 3] = ["u", "v", "tree_residual"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TreeRow {
    pub u: usize,
    pub v: usize,
    pub tree_residual: f64,
}

pub const PERSISTENCE_COLUMNS: [&str; 7] =
    ["s_min", "retained_edges", "lcc_edges", "lcc_size", "n_chords", "d_hol_mean", "d_hol_max"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PersistenceCsvRow {
    pub s_min: f64,
    pub retained_edges: usize,
    pub lcc_edges: usize,
    pub lcc_size: usize,
    pub n_chords: usize,
    pub d_hol_mean: Option<f64>,
    pub d_hol_max: Option<f64>,
}

pub const JAMMING_COLUMNS: [&str; 15] = [
    "chart",
    "n_grad",
    "m",
    "alpha",
    "r",
    "k_active",
    "r_eff",
    "j_index",
    "subset_size",
    "tau_star",
    "lb",
    "energy_A",
    "energy_full",
    "slack",
    "certified",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct JammingRow {
    pub chart: usize,
    pub n_grad: usize,
    pub m: usize,
    pub alpha: f64,
    pub r: usize,
    pub k_active: f64,
    pub r_eff: f64,
    pub j_index: f64,
    pub subset_size: usize,
    pub tau_star: f64,
    pub lb: f64,
    pub energy_a: f64,
    pub energy_full: f64,
    pub slack: Option<f64>,
    pub certified: bool,
}

pub const BOOTSTRAP_COLUMNS: [&str; 8] = ["subsystem", "metric", "n_samples", "mean", "std", "q05", "q50", "q95"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BootstrapRow {
    pub subsystem: String,
    pub metric: String,
    pub n_samples: usize,
    pub mean: Option<f64>,
    pub std: Option<f64>,
    pub q05: Option<f64>,
    pub q50: Option<f64>,
    pub q95: Option<f64>,
}

pub const REPLICATE_COLUMNS: [&str; 5] = ["target", "unit", "n_boot", "replicate", "value"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ReplicateRow {
    pub target: &'static str,
    pub unit: String,
    pub n_boot: usize,
    pub replicate: usize,
    pub value: f64,
}

pub const NULL_COLUMNS: [&str; 3] = ["metric", "learned", "null"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NullRow {
    pub metric: &'static str,
    pub learned: Option<f64>,
    pub null: Option<f64>,
}

pub const CHART_COLUMNS: [&str; 3] = ["chart", "size", "usable"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChartRow {
    pub chart: usize,
    pub size: usize,
    pub usable: bool,
}

pub const EDGE_COLUMNS: [&str; 5] = ["u", "v", "population", "usable", "n_overlap"];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EdgeRow {
    pub u: usize,
    pub v: usize,
    pub population: usize,
    pub usable: bool,
    pub n_overlap: usize,
}

pub const SWEEP_COLUMNS: [&str; 13] = [
    "axis",
    "value",
    "usable_edges",
    "retained_edges",
    "lcc_size",
    "lcc_edges",
    "n_chords",
    "d_hol_mean",
    "d_hol_max",
    "d_shear_median",
    "slack_median",
    "cert_rate",
    "report_sha256",
];

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub axis: String,
    pub value: String,
    pub usable_edges: usize,
    pub retained_edges: usize,
    pub lcc_size: usize,
    pub lcc_edges: usize,
    pub n_chords: usize,
    pub d_hol_mean: Option<f64>,
    pub d_hol_max: Option<f64>,
    pub d_shear_median: Option<f64>,
    pub slack_median: Option<f64>,
    pub cert_rate: Option<f64>,
    pub report_sha256: String,
}
