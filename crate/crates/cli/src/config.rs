//! Run configuration: a JSON file plus dotted `--key value` overrides.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JamConfig {
    #[serde(default = "yes")]
    pub enabled: bool,
    /// Largest usable charts first; 0 analyses every usable chart.
    #[serde(default = "forty")]
    pub n_charts_analyzed: usize,
    #[serde(default = "two_fifty_six")]
    pub m: usize,
    #[serde(default = "unit")]
    pub alpha: f64,
    #[serde(default = "five_twelve")]
    pub grad_samples_per_chart: usize,
    #[serde(default = "fifty")]
    pub max_outer: usize,
    #[serde(default = "hundred")]
    pub max_passes: usize,
}

impl Default for JamConfig {
    fn default() -> Self {
        JamConfig {
            enabled: true,
            n_charts_analyzed: 40,
            m: 256,
            alpha: 1.0,
            grad_samples_per_chart: 512,
            max_outer: 50,
            max_passes: 100,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BootConfig {
    #[serde(default)]
    pub enabled: bool,
    /// Replicates per target (B).
    #[serde(default = "two_hundred")]
    pub replicates: usize,
    #[serde(default = "n_boot_list")]
    pub n_boot: Vec<usize>,
    #[serde(default = "yes")]
    pub cap_to_overlap: bool,
}

impl Default for BootConfig {
    fn default() -> Self {
        BootConfig { enabled: false, replicates: 200, n_boot: n_boot_list(), cap_to_overlap: true }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Seeds {
    #[serde(default)]
    pub atlas: u64,
    #[serde(default)]
    pub downstream: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Flags {
    #[serde(default = "yes")]
    pub center_charts: bool,
    #[serde(default)]
    pub null_random_bases: bool,
}

impl Default for Flags {
    fn default() -> Self {
        Flags { center_charts: true, null_random_bases: false }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Dataset manifest; relative paths resolve against the config file.
    pub dataset: PathBuf,
    #[serde(default = "c_default")]
    pub n_charts: usize,
    #[serde(default = "k_default")]
    pub k: usize,
    #[serde(default = "six")]
    pub knn_degree: usize,
    #[serde(default = "lambda_default")]
    pub ridge_lambda: f64,
    #[serde(default = "two_fifty_six")]
    pub min_overlap: usize,
    #[serde(default = "eight_thousand")]
    pub max_overlap: usize,
    #[serde(default = "hundred")]
    pub kmeans_max_iter: usize,
    #[serde(default = "s_min_default")]
    pub s_min: Vec<f64>,
    /// Harm damping relative to the mean Fisher diagonal.
    #[serde(default = "tau_default")]
    pub tau_damping: f64,
    #[serde(default)]
    pub jamming: JamConfig,
    #[serde(default)]
    pub bootstrap: BootConfig,
    #[serde(default)]
    pub seeds: Seeds,
    #[serde(default)]
    pub flags: Flags,
}

fn yes() -> bool {
    true
}
fn unit() -> f64 {
    1.0
}
fn six() -> usize {
    6
}
fn forty() -> usize {
    40
}
fn fifty() -> usize {
    50
}
fn hundred() -> usize {
    100
}
fn two_hundred() -> usize {
    200
}
fn two_fifty_six() -> usize {
    256
}
fn five_twelve() -> usize {
    512
}
fn eight_thousand() -> usize {
    8000
}
fn c_default() -> usize {
    128
}
fn k_default() -> usize {
    32
}
fn lambda_default() -> f64 {
    1e-2
}
fn tau_default() -> f64 {
    1e-6
}
fn s_min_default() -> Vec<f64> {
    vec![0.0]
}
fn n_boot_list() -> Vec<usize> {
    vec![256, 512, 1024, 2048]
}

impl RunConfig {
    pub fn new(dataset: impl Into<PathBuf>) -> Self {
        serde_json::from_value(serde_json::json!({ "dataset": dataset.into() })).expect("defaults deserialize")
    }

    pub fn validate(&self) -> Result<()> {
        let counts = [
            ("n_charts", self.n_charts),
            ("k", self.k),
            ("knn_degree", self.knn_degree),
            ("min_overlap", self.min_overlap),
            ("max_overlap", self.max_overlap),
            ("kmeans_max_iter", self.kmeans_max_iter),
            ("jamming.m", self.jamming.m),
            ("jamming.grad_samples_per_chart", self.jamming.grad_samples_per_chart),
            ("jamming.max_outer", self.jamming.max_outer),
            ("jamming.max_passes", self.jamming.max_passes),
            ("bootstrap.replicates", self.bootstrap.replicates),
        ];
        for (name, v) in counts {
            if v == 0 {
                bail!("{name} must be positive");
            }
        }
        if self.max_overlap < self.min_overlap {
            bail!("max_overlap {} is below min_overlap {}", self.max_overlap, self.min_overlap);
        }
        if !(self.ridge_lambda >= 0.0) {
            bail!("ridge_lambda must be non-negative");
        }
        if !(self.tau_damping > 0.0) {
            bail!("tau_damping must be positive");
        }
        if !(self.jamming.alpha >= 0.0) {
            bail!("jamming.alpha must be non-negative");
        }
        if self.s_min.is_empty() {
            bail!("s_min needs at least one threshold");
        }
        if self.s_min.iter().any(|s| !(*s >= 0.0)) || self.s_min.windows(2).any(|w| w[0] > w[1]) {
            bail!("s_min values must be non-negative and sorted ascending");
        }
        if self.bootstrap.n_boot.is_empty() || self.bootstrap.n_boot.contains(&0) {
            bail!("bootstrap.n_boot needs positive resample sizes");
        }
        Ok(())
    }

    /// Manifest path with relative paths taken from `config_dir`.
    pub fn dataset_path(&self, config_dir: &Path) -> PathBuf {
        crate::ingest::resolve(config_dir, &self.dataset)
    }
}

/// Parses a `--key value` override value: JSON when it parses, otherwise a
/// bare string.
fn parse_value(raw: &str) -> Value {
    serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()))
}

/// Applies dotted overrides such as `jamming.m=128` or `s_min=[0,0.01]`.
pub fn apply_overrides(config: &RunConfig, overrides: &[(String, String)]) -> Result<RunConfig> {
    let mut root = serde_json::to_value(config)?;
    for (key, raw) in overrides {
        let mut slot = &mut root;
        for part in key.split('.') {
            let Value::Object(map) = slot else {
                bail!("override `{key}`: `{part}` is not a field");
            };
            if !map.contains_key(part) {
                bail!("override `{key}`: unknown field `{part}`");
            }
            slot = map.get_mut(part).expect("checked");
        }
        let value = parse_value(raw);
        *slot = match (&*slot, value) {
            (Value::Array(_), Value::Number(n)) => Value::Array(vec![Value::Number(n)]),
            (_, v) => v,
        };
    }
    let out: RunConfig = serde_json::from_value(root).context("config after overrides")?;
    out.validate()?;
    Ok(out)
}

/// Reads `path`, applies overrides and validates.
pub fn load_config(path: &Path, overrides: &[(String, String)]) -> Result<RunConfig> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    let base: RunConfig = serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
    apply_overrides(&base, overrides)
}

/// Splits trailing `--key value` pairs (also `--key=value`).
pub fn parse_override_args(args: &[String]) -> Result<Vec<(String, String)>> {
    let mut out = Vec::new();
    let mut it = args.iter();
    while let Some(a) = it.next() {
        let Some(key) = a.strip_prefix("--") else {
            bail!("unexpected argument `{a}`; overrides take the form --key value");
        };
        if let Some((k, v)) = key.split_once('=') {
            out.push((k.to_string(), v.to_string()));
        } else {
            let v = it.next().with_context(|| format!("override --{key} needs a value"))?;
            out.push((key.to_string(), v.clone()));
        }
    }
    Ok(out)
}
