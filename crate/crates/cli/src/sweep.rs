//! Sweeps: one pipeline run per axis value, sharing the cached atlas
//! skeleton wherever the axis leaves it unchanged.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use crate::config::RunConfig;
use crate::ingest::Dataset;
use crate::output::{sha256_hex, Outputs, SweepRow, SWEEP_COLUMNS};
use crate::pipeline::{self, AtlasCache, Outcome};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Axis {
    #[serde(rename = "s_min")]
    SMin,
    #[serde(rename = "seed")]
    Seed,
    #[serde(rename = "C_k")]
    ChartsK,
    #[serde(rename = "knn")]
    Knn,
    #[serde(rename = "lambda")]
    Lambda,
}

impl Axis {
    pub fn parse(s: &str) -> Result<Axis> {
        Ok(match s {
            "s_min" => Axis::SMin,
            "seed" => Axis::Seed,
            "C_k" => Axis::ChartsK,
            "knn" => Axis::Knn,
            "lambda" => Axis::Lambda,
            _ => bail!("unknown sweep axis `{s}` (expected s_min, seed, C_k, knn or lambda)"),
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Axis::SMin => "s_min",
            Axis::Seed => "seed",
            Axis::ChartsK => "C_k",
            Axis::Knn => "knn",
            Axis::Lambda => "lambda",
        }
    }

    /// The config for one sweep point; `C_k` values read `C:k`.
    pub fn apply(self, base: &RunConfig, value: &str) -> Result<RunConfig> {
        let mut c = base.clone();
        let bad = || format!("bad {} value `{value}`", self.name());
        match self {
            Axis::SMin => c.s_min = vec![value.parse().with_context(bad)?],
            Axis::Seed => c.seeds.downstream = value.parse().with_context(bad)?,
            Axis::Knn => c.knn_degree = value.parse().with_context(bad)?,
            Axis::Lambda => c.ridge_lambda = value.parse().with_context(bad)?,
            Axis::ChartsK => {
                let (n, k) = value.split_once(':').with_context(bad)?;
                c.n_charts = n.trim().parse().with_context(bad)?;
                c.k = k.trim().parse().with_context(bad)?;
            }
        }
        c.validate().with_context(bad)?;
        Ok(c)
    }
}

fn point_dir(axis: Axis, value: &str) -> String {
    let v: String = value.chars().map(|ch| if ch.is_ascii_alphanumeric() || ch == '.' || ch == '-' { ch } else { '_' }).collect();
    format!("{}={v}", axis.name())
}

fn row(axis: Axis, value: &str, o: &Outcome, report_sha256: String) -> SweepRow {
    let g = o.gauge_summary.as_ref();
    let p = o.persistence.first();
    let shear = o.shear.as_ref();
    SweepRow {
        axis: axis.name().to_string(),
        value: value.to_string(),
        usable_edges: o.transports.len(),
        retained_edges: p.map_or(0, |p| p.retained_edges),
        lcc_size: g.map_or(0, |g| g.lcc_size),
        lcc_edges: g.map_or(0, |g| g.lcc_edges),
        n_chords: g.map_or(0, |g| g.n_chords),
        d_hol_mean: g.and_then(|g| g.d_hol_mean),
        d_hol_max: g.and_then(|g| g.d_hol_max),
        d_shear_median: shear.and_then(|s| s.d_shear.map(|d| d.q50)),
        slack_median: shear.and_then(|s| s.slack.map(|d| d.q50)),
        cert_rate: o.jamming.as_ref().and_then(|(_, j)| j.cert_rate),
        report_sha256,
    }
}

/// Runs every point, writes `<out>/<axis>=<value>/` per point and the
/// consolidated `sweep.csv` and `sweep.json`. Rows follow `values`.
pub fn run_sweep(base: &RunConfig, data: &Dataset, axis: Axis, values: &[String], out_dir: &Path, cache: &AtlasCache) -> Result<Vec<SweepRow>> {
    if values.is_empty() {
        bail!("a sweep needs at least one value");
    }
    let configs: Vec<RunConfig> = values.iter().map(|v| axis.apply(base, v)).collect::<Result<_>>()?;
    let command = format!("sweep {}", axis.name());
    let rows: Vec<SweepRow> = values
        .par_iter()
        .zip(&configs)
        .map(|(v, cfg)| {
            let dir = out_dir.join(point_dir(axis, v));
            let stages = pipeline::full_run(cfg);
            let (_, outcome) = pipeline::run_stages(&command, cfg, data, &stages, &dir, cache)
                .with_context(|| format!("sweep point {}={v}", axis.name()))?;
            let bytes = fs::read(dir.join("report.json"))?;
            Ok(row(axis, v, &outcome, sha256_hex(&bytes)))
        })
        .collect::<Result<_>>()?;
    let mut out = Outputs::new(out_dir)?;
    out.write_csv("sweep.csv", &rows, &SWEEP_COLUMNS)?;
    let points: Vec<_> = values.iter().map(|v| json!({ "value": v, "dir": point_dir(axis, v) })).collect();
    out.write_json(
        "sweep.json",
        &json!({
            "schema": "gaugeatlas.sweep/1",
            "axis": axis,
            "base_config": base,
            "points": points,
            "outputs": out.sorted(),
        }),
    )?;
    Ok(rows)
}
