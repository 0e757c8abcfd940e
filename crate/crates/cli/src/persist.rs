//! Atlas persistence: `atlas.json` plus raw little-endian blobs. Centroids,
//! chart means and bases are f64, assignments and overlap index lists u64.

use std::fs;
use std::path::Path;

use anyhow::{bail, Context, Result};
use gaugeatlas::atlas::{Atlas, AtlasParams, Chart, OverlapSet};
use gaugeatlas::SampleMatrix;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

pub const ATLAS_FORMAT: &str = "gaugeatlas.atlas/1";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ChartEntry {
    size: usize,
    usable: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct OverlapEntry {
    u: usize,
    v: usize,
    population: usize,
    count: usize,
    file: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct AtlasManifest {
    format: String,
    n_samples: usize,
    dim: usize,
    n_charts: usize,
    k: usize,
    knn_degree: usize,
    min_overlap: usize,
    max_overlap: usize,
    max_iter: usize,
    center_charts: bool,
    atlas_seed: u64,
    overlap_seed: u64,
    kmeans_iterations: usize,
    kmeans_converged: bool,
    graph: Vec<(usize, usize)>,
    edge_populations: Vec<usize>,
    charts: Vec<ChartEntry>,
    overlaps: Vec<OverlapEntry>,
}

fn f64_bytes(values: impl IntoIterator<Item = f64>) -> Vec<u8> {
    values.into_iter().flat_map(|v| v.to_le_bytes()).collect()
}

fn u64_bytes(values: impl IntoIterator<Item = usize>) -> Vec<u8> {
    values.into_iter().flat_map(|v| (v as u64).to_le_bytes()).collect()
}

fn read_f64(path: &Path, len: usize) -> Result<Vec<f64>> {
    let b = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if b.len() != len * 8 {
        bail!("{} holds {} bytes, expected {}", path.display(), b.len(), len * 8);
    }
    Ok(b.chunks_exact(8).map(|c| f64::from_le_bytes(c.try_into().unwrap())).collect())
}

fn read_u64(path: &Path, len: usize) -> Result<Vec<usize>> {
    let b = fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    if b.len() != len * 8 {
        bail!("{} holds {} bytes, expected {}", path.display(), b.len(), len * 8);
    }
    Ok(b.chunks_exact(8).map(|c| u64::from_le_bytes(c.try_into().unwrap()) as usize).collect())
}

/// Writes the atlas into `dir` and returns the written file names relative
/// to `dir`, in write order.
pub fn save_atlas(dir: &Path, atlas: &Atlas, overlap_seed: u64) -> Result<Vec<String>> {
    fs::create_dir_all(dir.join("overlaps"))?;
    let (c, d, k) = (atlas.n_charts(), atlas.centroids.cols(), atlas.k());
    let mut files = Vec::new();
    let mut put = |name: String, bytes: Vec<u8>| -> Result<()> {
        fs::write(dir.join(&name), bytes).with_context(|| format!("writing {name}"))?;
        files.push(name);
        Ok(())
    };
    put("centroids.f64".into(), f64_bytes(atlas.centroids.as_slice().iter().copied()))?;
    put("means.f64".into(), f64_bytes(atlas.charts.iter().flat_map(|ch| ch.mean.iter().copied())))?;
    let mut bases = Vec::with_capacity(c * d * k);
    for ch in &atlas.charts {
        match &ch.basis {
            Some(b) => (0..d).for_each(|i| (0..k).for_each(|j| bases.push(b[(i, j)]))),
            None => bases.extend(std::iter::repeat_n(0.0, d * k)),
        }
    }
    put("bases.f64".into(), f64_bytes(bases))?;
    put("assignments.u64".into(), u64_bytes(atlas.assignments.iter().copied()))?;
    let mut overlaps = Vec::new();
    for o in &atlas.overlaps {
        let file = format!("overlaps/{}-{}.u64", o.edge.0, o.edge.1);
        put(file.clone(), u64_bytes(o.indices.iter().copied()))?;
        overlaps.push(OverlapEntry { u: o.edge.0, v: o.edge.1, population: o.population, count: o.indices.len(), file });
    }
    let p = &atlas.params;
    let manifest = AtlasManifest {
        format: ATLAS_FORMAT.into(),
        n_samples: atlas.assignments.len(),
        dim: d,
        n_charts: c,
        k,
        knn_degree: p.knn_degree,
        min_overlap: p.min_overlap,
        max_overlap: p.max_overlap,
        max_iter: p.max_iter,
        center_charts: p.center_charts,
        atlas_seed: p.seed,
        overlap_seed,
        kmeans_iterations: atlas.kmeans_iterations,
        kmeans_converged: atlas.kmeans_converged,
        graph: atlas.graph.clone(),
        edge_populations: atlas.edge_populations.clone(),
        charts: atlas.charts.iter().map(|ch| ChartEntry { size: ch.size, usable: ch.usable() }).collect(),
        overlaps,
    };
    put("atlas.json".into(), (serde_json::to_string_pretty(&manifest)? + "\n").into_bytes())?;
    Ok(files)
}

/// Reads an atlas written by [`save_atlas`]; returns it with its overlap seed.
pub fn load_atlas(dir: &Path) -> Result<(Atlas, u64)> {
    let path = dir.join("atlas.json");
    let text = fs::read_to_string(&path).with_context(|| format!("reading {}", path.display()))?;
    let m: AtlasManifest = serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
    if m.format != ATLAS_FORMAT {
        bail!("unsupported atlas format `{}`", m.format);
    }
    let (c, d, k) = (m.n_charts, m.dim, m.k);
    if m.charts.len() != c {
        bail!("atlas lists {} charts, expected {c}", m.charts.len());
    }
    let centroids = SampleMatrix::from_row_major(c, d, read_f64(&dir.join("centroids.f64"), c * d)?);
    let means = read_f64(&dir.join("means.f64"), c * d)?;
    let bases = read_f64(&dir.join("bases.f64"), c * d * k)?;
    let assignments = read_u64(&dir.join("assignments.u64"), m.n_samples)?;
    let charts = m
        .charts
        .iter()
        .enumerate()
        .map(|(i, e)| Chart {
            size: e.size,
            mean: means[i * d..(i + 1) * d].to_vec(),
            basis: e.usable.then(|| DMatrix::from_row_slice(d, k, &bases[i * d * k..(i + 1) * d * k])),
        })
        .collect();
    let mut overlaps = Vec::with_capacity(m.overlaps.len());
    for o in &m.overlaps {
        let indices = read_u64(&dir.join(&o.file), o.count)?;
        overlaps.push(OverlapSet { edge: (o.u, o.v), population: o.population, indices });
    }
    let params = AtlasParams {
        n_charts: c,
        k,
        knn_degree: m.knn_degree,
        min_overlap: m.min_overlap,
        max_overlap: m.max_overlap,
        max_iter: m.max_iter,
        center_charts: m.center_charts,
        seed: m.atlas_seed,
    };
    let atlas = Atlas {
        params,
        centroids,
        assignments,
        graph: m.graph,
        charts,
        edge_populations: m.edge_populations,
        overlaps,
        kmeans_iterations: m.kmeans_iterations,
        kmeans_converged: m.kmeans_converged,
    };
    Ok((atlas, m.overlap_seed))
}
