//! Chart atlas: k-means charts, centroid kNN graph, per-chart PCA bases and
//! Voronoi overlap sets.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng as _;

use crate::data::{nearest_two, sq_dist, SampleMatrix};
use crate::error::{Error, Result};
use crate::linalg::principal_directions;
use crate::seed::rng_from;

pub type Edge = (usize, usize);

#[derive(Debug, Clone, PartialEq)]
pub struct AtlasParams {
    pub n_charts: usize,
    pub k: usize,
    pub knn_degree: usize,
    pub min_overlap: usize,
    pub max_overlap: usize,
    pub max_iter: usize,
    pub center_charts: bool,
    pub seed: u64,
}

impl Default for AtlasParams {
    fn default() -> Self {
        AtlasParams {
            n_charts: 128,
            k: 32,
            knn_degree: 6,
            min_overlap: 256,
            max_overlap: 8000,
            max_iter: 100,
            center_charts: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct KMeans {
    /// C×d.
    pub centroids: SampleMatrix,
    pub assignments: Vec<usize>,
    pub iterations: usize,
    pub converged: bool,
}

fn nearest(x: &[f64], centroids: &SampleMatrix) -> usize {
    let mut best = 0;
    let mut bd = f64::INFINITY;
    for c in 0..centroids.rows() {
        let d = sq_dist(x, centroids.row(c));
        if d < bd {
            bd = d;
            best = c;
        }
    }
    best
}

fn assign_all(data: &SampleMatrix, centroids: &SampleMatrix) -> Vec<usize> {
    (0..data.rows()).map(|i| nearest(data.row(i), centroids)).collect()
}

fn plus_plus_init(data: &SampleMatrix, c: usize, seed: u64) -> SampleMatrix {
    let n = data.rows();
    let mut rng = rng_from(seed, &[0x6b6d_7070]);
    let mut centroids = SampleMatrix::zeros(c, data.cols());
    let first = rng.random_range(0..n);
    centroids.row_mut(0).copy_from_slice(data.row(first));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(data.row(i), data.row(first))).collect();
    for j in 1..c {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let target = rng.random::<f64>() * total;
            let mut acc = 0.0;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if acc > target {
                    chosen = i;
                    break;
                }
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        centroids.row_mut(j).copy_from_slice(data.row(pick));
        for (i, v) in d2.iter_mut().enumerate() {
            *v = v.min(sq_dist(data.row(i), data.row(pick)));
        }
    }
    centroids
}

/// Lloyd iterations from a k-means++ start. Cluster means accumulate in
/// sample order. An empty cluster is re-seeded at the sample farthest from
/// its current centroid.
pub fn kmeans(data: &SampleMatrix, c: usize, seed: u64, max_iter: usize) -> Result<KMeans> {
    let n = data.rows();
    let d = data.cols();
    if c == 0 || c > n {
        return Err(Error::AtlasConfig(format!("cannot form {c} charts from {n} samples")));
    }
    if max_iter == 0 {
        return Err(Error::AtlasConfig("max_iter must be at least 1".into()));
    }
    let mut centroids = plus_plus_init(data, c, seed);
    let mut assign = assign_all(data, &centroids);
    let mut converged = false;
    let mut iterations = 0;
    while iterations < max_iter {
        iterations += 1;
        let mut sums = SampleMatrix::zeros(c, d);
        let mut counts = vec![0usize; c];
        for i in 0..n {
            counts[assign[i]] += 1;
            for (s, x) in sums.row_mut(assign[i]).iter_mut().zip(data.row(i)) {
                *s += x;
            }
        }
        let mut reseeded: Vec<usize> = Vec::new();
        for j in 0..c {
            if counts[j] > 0 {
                let inv = counts[j] as f64;
                for (dst, s) in centroids.row_mut(j).iter_mut().zip(sums.row(j)) {
                    *dst = s / inv;
                }
            }
        }
        for j in 0..c {
            if counts[j] == 0 {
                let mut far = None;
                let mut fd = -1.0;
                for i in 0..n {
                    if reseeded.contains(&i) {
                        continue;
                    }
                    let dd = sq_dist(data.row(i), centroids.row(assign[i]));
                    if dd > fd {
                        fd = dd;
                        far = Some(i);
                    }
                }
                if let Some(i) = far {
                    centroids.row_mut(j).copy_from_slice(data.row(i));
                    reseeded.push(i);
                }
            }
        }
        let next = assign_all(data, &centroids);
        if next == assign && reseeded.is_empty() {
            converged = true;
            break;
        }
        assign = next;
    }
    Ok(KMeans { centroids, assignments: assign, iterations, converged })
}

/// Union of directed `degree`-nearest-neighbour relations between
/// centroids, as sorted canonical pairs `(u, v)` with `u < v`.
pub fn knn_graph(centroids: &SampleMatrix, degree: usize) -> Result<Vec<Edge>> {
    let c = centroids.rows();
    if degree == 0 || degree >= c {
        return Err(Error::AtlasConfig(format!("knn degree {degree} must lie in [1, {})", c)));
    }
    let mut edges = BTreeSet::new();
    for u in 0..c {
        let mut others: Vec<(f64, usize)> =
            (0..c).filter(|&v| v != u).map(|v| (sq_dist(centroids.row(u), centroids.row(v)), v)).collect();
        others.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        for &(_, v) in others.iter().take(degree) {
            edges.insert((u.min(v), u.max(v)));
        }
    }
    Ok(edges.into_iter().collect())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Chart {
    pub size: usize,
    /// Mean of the chart's samples (zero vector for an empty chart).
    pub mean: Vec<f64>,
    /// d×k orthonormal basis; `None` marks a chart with fewer than k+1
    /// samples.
    pub basis: Option<DMatrix<f64>>,
}

impl Chart {
    pub fn usable(&self) -> bool {
        self.basis.is_some()
    }
}

pub fn chart_members(assignments: &[usize], n_charts: usize) -> Vec<Vec<usize>> {
    let mut members = vec![Vec::new(); n_charts];
    for (i, &a) in assignments.iter().enumerate() {
        members[a].push(i);
    }
    members
}

/// Fits one chart. `members` indexes rows of `data`.
pub fn fit_chart(data: &SampleMatrix, members: &[usize], k: usize, center: bool) -> Chart {
    let d = data.cols();
    let mut mean = vec![0.0; d];
    for &i in members {
        for (m, x) in mean.iter_mut().zip(data.row(i)) {
            *m += x;
        }
    }
    if !members.is_empty() {
        let n = members.len() as f64;
        mean.iter_mut().for_each(|m| *m /= n);
    }
    if members.len() < k + 1 {
        return Chart { size: members.len(), mean, basis: None };
    }
    let x = DMatrix::from_fn(members.len(), d, |r, j| {
        let v = data.row(members[r])[j];
        if center {
            v - mean[j]
        } else {
            v
        }
    });
    let basis = principal_directions(&x, k).basis;
    Chart { size: members.len(), mean, basis: Some(basis) }
}

pub fn fit_chart_bases(data: &SampleMatrix, assignments: &[usize], n_charts: usize, k: usize, center: bool) -> Vec<Chart> {
    chart_members(assignments, n_charts).iter().map(|m| fit_chart(data, m, k, center)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OverlapSet {
    pub edge: Edge,
    /// Total Voronoi-boundary population before any subsampling.
    pub population: usize,
    /// Sorted sample indices (subsampled when the population exceeds the cap).
    pub indices: Vec<usize>,
}

/// Boundary populations for every graph edge, in graph order.
pub fn overlap_populations(data: &SampleMatrix, centroids: &SampleMatrix, graph: &[Edge]) -> Vec<(Edge, Vec<usize>)> {
    let mut out: Vec<(Edge, Vec<usize>)> = graph.iter().map(|&e| (e, Vec::new())).collect();
    for i in 0..data.rows() {
        let (a, b) = nearest_two(data.row(i), centroids);
        if a == b {
            continue;
        }
        let e = (a.min(b), a.max(b));
        if let Ok(pos) = graph.binary_search(&e) {
            out[pos].1.push(i);
        }
    }
    out
}

/// Reduces a boundary population to the usable overlap set for its edge:
/// `None` below `min_overlap`, a seeded uniform subsample above
/// `max_overlap`.
pub fn finalize_overlap(edge: Edge, indices: Vec<usize>, min_overlap: usize, max_overlap: usize, seed: u64) -> Option<OverlapSet> {
    let population = indices.len();
    if population < min_overlap {
        return None;
    }
    let indices = if population > max_overlap {
        let mut rng = rng_from(seed, &[0x6f76_6572, edge.0 as u64, edge.1 as u64]);
        let mut pick: Vec<usize> = rand::seq::index::sample(&mut rng, population, max_overlap)
            .into_iter()
            .map(|j| indices[j])
            .collect();
        pick.sort_unstable();
        pick
    } else {
        indices
    };
    Some(OverlapSet { edge, population, indices })
}

/// `graph` must be sorted canonical pairs, as produced by [`knn_graph`].
pub fn build_overlaps(
    data: &SampleMatrix,
    centroids: &SampleMatrix,
    graph: &[Edge],
    min_overlap: usize,
    max_overlap: usize,
    seed: u64,
) -> Result<Vec<OverlapSet>> {
    if min_overlap == 0 || max_overlap < min_overlap {
        return Err(Error::AtlasConfig(format!(
            "overlap bounds [{min_overlap}, {max_overlap}] are invalid"
        )));
    }
    Ok(overlap_populations(data, centroids, graph)
        .into_iter()
        .filter_map(|(e, idx)| finalize_overlap(e, idx, min_overlap, max_overlap, seed))
        .collect())
}

#[derive(Debug, Clone)]
pub struct Atlas {
    pub params: AtlasParams,
    pub centroids: SampleMatrix,
    pub assignments: Vec<usize>,
    pub graph: Vec<Edge>,
    pub charts: Vec<Chart>,
    /// Boundary population of every graph edge, in graph order.
    pub edge_populations: Vec<usize>,
    /// Usable edges only, sorted by edge.
    pub overlaps: Vec<OverlapSet>,
    pub kmeans_iterations: usize,
    pub kmeans_converged: bool,
}

impl Atlas {
    pub fn n_charts(&self) -> usize {
        self.charts.len()
    }

    pub fn k(&self) -> usize {
        self.params.k
    }

    pub fn chart_sizes(&self) -> Vec<usize> {
        self.charts.iter().map(|c| c.size).collect()
    }

    /// Vector subtracted from samples before projecting onto chart `c`.
    pub fn chart_origin(&self, c: usize) -> Option<&[f64]> {
        if self.params.center_charts {
            Some(&self.charts[c].mean)
        } else {
            None
        }
    }

    pub fn overlap(&self, edge: Edge) -> Option<&OverlapSet> {
        self.overlaps.binary_search_by(|o| o.edge.cmp(&edge)).ok().map(|i| &self.overlaps[i])
    }
}

pub fn validate_params(p: &AtlasParams, n: usize, d: usize) -> Result<()> {
    if p.k == 0 || p.k > d {
        return Err(Error::AtlasConfig(format!("chart dimension k={} must lie in [1, {d}]", p.k)));
    }
    if p.n_charts == 0 || p.n_charts > n {
        return Err(Error::AtlasConfig(format!("cannot form {} charts from {n} samples", p.n_charts)));
    }
    if p.knn_degree == 0 || p.knn_degree >= p.n_charts {
        return Err(Error::AtlasConfig(format!(
            "knn degree {} must lie in [1, {})",
            p.knn_degree, p.n_charts
        )));
    }
    if p.min_overlap == 0 || p.max_overlap < p.min_overlap {
        return Err(Error::AtlasConfig("overlap bounds are invalid".into()));
    }
    Ok(())
}

/// Sequential end-to-end atlas construction.
pub fn build_atlas(data: &SampleMatrix, params: &AtlasParams) -> Result<Atlas> {
    validate_params(params, data.rows(), data.cols())?;
    let km = kmeans(data, params.n_charts, params.seed, params.max_iter)?;
    let graph = knn_graph(&km.centroids, params.knn_degree)?;
    let charts = fit_chart_bases(data, &km.assignments, params.n_charts, params.k, params.center_charts);
    let pops = overlap_populations(data, &km.centroids, &graph);
    let edge_populations = pops.iter().map(|(_, v)| v.len()).collect();
    let overlaps = pops
        .into_iter()
        .filter_map(|(e, idx)| finalize_overlap(e, idx, params.min_overlap, params.max_overlap, params.seed))
        .collect();
    Ok(Atlas {
        params: params.clone(),
        centroids: km.centroids,
        assignments: km.assignments,
        graph,
        charts,
        edge_populations,
        overlaps,
        kmeans_iterations: km.iterations,
        kmeans_converged: km.converged,
    })
}
