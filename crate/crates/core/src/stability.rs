//! Bootstrap stability of shearing and holonomy, and the random-bases null
//! control.
//!
//! Resampling is i.i.d. with replacement over overlap points. The proxy
//! depends only on the chart bases, which are fixed for a run, so it is
//! computed once per edge rather than once per replicate.

use alloc::vec::Vec;
use nalgebra::DMatrix;
use rand::Rng as _;

use crate::atlas::{Atlas, Edge};
use crate::data::SampleMatrix;
use crate::gauge::DefectGraph;
use crate::linalg::{distance_from_identity, haar_stiefel, polar_factor};
use crate::seed::{derive_seed, rng_from, Rng};
use crate::stats::Summary;
use crate::transport::{fit_transport, overlap_coordinates, proxy, shear_score, PROXY_DEGENERACY};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Target {
    Shear,
    Holonomy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Scope {
    Global,
    PerEdge,
    PerLoop,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapParams {
    pub n_boot: usize,
    pub replicates: usize,
    pub lambda: f64,
    pub seed: u64,
    /// Cap `n_boot` at the overlap size of each edge.
    pub cap_to_overlap: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BootstrapSummary {
    pub target: Target,
    pub scope: Scope,
    pub n_boot: usize,
    pub replicates: usize,
    pub realized: usize,
    pub summary: Option<Summary>,
}

impl BootstrapSummary {
    pub fn of(target: Target, scope: Scope, n_boot: usize, replicates: usize, values: &[f64]) -> Self {
        BootstrapSummary { target, scope, n_boot, replicates, realized: values.len(), summary: Summary::of(values) }
    }
}

/// Everything needed to refit one edge on resampled overlap points.
#[derive(Debug, Clone)]
pub struct EdgeSample {
    pub edge: Edge,
    pub z_u: DMatrix<f64>,
    pub z_v: DMatrix<f64>,
    pub p: DMatrix<f64>,
    pub proxy_degenerate: bool,
}

impl EdgeSample {
    pub fn from_atlas(data: &SampleMatrix, atlas: &Atlas, edge: Edge) -> Option<Self> {
        let o = atlas.overlap(edge)?;
        let (z_u, z_v) = overlap_coordinates(data, atlas, edge, &o.indices)?;
        let bu = atlas.charts[edge.0].basis.as_ref()?;
        let bv = atlas.charts[edge.1].basis.as_ref()?;
        let (p, s) = proxy(bu, bv);
        Some(EdgeSample { edge, z_u, z_v, p, proxy_degenerate: s < PROXY_DEGENERACY })
    }

    pub fn len(&self) -> usize {
        self.z_u.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn draw_size(&self, params: &BootstrapParams) -> usize {
        if params.cap_to_overlap {
            params.n_boot.min(self.len())
        } else {
            params.n_boot
        }
    }

    /// Polar factor of the ridge refit on `n` resampled points.
    fn resampled_q(&self, rng: &mut Rng, n: usize, lambda: f64) -> Option<DMatrix<f64>> {
        let total = self.len();
        if total == 0 || n == 0 {
            return None;
        }
        let idx: Vec<usize> = (0..n).map(|_| rng.random_range(0..total)).collect();
        let zu = self.z_u.select_columns(&idx);
        let zv = self.z_v.select_columns(&idx);
        let t = fit_transport(&zu, &zv, lambda, self.edge).ok()?;
        Some(polar_factor(&t))
    }
}

/// Replicate values of `D_shear` on one edge; replicate `b` draws from the
/// stream `(seed, u, v, b)`. Empty for an edge without overlap points.
pub fn bootstrap_edge_shear(sample: &EdgeSample, params: &BootstrapParams) -> Vec<f64> {
    let n = sample.draw_size(params);
    (0..params.replicates)
        .filter_map(|b| {
            let mut rng = rng_from(params.seed, &[0x7368, sample.edge.0 as u64, sample.edge.1 as u64, b as u64]);
            sample.resampled_q(&mut rng, n, params.lambda).map(|q| shear_score(&q, &sample.p))
        })
        .collect()
}

/// Replicate `b` of the holonomy of the closed loop `cycle` (chord id
/// `cycle_id`). `None` when any loop edge is unusable.
pub fn bootstrap_cycle_replicate<'a>(
    cycle: &[usize],
    cycle_id: usize,
    b: usize,
    samples: &dyn Fn(Edge) -> Option<&'a EdgeSample>,
    params: &BootstrapParams,
    k: usize,
) -> Option<f64> {
    let mut rng = rng_from(params.seed, &[0x686f, cycle_id as u64, b as u64]);
    let len = cycle.len();
    let mut entries = Vec::with_capacity(len);
    for i in 0..len {
        let (x, y) = (cycle[i], cycle[(i + 1) % len]);
        let e = (x.min(y), x.max(y));
        let s = samples(e)?;
        if s.proxy_degenerate {
            return None;
        }
        let q = s.resampled_q(&mut rng, s.draw_size(params), params.lambda)?;
        entries.push((e, s.p.transpose() * q));
    }
    let graph = DefectGraph::new(entries).ok()?;
    let (_, d) = crate::gauge::holonomy(cycle, &graph, k).ok()?;
    Some(d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CycleBootstrap {
    pub values: Vec<f64>,
    pub dropped: usize,
}

pub fn bootstrap_cycle<'a>(
    cycle: &[usize],
    cycle_id: usize,
    samples: &dyn Fn(Edge) -> Option<&'a EdgeSample>,
    params: &BootstrapParams,
    k: usize,
) -> CycleBootstrap {
    let mut values = Vec::with_capacity(params.replicates);
    for b in 0..params.replicates {
        if let Some(d) = bootstrap_cycle_replicate(cycle, cycle_id, b, samples, params, k) {
            values.push(d);
        }
    }
    let dropped = params.replicates - values.len();
    CycleBootstrap { values, dropped }
}

/// Replaces every usable chart basis with a Haar-random orthonormal d×k
/// frame drawn from `(seed, chart)`.
pub fn null_random_bases(atlas: &Atlas, seed: u64) -> Atlas {
    let mut out = atlas.clone();
    let d = atlas.centroids.cols();
    let k = atlas.k();
    for (c, chart) in out.charts.iter_mut().enumerate() {
        if chart.basis.is_some() {
            let mut rng = rng_from(derive_seed(seed, &[0x6e75_6c6c]), &[c as u64]);
            chart.basis = Some(haar_stiefel(d, k, &mut rng));
        }
    }
    out
}

/// Loop product deviation `‖∏ g_i − ∏ g̃_i‖_F` for two defect sequences
/// composed right to left.
pub fn loop_product_gap(a: &[DMatrix<f64>], b: &[DMatrix<f64>]) -> f64 {
    let k = a.first().map_or(0, |m| m.nrows());
    let prod = |s: &[DMatrix<f64>]| s.iter().fold(DMatrix::identity(k, k), |h, g| g * h);
    crate::linalg::frobenius(&(prod(a) - prod(b)))
}

/// `‖h − I‖_F` of the loop product, for tests and reports.
pub fn loop_defect(seq: &[DMatrix<f64>]) -> f64 {
    let k = seq.first().map_or(0, |m| m.nrows());
    distance_from_identity(&seq.iter().fold(DMatrix::identity(k, k), |h, g| g * h))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::rotation2;
    use crate::seed::normal;

    fn sample(rot: f64, n: usize, noise: f64, seed: u64) -> EdgeSample {
        let mut rng = rng_from(seed, &[]);
        let z_u = DMatrix::from_fn(2, n, |_, _| normal(&mut rng) * 3.0);
        let z_v = rotation2(rot) * &z_u + DMatrix::from_fn(2, n, |_, _| noise * normal(&mut rng));
        EdgeSample { edge: (0, 1), z_u, z_v, p: DMatrix::identity(2, 2), proxy_degenerate: false }
    }

    fn params(n_boot: usize, seed: u64) -> BootstrapParams {
        BootstrapParams { n_boot, replicates: 64, lambda: 1e-2, seed, cap_to_overlap: false }
    }

    #[test]
    fn replicate_streams_are_reproducible() {
        let s = sample(0.3, 200, 0.5, 1);
        assert_eq!(bootstrap_edge_shear(&s, &params(128, 5)), bootstrap_edge_shear(&s, &params(128, 5)));
        assert_ne!(bootstrap_edge_shear(&s, &params(128, 5)), bootstrap_edge_shear(&s, &params(128, 6)));
    }

    #[test]
    fn noiseless_edge_has_zero_spread() {
        let s = sample(0.3, 50, 0.0, 2);
        let vals = bootstrap_edge_shear(&s, &params(64, 1));
        let sum = Summary::of(&vals).unwrap();
        assert!(sum.std < 1e-12);
    }

    #[test]
    fn capped_draws_and_empty_edges() {
        let mut s = sample(0.0, 10, 0.1, 3);
        let mut p = params(1000, 1);
        p.cap_to_overlap = true;
        assert_eq!(bootstrap_edge_shear(&s, &p).len(), 64);
        s.z_u = DMatrix::zeros(2, 0);
        s.z_v = DMatrix::zeros(2, 0);
        assert!(bootstrap_edge_shear(&s, &p).is_empty());
    }

    #[test]
    fn identity_loop_replicates_vanish_and_missing_edges_drop() {
        let mk = |e: Edge, seed| {
            let mut s = sample(0.0, 100, 0.0, seed);
            s.edge = e;
            s
        };
        let edges = [mk((0, 1), 1), mk((1, 2), 2), mk((0, 2), 3)];
        let lookup = |e: Edge| edges.iter().find(|s| s.edge == e);
        let out = bootstrap_cycle(&[1, 0, 2], 0, &lookup, &params(50, 1), 2);
        assert_eq!(out.dropped, 0);
        assert!(out.values.iter().all(|&d| d <= 1e-8));
        let missing = |e: Edge| edges[..2].iter().find(|s| s.edge == e);
        let out = bootstrap_cycle(&[1, 0, 2], 0, &missing, &params(50, 1), 2);
        assert_eq!(out.dropped, 64);
        assert!(out.values.is_empty());
    }
}
