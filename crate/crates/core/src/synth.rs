//! Synthetic activation/gradient datasets with recorded ground truth.
//!
//! Two layouts are supported. `Gaussian` draws each cluster as
//! `center ± (F a + σ e)` in antithetic pairs, so every cluster mean is its
//! center. `Planted` builds an atlas whose overlap coordinates satisfy
//! `Z_v = R_vu Z_u` exactly after PCA and chart centering: every chart lives
//! on a tilted k-plane of a shared 2k-dimensional block, each edge side gets
//! a population whose off-plane component encodes the planted rotation, and
//! a balancing population per chart cancels the cross-covariance that would
//! otherwise tilt the PCA basis. Balancing populations sit on the far side of
//! their chart, where the runner-up centroid must not be a planted
//! neighbour; generation fails if the geometry does not route them away.

use alloc::vec::Vec;
use alloc::{format, vec};
use nalgebra::{DMatrix, DVector};

use crate::data::{nearest_two, SampleMatrix};
use crate::error::{Error, Result};
use crate::seed::{normal, rng_from, Rng};

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GaussianCluster {
    pub center: Vec<f64>,
    /// Factor columns, each a vector in ℝ^d; the count is the factor rank.
    #[cfg_attr(feature = "serde", serde(default))]
    pub axes: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub noise: f64,
    pub n: usize,
    /// Optional d×d orthogonal matrix (rows) applied to the factor.
    #[cfg_attr(feature = "serde", serde(default))]
    pub rotation: Option<Vec<Vec<f64>>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PlantedEdge {
    pub u: usize,
    pub v: usize,
    /// k×k orthogonal matrix (rows) with `Z_v = R Z_u` on the overlap.
    pub rotation: Vec<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct PlantedSpec {
    pub k: usize,
    /// Per-chart tilt angle of the chart plane inside the shared block.
    pub tilts: Vec<f64>,
    /// Per-chart location in the offset coordinates.
    pub centers: Vec<Vec<f64>>,
    #[cfg_attr(feature = "serde", serde(default))]
    pub pad_dims: usize,
    pub edges: Vec<PlantedEdge>,
    pub n_per_side: usize,
    /// Per-coordinate standard deviation of in-plane coordinates; distinct
    /// values pin the PCA basis to the planted one.
    pub scales: Vec<f64>,
    pub edge_offset: f64,
    pub n_balance: usize,
    pub balance_scale: f64,
    /// Population of charts without planted edges.
    pub n_core: usize,
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(tag = "kind", rename_all = "snake_case"))]
pub enum Layout {
    Gaussian { clusters: Vec<GaussianCluster> },
    Planted(PlantedSpec),
}

/// Gradients are `g = M (x − center) + noise·e` with `M` a seeded random
/// map of the given rank.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct GradientModel {
    pub rank: usize,
    pub noise: f64,
    #[cfg_attr(feature = "serde", serde(default = "one"))]
    pub scale: f64,
}

#[cfg(feature = "serde")]
fn one() -> f64 {
    1.0
}

impl Default for GradientModel {
    fn default() -> Self {
        GradientModel { rank: 4, noise: 0.05, scale: 1.0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
#[cfg_attr(feature = "serde", serde(deny_unknown_fields))]
pub struct SynthSpec {
    pub layout: Layout,
    #[cfg_attr(feature = "serde", serde(default))]
    pub gradients: GradientModel,
    pub seed: u64,
}

#[derive(Debug, Clone)]
pub struct PlantedTransport {
    pub u: usize,
    pub v: usize,
    pub rotation: DMatrix<f64>,
}

#[derive(Debug, Clone)]
pub struct GroundTruth {
    pub labels: Vec<usize>,
    /// Full-dimensional cluster centers.
    pub centers: Vec<Vec<f64>>,
    pub cluster_rotations: Vec<Option<DMatrix<f64>>>,
    /// Planted chart bases (planted layout only).
    pub planted_bases: Vec<DMatrix<f64>>,
    pub planted_edges: Vec<PlantedTransport>,
    pub gradient_map: DMatrix<f64>,
}

impl GroundTruth {
    pub fn n_clusters(&self) -> usize {
        self.centers.len()
    }
}

pub fn matrix_from_rows(rows: &[Vec<f64>], r: usize, c: usize, what: &str) -> Result<DMatrix<f64>> {
    if rows.len() != r || rows.iter().any(|row| row.len() != c) {
        return Err(Error::SynthSpec(format!("{what} must be {r}×{c}")));
    }
    Ok(DMatrix::from_fn(r, c, |i, j| rows[i][j]))
}

pub fn rows_of(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn check_orthogonal(m: &DMatrix<f64>, what: &str) -> Result<()> {
    if crate::linalg::orthonormality_error(m) > 1e-8 {
        return Err(Error::SynthSpec(format!("{what} is not orthogonal")));
    }
    Ok(())
}

/// Generates `(activations, gradients, ground truth)`. A pure function of
/// the spec, seed included.
pub fn synth_atlas_dataset(spec: &SynthSpec) -> Result<(SampleMatrix, SampleMatrix, GroundTruth)> {
    let (x, mut truth) = match &spec.layout {
        Layout::Gaussian { clusters } => gaussian(clusters, spec.seed)?,
        Layout::Planted(p) => planted(p, spec.seed)?,
    };
    let (g, map) = gradients(&x, &truth, &spec.gradients, spec.seed)?;
    truth.gradient_map = map;
    Ok((x, g, truth))
}

fn gaussian(clusters: &[GaussianCluster], seed: u64) -> Result<(SampleMatrix, GroundTruth)> {
    let first = clusters
        .first()
        .ok_or_else(|| Error::SynthSpec("at least one cluster is required".into()))?;
    let d = first.center.len();
    if d == 0 {
        return Err(Error::SynthSpec("dimension must be positive".into()));
    }
    let total: usize = clusters.iter().map(|c| c.n).sum();
    let mut out = SampleMatrix::zeros(total, d);
    let mut labels = Vec::with_capacity(total);
    let mut rotations = Vec::with_capacity(clusters.len());
    let mut row = 0;
    for (ci, c) in clusters.iter().enumerate() {
        if c.center.len() != d {
            return Err(Error::SynthSpec(format!("cluster {ci}: center has wrong dimension")));
        }
        if c.n == 0 {
            return Err(Error::SynthSpec(format!("cluster {ci}: no samples requested")));
        }
        if !(c.noise >= 0.0) {
            return Err(Error::SynthSpec(format!("cluster {ci}: noise must be non-negative")));
        }
        let rank = c.axes.len();
        let mut f = DMatrix::zeros(d, rank);
        for (j, a) in c.axes.iter().enumerate() {
            if a.len() != d {
                return Err(Error::SynthSpec(format!("cluster {ci}: axis {j} has wrong dimension")));
            }
            f.set_column(j, &DVector::from_column_slice(a));
        }
        let rot = match &c.rotation {
            Some(r) => {
                let m = matrix_from_rows(r, d, d, "cluster rotation")?;
                check_orthogonal(&m, "cluster rotation")?;
                f = &m * f;
                Some(m)
            }
            None => None,
        };
        if f.iter().all(|v| *v == 0.0) && c.noise == 0.0 {
            return Err(Error::SynthSpec(format!(
                "cluster {ci}: rank-0 covariance (no factor and no noise)"
            )));
        }
        rotations.push(rot);

        let mut rng = rng_from(seed, &[0x6761_7573, ci as u64]);
        let mut i = 0;
        while i < c.n {
            let a = DVector::from_fn(rank, |_, _| normal(&mut rng));
            let mut y = &f * a;
            for v in y.iter_mut() {
                *v += c.noise * normal(&mut rng);
            }
            for sign in [1.0, -1.0] {
                if i == c.n {
                    break;
                }
                for (dst, (m, yv)) in out.row_mut(row).iter_mut().zip(c.center.iter().zip(y.iter())) {
                    *dst = m + sign * yv;
                }
                labels.push(ci);
                row += 1;
                i += 1;
            }
        }
    }
    let truth = GroundTruth {
        labels,
        centers: clusters.iter().map(|c| c.center.clone()).collect(),
        cluster_rotations: rotations,
        planted_bases: Vec::new(),
        planted_edges: Vec::new(),
        gradient_map: DMatrix::zeros(0, 0),
    };
    Ok((out, truth))
}

/// `n` in-plane coordinate vectors in antithetic pairs whose second moment
/// is exactly `n·diag(s²)` (up to rounding).
fn whitened_pairs(rng: &mut Rng, n: usize, scales: &[f64]) -> Result<Vec<DVector<f64>>> {
    let k = scales.len();
    if n % 2 != 0 || n / 2 < k {
        return Err(Error::SynthSpec(format!(
            "population of {n} cannot be whitened in {k} dimensions (need an even count ≥ {})",
            2 * k
        )));
    }
    let half: Vec<DVector<f64>> = (0..n / 2).map(|_| DVector::from_fn(k, |_, _| normal(rng))).collect();
    let mut s = DMatrix::zeros(k, k);
    for a in &half {
        s += a * a.transpose() * 2.0;
    }
    let chol = s
        .cholesky()
        .ok_or_else(|| Error::SynthSpec("whitening failed: singular draw".into()))?;
    let root_n = libm::sqrt(n as f64);
    let mut out = Vec::with_capacity(n);
    for a in &half {
        let w = chol.l().solve_lower_triangular(a).expect("cholesky factor is invertible");
        let al = DVector::from_fn(k, |i, _| scales[i] * root_n * w[i]);
        out.push(al.clone());
        out.push(-al);
    }
    Ok(out)
}

struct Population {
    g: DMatrix<f64>,
    offset: Vec<f64>,
    coords: Vec<DVector<f64>>,
    kind: PopKind,
}

#[derive(Clone, Copy, PartialEq)]
enum PopKind {
    EdgeSide(usize, usize),
    Filler,
}

fn planted(p: &PlantedSpec, seed: u64) -> Result<(SampleMatrix, GroundTruth)> {
    let k = p.k;
    let c = p.tilts.len();
    if k == 0 {
        return Err(Error::SynthSpec("k must be positive".into()));
    }
    if p.centers.len() != c || c == 0 {
        return Err(Error::SynthSpec("one center per tilt is required".into()));
    }
    let m_off = p.centers[0].len();
    if p.centers.iter().any(|x| x.len() != m_off) {
        return Err(Error::SynthSpec("centers must share a dimension".into()));
    }
    if p.scales.len() != k || p.scales.iter().any(|s| !(*s > 0.0)) {
        return Err(Error::SynthSpec("scales must be k positive values".into()));
    }
    let d = 2 * k + m_off + p.pad_dims;
    let off_centers = SampleMatrix::from_row_major(c, m_off, p.centers.concat());

    let ident = DMatrix::<f64>::identity(k, k);
    let mut rots = Vec::with_capacity(p.edges.len());
    for e in &p.edges {
        if e.u >= c || e.v >= c || e.u == e.v {
            return Err(Error::SynthSpec(format!("edge ({},{}) is invalid", e.u, e.v)));
        }
        let r = matrix_from_rows(&e.rotation, k, k, "edge rotation")?;
        check_orthogonal(&r, "edge rotation")?;
        rots.push(r);
    }

    let dir = |a: usize, b: usize| -> Vec<f64> {
        let diff: Vec<f64> = p.centers[b].iter().zip(&p.centers[a]).map(|(x, y)| x - y).collect();
        let n = libm::sqrt(diff.iter().map(|x| x * x).sum::<f64>());
        diff.iter().map(|x| x / n).collect()
    };
    let second_moment = |n: usize| DMatrix::from_diagonal(&DVector::from_fn(k, |i, _| n as f64 * p.scales[i] * p.scales[i]));

    let mut pops_per_chart: Vec<Vec<Population>> = (0..c).map(|_| Vec::new()).collect();
    for (ei, e) in p.edges.iter().enumerate() {
        let delta = p.tilts[e.v] - p.tilts[e.u];
        let (sd, cd) = (libm::sin(delta), libm::cos(delta));
        let r = &rots[ei];
        let (g_u, g_v) = if libm::fabs(sd) < 1e-12 {
            if crate::linalg::frobenius(&(r - &ident * cd)) > 1e-12 {
                return Err(Error::SynthSpec(format!(
                    "edge ({},{}): charts share a plane, only the trivial transport can be planted",
                    e.u, e.v
                )));
            }
            (DMatrix::zeros(k, k), DMatrix::zeros(k, k))
        } else {
            ((r - &ident * cd) / sd, (&ident * cd - r.transpose()) / sd)
        };
        for (chart, other, g) in [(e.u, e.v, g_u), (e.v, e.u, g_v)] {
            let mut rng = rng_from(seed, &[0x706c_616e, ei as u64, chart as u64]);
            let coords = whitened_pairs(&mut rng, p.n_per_side, &p.scales)?;
            let step = dir(chart, other);
            let offset = p.centers[chart].iter().zip(&step).map(|(m, s)| m + p.edge_offset * s).collect();
            pops_per_chart[chart].push(Population {
                g,
                offset,
                coords,
                kind: PopKind::EdgeSide(chart.min(other), chart.max(other)),
            });
        }
    }

    let planted_pairs: Vec<(usize, usize)> = p.edges.iter().map(|e| (e.u.min(e.v), e.u.max(e.v))).collect();
    for (chart, pops) in pops_per_chart.iter_mut().enumerate() {
        let mut rng = rng_from(seed, &[0x6261_6c61, chart as u64]);
        if pops.is_empty() {
            let coords = whitened_pairs(&mut rng, p.n_core, &p.scales)?;
            pops.push(Population {
                g: DMatrix::zeros(k, k),
                offset: p.centers[chart].clone(),
                coords,
                kind: PopKind::Filler,
            });
            continue;
        }
        let mut cross = DMatrix::zeros(k, k);
        let mut pull = vec![0.0; m_off];
        for pop in pops.iter() {
            cross += &pop.g * second_moment(pop.coords.len());
            for (acc, (o, m)) in pull.iter_mut().zip(pop.offset.iter().zip(&p.centers[chart])) {
                *acc += pop.coords.len() as f64 * (o - m);
            }
        }
        let bal_scales = vec![p.balance_scale; k];
        let coords = whitened_pairs(&mut rng, p.n_balance, &bal_scales)?;
        let nb = p.n_balance as f64;
        let g = -cross / (nb * p.balance_scale * p.balance_scale);
        let offset = p.centers[chart].iter().zip(&pull).map(|(m, s)| m - s / nb).collect();
        pops.push(Population { g, offset, coords, kind: PopKind::Filler });
    }

    for (chart, pops) in pops_per_chart.iter().enumerate() {
        for pop in pops {
            let (a, b) = nearest_two(&pop.offset, &off_centers);
            let pair = (a.min(b), a.max(b));
            let ok = a == chart
                && match pop.kind {
                    PopKind::EdgeSide(u, v) => pair == (u, v),
                    PopKind::Filler => !planted_pairs.contains(&pair),
                };
            if !ok {
                return Err(Error::SynthSpec(format!(
                    "chart {chart}: a population lands in overlap ({},{}); adjust centers or offsets",
                    pair.0, pair.1
                )));
            }
        }
    }

    let bases: Vec<DMatrix<f64>> = p.tilts.iter().map(|&phi| tilted_basis(d, k, phi)).collect();
    let perps: Vec<DMatrix<f64>> = p.tilts.iter().map(|&phi| tilted_basis(d, k, phi + core::f64::consts::FRAC_PI_2)).collect();

    let total: usize = pops_per_chart.iter().flatten().map(|p| p.coords.len()).sum();
    let mut out = SampleMatrix::zeros(total, d);
    let mut labels = Vec::with_capacity(total);
    let mut row = 0;
    for (chart, pops) in pops_per_chart.iter().enumerate() {
        for pop in pops {
            for a in &pop.coords {
                let xv = &bases[chart] * a + &perps[chart] * (&pop.g * a);
                let dst = out.row_mut(row);
                for i in 0..2 * k {
                    dst[i] = xv[i];
                }
                dst[2 * k..2 * k + m_off].copy_from_slice(&pop.offset);
                labels.push(chart);
                row += 1;
            }
        }
    }

    let centers = p
        .centers
        .iter()
        .map(|m| {
            let mut full = vec![0.0; d];
            full[2 * k..2 * k + m_off].copy_from_slice(m);
            full
        })
        .collect();
    let planted_edges = p
        .edges
        .iter()
        .zip(rots)
        .map(|(e, r)| PlantedTransport { u: e.u, v: e.v, rotation: r })
        .collect();
    let truth = GroundTruth {
        labels,
        centers,
        cluster_rotations: vec![None; c],
        planted_bases: bases,
        planted_edges,
        gradient_map: DMatrix::zeros(0, 0),
    };
    Ok((out, truth))
}

/// `[cos φ I_k; sin φ I_k]` embedded in the leading 2k coordinates of ℝ^d.
pub fn tilted_basis(d: usize, k: usize, phi: f64) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(d, k);
    for j in 0..k {
        b[(j, j)] = libm::cos(phi);
        b[(k + j, j)] = libm::sin(phi);
    }
    b
}

fn gradients(x: &SampleMatrix, truth: &GroundTruth, model: &GradientModel, seed: u64) -> Result<(SampleMatrix, DMatrix<f64>)> {
    let d = x.cols();
    if model.rank == 0 && model.noise == 0.0 {
        return Err(Error::SynthSpec("gradient model has rank 0 and no noise".into()));
    }
    if model.rank > d {
        return Err(Error::SynthSpec(format!("gradient rank {} exceeds dimension {d}", model.rank)));
    }
    let mut rng = rng_from(seed, &[0x6772_6164]);
    let a = DMatrix::from_fn(d, model.rank, |_, _| normal(&mut rng));
    let b = DMatrix::from_fn(d, model.rank, |_, _| normal(&mut rng));
    let a = a * (model.scale / libm::sqrt(d as f64));
    let bt = b.transpose();
    let mut g = SampleMatrix::zeros(x.rows(), d);
    let mut noise_rng = rng_from(seed, &[0x6e6f_6973]);
    for i in 0..x.rows() {
        let center = &truth.centers[truth.labels[i]];
        let y = DVector::from_fn(d, |j, _| x.row(i)[j] - center[j]);
        let gi = &a * (&bt * y);
        for (dst, v) in g.row_mut(i).iter_mut().zip(gi.iter()) {
            *dst = v + model.noise * normal(&mut noise_rng);
        }
    }
    Ok((g, a * bt))
}

/// Ready-made specs used by tests, the acceptance suite and `synth`.
pub mod presets {
    use super::*;
    use crate::linalg::{haar_stiefel, rotation2};

    /// Four charts at the corners of a regular tetrahedron in the offset
    /// coordinates. Charts 0, 1, 2 form a triangle of planted planar
    /// rotations whose product around the loop is a rotation by `net`;
    /// chart 3 only absorbs the balancing populations. k = 2, d = 8.
    pub fn planted_triangle(net: f64, seed: u64) -> SynthSpec {
        let side = 10_000.0;
        let s = side / (2.0 * core::f64::consts::SQRT_2);
        let centers = vec![vec![s, s, s], vec![s, -s, -s], vec![-s, s, -s], vec![-s, -s, s]];
        let step = net / 3.0;
        let edge = |u, v, th: f64| PlantedEdge { u, v, rotation: rows_of(&rotation2(th)) };
        let deg = core::f64::consts::PI / 180.0;
        SynthSpec {
            layout: Layout::Planted(PlantedSpec {
                k: 2,
                tilts: vec![0.0, 40.0 * deg, 80.0 * deg, 20.0 * deg],
                centers,
                pad_dims: 1,
                edges: vec![edge(0, 1, step), edge(1, 2, step), edge(0, 2, -step)],
                n_per_side: 300,
                scales: vec![100.0, 70.0],
                edge_offset: 50.0,
                n_balance: 100,
                balance_scale: 500.0,
                n_core: 40,
            }),
            gradients: GradientModel { rank: 4, noise: 0.05, scale: 1.0 },
            seed,
        }
    }

    fn random_centers(rng: &mut Rng, c: usize, d: usize, spread: f64) -> Vec<Vec<f64>> {
        (0..c).map(|_| (0..d).map(|_| spread * normal(rng)).collect()).collect()
    }

    /// Gaussian clusters at random centers, each with its own random
    /// orthonormal k-frame (recorded as a planted rotation of a common
    /// reference frame) and anisotropic factor scales.
    pub fn rotated_gaussians(c: usize, d: usize, k: usize, n_per: usize, seed: u64) -> SynthSpec {
        let mut rng = rng_from(seed, &[0x726f_7467]);
        let centers = random_centers(&mut rng, c, d, 3.0);
        let base: Vec<Vec<f64>> = (0..k)
            .map(|j| {
                let mut e = vec![0.0; d];
                e[j] = 3.0 - 2.0 * j as f64 / k as f64;
                e
            })
            .collect();
        let clusters = centers
            .into_iter()
            .map(|center| {
                let rot = haar_stiefel(d, d, &mut rng);
                GaussianCluster {
                    center,
                    axes: base.clone(),
                    noise: 0.3,
                    n: n_per,
                    rotation: Some(rows_of(&rot)),
                }
            })
            .collect();
        SynthSpec {
            layout: Layout::Gaussian { clusters },
            gradients: GradientModel::default(),
            seed,
        }
    }

    /// Every cluster varies inside one shared k-plane (the leading k
    /// coordinates) while the centers spread over the remaining coordinates,
    /// so learned chart bases agree and planted transports are trivial.
    /// `anisotropy = 0` gives isotropic in-plane scales.
    pub fn shared_plane(c: usize, d: usize, k: usize, n_per: usize, noise: f64, anisotropy: f64, seed: u64) -> SynthSpec {
        assert!(d > k, "shared_plane needs room for the centers");
        let mut rng = rng_from(seed, &[0x7368_6172]);
        let clusters = (0..c)
            .map(|_| {
                let mut center = vec![0.0; d];
                for v in center.iter_mut().skip(k) {
                    *v = 2.0 * normal(&mut rng);
                }
                let axes = (0..k)
                    .map(|j| {
                        let mut e = vec![0.0; d];
                        e[j] = 3.0 * (1.0 - anisotropy * j as f64 / k as f64);
                        e
                    })
                    .collect();
                GaussianCluster { center, axes, noise, n: n_per, rotation: None }
            })
            .collect();
        SynthSpec {
            layout: Layout::Gaussian { clusters },
            gradients: GradientModel::default(),
            seed,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::orthonormality_error;

    fn cluster(center: Vec<f64>, axes: Vec<Vec<f64>>, noise: f64, n: usize) -> GaussianCluster {
        GaussianCluster { center, axes, noise, n, rotation: None }
    }

    fn three_clusters(seed: u64) -> SynthSpec {
        let mut clusters = Vec::new();
        for c in 0..3 {
            let mut center = vec![0.0; 8];
            center[c] = 50.0;
            let mut ax = vec![0.0; 8];
            ax[3 + c] = 2.0;
            clusters.push(cluster(center, vec![ax], 0.5, 101));
        }
        SynthSpec { layout: Layout::Gaussian { clusters }, gradients: GradientModel::default(), seed }
    }

    #[test]
    fn gaussian_generation_is_deterministic() {
        let a = synth_atlas_dataset(&three_clusters(7)).unwrap();
        let b = synth_atlas_dataset(&three_clusters(7)).unwrap();
        assert_eq!(a.0, b.0);
        assert_eq!(a.1, b.1);
        assert_eq!(a.2.labels, b.2.labels);
        let c = synth_atlas_dataset(&three_clusters(8)).unwrap();
        assert_ne!(a.0, c.0);
        assert_eq!(a.0.rows(), 303);
    }

    #[test]
    fn antithetic_pairs_center_each_cluster() {
        let spec = SynthSpec {
            layout: Layout::Gaussian { clusters: vec![cluster(vec![1.0, -2.0], vec![vec![1.0, 1.0]], 0.2, 10)] },
            gradients: GradientModel { rank: 1, noise: 0.0, scale: 1.0 },
            seed: 3,
        };
        let (x, _, _) = synth_atlas_dataset(&spec).unwrap();
        for j in 0..2 {
            let m: f64 = (0..10).map(|i| x.row(i)[j]).sum::<f64>() / 10.0;
            assert!((m - spec_center(&spec)[j]).abs() < 1e-12);
        }
    }

    fn spec_center(spec: &SynthSpec) -> Vec<f64> {
        match &spec.layout {
            Layout::Gaussian { clusters } => clusters[0].center.clone(),
            _ => unreachable!(),
        }
    }

    #[test]
    fn rank_zero_request_is_rejected() {
        let spec = SynthSpec {
            layout: Layout::Gaussian { clusters: vec![cluster(vec![0.0; 3], vec![], 0.0, 4)] },
            gradients: GradientModel::default(),
            seed: 1,
        };
        assert!(matches!(synth_atlas_dataset(&spec), Err(Error::SynthSpec(_))));
    }

    #[test]
    fn planted_triangle_generates_with_exact_chart_means() {
        let spec = presets::planted_triangle(core::f64::consts::FRAC_PI_2, 1);
        let (x, g, truth) = synth_atlas_dataset(&spec).unwrap();
        assert_eq!(x.rows(), g.rows());
        assert_eq!(x.cols(), 8);
        for b in &truth.planted_bases {
            assert!(orthonormality_error(b) < 1e-12);
        }
        for c in 0..4 {
            let idx: Vec<usize> = (0..x.rows()).filter(|&i| truth.labels[i] == c).collect();
            for j in 0..8 {
                let m: f64 = idx.iter().map(|&i| x.row(i)[j]).sum::<f64>() / idx.len() as f64;
                let scale = 1e-9 * truth.centers[c][j].abs().max(1.0);
                assert!((m - truth.centers[c][j]).abs() < scale.max(1e-9), "chart {c} coord {j}: {m}");
            }
        }
    }

    #[test]
    fn misrouted_planted_geometry_is_rejected() {
        let mut spec = presets::planted_triangle(1.0, 1);
        if let Layout::Planted(p) = &mut spec.layout {
            p.edge_offset = 9_000.0;
        }
        assert!(matches!(synth_atlas_dataset(&spec), Err(Error::SynthSpec(_))));
    }
}
