//! Per-edge transports: ridge fit, polar factor, proxy, defect, shearing
//! and the transfer-mismatch bound record.

use alloc::format;
use alloc::vec::Vec;
use nalgebra::DMatrix;

use crate::atlas::{Atlas, Edge, OverlapSet};
use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg::{frobenius, min_eigenvalue, polar_factor, sigma_min, sym_eigen_desc};

/// Proxy overlap matrices with a smaller singular value are degenerate.
pub const PROXY_DEGENERACY: f64 = 1e-8;
pub const SLACK_EPS: f64 = 1e-12;
/// Edges whose overlap covariance has a smaller eigenvalue are left out of
/// slack histograms.
pub const SLACK_REPORT_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct ShearRecord {
    pub d_shear: f64,
    pub delta_hat: f64,
    pub lambda_min_sigma: f64,
    pub lb_hat: f64,
    pub slack: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EdgeTransport {
    pub edge: Edge,
    pub n_overlap: usize,
    pub t: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub p: DMatrix<f64>,
    /// Defect `Pᵀ Q`, mapping chart `u` to chart `v` for `edge = (u, v)`.
    pub g: DMatrix<f64>,
    pub sigma_min: f64,
    pub proxy_sigma_min: f64,
    pub proxy_degenerate: bool,
    pub shear: ShearRecord,
}

/// Chart coordinates `Bᵀ(x − origin)` of the listed samples, as a k×n block.
pub fn chart_coordinates(data: &SampleMatrix, idx: &[usize], basis: &DMatrix<f64>, origin: Option<&[f64]>) -> DMatrix<f64> {
    let d = data.cols();
    let x = DMatrix::from_fn(d, idx.len(), |j, c| {
        let v = data.row(idx[c])[j];
        match origin {
            Some(o) => v - o[j],
            None => v,
        }
    });
    basis.transpose() * x
}

/// `(Z_u, Z_v)` for an overlap set of `atlas`; `None` if either chart is
/// unusable.
pub fn overlap_coordinates(data: &SampleMatrix, atlas: &Atlas, edge: Edge, idx: &[usize]) -> Option<(DMatrix<f64>, DMatrix<f64>)> {
    let (u, v) = edge;
    let bu = atlas.charts[u].basis.as_ref()?;
    let bv = atlas.charts[v].basis.as_ref()?;
    Some((
        chart_coordinates(data, idx, bu, atlas.chart_origin(u)),
        chart_coordinates(data, idx, bv, atlas.chart_origin(v)),
    ))
}

/// Ridge map `T = Z_v Z_uᵀ (Z_u Z_uᵀ + λI)⁻¹`, via a Cholesky solve of
/// `(Z_u Z_uᵀ + λI) X = Z_u Z_vᵀ` and `T = Xᵀ`.
pub fn fit_transport(z_u: &DMatrix<f64>, z_v: &DMatrix<f64>, lambda: f64, edge: Edge) -> Result<DMatrix<f64>> {
    let fail = |reason: &str| Error::TransportSolve { u: edge.0, v: edge.1, reason: reason.into() };
    if z_u.ncols() == 0 || z_u.ncols() != z_v.ncols() {
        return Err(fail("overlap blocks are empty or misaligned"));
    }
    if !(lambda >= 0.0) {
        return Err(fail("ridge strength must be non-negative"));
    }
    let k = z_u.nrows();
    let mut a = z_u * z_u.transpose();
    for i in 0..k {
        a[(i, i)] += lambda;
    }
    if lambda == 0.0 {
        let (vals, _) = sym_eigen_desc(&a);
        let top = vals.first().copied().unwrap_or(0.0);
        let bottom = vals.last().copied().unwrap_or(0.0);
        if !(top > 0.0) || bottom <= 1e-13 * top {
            return Err(fail("Z_u Z_uᵀ is singular and no ridge is applied"));
        }
    }
    let b = z_u * z_v.transpose();
    let chol = a.cholesky().ok_or_else(|| fail("normal matrix is not positive definite"))?;
    Ok(chol.solve(&b).transpose())
}

/// Proxy `polar(B_vᵀ B_u)` and the smallest singular value of `B_vᵀ B_u`.
pub fn proxy(b_u: &DMatrix<f64>, b_v: &DMatrix<f64>) -> (DMatrix<f64>, f64) {
    let s = b_v.transpose() * b_u;
    (polar_factor(&s), sigma_min(&s))
}

/// `‖Q − P‖_F / (2√k)`.
pub fn shear_score(q: &DMatrix<f64>, p: &DMatrix<f64>) -> f64 {
    let k = q.nrows() as f64;
    frobenius(&(q - p)) / (2.0 * libm::sqrt(k))
}

pub fn shear_record(q: &DMatrix<f64>, p: &DMatrix<f64>, z_u: &DMatrix<f64>) -> Result<ShearRecord> {
    let n = z_u.ncols() as f64;
    let k = q.nrows() as f64;
    let a = q - p;
    let a2 = a.iter().map(|x| x * x).sum::<f64>();
    let az = &a * z_u;
    let delta_hat = az.iter().map(|x| x * x).sum::<f64>() / n;
    let sigma = (z_u * z_u.transpose()) / n;
    let lambda_min_sigma = min_eigenvalue(&sigma);
    let lb_hat = lambda_min_sigma * a2;
    let d_shear = shear_score(q, p);
    let via_shear = 4.0 * k * lambda_min_sigma * d_shear * d_shear;
    if libm::fabs(via_shear - lb_hat) > 1e-9 * lb_hat.abs().max(1.0) {
        return Err(Error::InternalInvariant(format!(
            "bound identity mismatch: 4kλd² = {via_shear}, λ‖Q−P‖² = {lb_hat}"
        )));
    }
    let slack = delta_hat / lb_hat.max(SLACK_EPS);
    Ok(ShearRecord { d_shear, delta_hat, lambda_min_sigma, lb_hat, slack })
}

/// Full per-edge estimate from prepared coordinate blocks.
pub fn estimate_from_blocks(
    edge: Edge,
    z_u: &DMatrix<f64>,
    z_v: &DMatrix<f64>,
    b_u: &DMatrix<f64>,
    b_v: &DMatrix<f64>,
    lambda: f64,
) -> Result<EdgeTransport> {
    let t = fit_transport(z_u, z_v, lambda, edge)?;
    let q = polar_factor(&t);
    let (p, proxy_sigma_min) = proxy(b_u, b_v);
    let g = p.transpose() * &q;
    let shear = shear_record(&q, &p, z_u)?;
    Ok(EdgeTransport {
        edge,
        n_overlap: z_u.ncols(),
        sigma_min: sigma_min(&t),
        t,
        q,
        p,
        g,
        proxy_sigma_min,
        proxy_degenerate: proxy_sigma_min < PROXY_DEGENERACY,
        shear,
    })
}

/// `Ok(None)` when either chart of the edge is unusable.
pub fn estimate_edge(data: &SampleMatrix, atlas: &Atlas, overlap: &OverlapSet, lambda: f64) -> Result<Option<EdgeTransport>> {
    let (u, v) = overlap.edge;
    let Some((z_u, z_v)) = overlap_coordinates(data, atlas, overlap.edge, &overlap.indices) else {
        return Ok(None);
    };
    let bu = atlas.charts[u].basis.as_ref().expect("usable chart");
    let bv = atlas.charts[v].basis.as_ref().expect("usable chart");
    estimate_from_blocks(overlap.edge, &z_u, &z_v, bu, bv, lambda).map(Some)
}

/// Sequential estimate over every usable edge, sorted by edge.
pub fn estimate_all(data: &SampleMatrix, atlas: &Atlas, lambda: f64) -> Result<Vec<EdgeTransport>> {
    let mut out = Vec::new();
    for o in &atlas.overlaps {
        if let Some(t) = estimate_edge(data, atlas, o, lambda)? {
            out.push(t);
        }
    }
    Ok(out)
}

/// Edges whose transport has `σ_min(T) ≥ s_min`.
pub fn persistence_filter(records: &[EdgeTransport], s_min: f64) -> Vec<&EdgeTransport> {
    records.iter().filter(|r| r.sigma_min >= s_min).collect()
}
