//! Small dense linear-algebra helpers on top of nalgebra.

use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::seed::{normal, Rng};

/// Orthogonal factor `U Vᵀ` of the polar decomposition, from a thin SVD.
/// Defined for singular input too, where it is one of many valid factors.
pub fn polar_factor(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let u = svd.u.expect("svd requested u");
    let v_t = svd.v_t.expect("svd requested v_t");
    u * v_t
}

pub fn singular_values(m: &DMatrix<f64>) -> Vec<f64> {
    let mut s: Vec<f64> = m.clone().svd(false, false).singular_values.iter().copied().collect();
    s.sort_by(|a, b| b.total_cmp(a));
    s
}

pub fn sigma_min(m: &DMatrix<f64>) -> f64 {
    singular_values(m).last().copied().unwrap_or(0.0)
}

pub fn frobenius(m: &DMatrix<f64>) -> f64 {
    libm::sqrt(m.iter().map(|x| x * x).sum::<f64>())
}

/// `‖m - I‖_F` for a square matrix.
pub fn distance_from_identity(m: &DMatrix<f64>) -> f64 {
    let mut acc = 0.0;
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let d = m[(i, j)] - if i == j { 1.0 } else { 0.0 };
            acc += d * d;
        }
    }
    libm::sqrt(acc)
}

/// `‖BᵀB - I‖_F`, the departure of the columns of `b` from orthonormality.
pub fn orthonormality_error(b: &DMatrix<f64>) -> f64 {
    distance_from_identity(&(b.transpose() * b))
}

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted in
/// descending order (stable on ties).
pub fn sym_eigen_desc(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = m.nrows();
    let eig = m.clone().symmetric_eigen();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    sym_eigen_desc(m).0.last().copied().unwrap_or(0.0)
}

/// Flips each column so that its largest-magnitude entry (lowest index on
/// ties) is positive.
pub fn fix_column_signs(b: &mut DMatrix<f64>) {
    for j in 0..b.ncols() {
        let mut best = 0;
        let mut best_abs = -1.0;
        for i in 0..b.nrows() {
            let a = b[(i, j)].abs();
            if a > best_abs {
                best_abs = a;
                best = i;
            }
        }
        if b[(best, j)] < 0.0 {
            b.column_mut(j).neg_mut();
        }
    }
}

/// Modified Gram-Schmidt on the columns of `b`, completing with standard
/// basis vectors when a column collapses. Returns a matrix with exactly
/// `b.ncols()` orthonormal columns (requires `ncols <= nrows`).
pub fn orthonormalize(b: &DMatrix<f64>) -> DMatrix<f64> {
    let (d, k) = b.shape();
    let mut out: Vec<DVector<f64>> = Vec::with_capacity(k);
    let mut next_std = 0;
    for j in 0..k {
        let mut v = b.column(j).into_owned();
        let mut ok = reduce(&mut v, &out);
        while !ok && next_std < d {
            v = DVector::zeros(d);
            v[next_std] = 1.0;
            next_std += 1;
            ok = reduce(&mut v, &out);
        }
        out.push(v);
    }
    DMatrix::from_columns(&out)
}

fn reduce(v: &mut DVector<f64>, basis: &[DVector<f64>]) -> bool {
    let n0 = v.norm();
    if n0 == 0.0 {
        return false;
    }
    for _ in 0..2 {
        for q in basis {
            let c = q.dot(v);
            v.axpy(-c, q, 1.0);
        }
    }
    let n = v.norm();
    if n <= 1e-10 * n0.max(1.0) {
        return false;
    }
    *v /= n;
    true
}

/// Leading principal directions of the rows of `x` (n×d), which the caller
/// has already centred if centring is wanted.
#[derive(Debug, Clone)]
pub struct Principal {
    /// d×k, orthonormal columns, sign-normalised.
    pub basis: DMatrix<f64>,
    /// Second moments `(1/n)‖X b_j‖²` along each returned direction.
    pub variances: Vec<f64>,
}

pub fn principal_directions(x: &DMatrix<f64>, k: usize) -> Principal {
    let (n, d) = x.shape();
    assert!(k <= d, "cannot take {k} directions in dimension {d}");
    let scale = 1.0 / (n.max(1) as f64);
    let raw = if d <= n || d <= 256 {
        let cov = (x.transpose() * x) * scale;
        let (_, vecs) = sym_eigen_desc(&cov);
        vecs.columns(0, k).into_owned()
    } else {
        let gram = (x * x.transpose()) * scale;
        let (vals, vecs) = sym_eigen_desc(&gram);
        let top = vals.first().copied().unwrap_or(0.0).max(0.0);
        let mut cols = Vec::new();
        for (i, &lam) in vals.iter().enumerate().take(k) {
            if lam <= 1e-12 * top || lam <= 0.0 {
                break;
            }
            let v = x.transpose() * vecs.column(i);
            cols.push(v / libm::sqrt(lam / scale));
        }
        while cols.len() < k {
            cols.push(DVector::zeros(d));
        }
        DMatrix::from_columns(&cols)
    };
    let mut basis = orthonormalize(&raw);
    fix_column_signs(&mut basis);
    let proj = x * &basis;
    let variances = (0..k).map(|j| proj.column(j).norm_squared() * scale).collect();
    Principal { basis, variances }
}

/// Haar-distributed d×k matrix with orthonormal columns (QR of a Gaussian
/// matrix with the sign of R's diagonal folded into Q).
pub fn haar_stiefel(d: usize, k: usize, rng: &mut Rng) -> DMatrix<f64> {
    let mut g = DMatrix::zeros(d, k);
    for j in 0..k {
        for i in 0..d {
            g[(i, j)] = normal(rng);
        }
    }
    let qr = g.qr();
    let mut q = qr.q();
    let r = qr.r();
    for j in 0..k {
        if r[(j, j)] < 0.0 {
            q.column_mut(j).neg_mut();
        }
    }
    q
}

pub fn haar_orthogonal(k: usize, rng: &mut Rng) -> DMatrix<f64> {
    haar_stiefel(k, k, rng)
}

/// Planar rotation by `theta`.
pub fn rotation2(theta: f64) -> DMatrix<f64> {
    let (s, c) = (libm::sin(theta), libm::cos(theta));
    DMatrix::from_row_slice(2, 2, &[c, -s, s, c])
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from;

    /// Newton iteration X ← (X + X⁻ᵀ)/2, an SVD-free route to the polar factor.
    fn newton_polar(m: &DMatrix<f64>) -> DMatrix<f64> {
        let mut x = m.clone();
        for _ in 0..60 {
            let inv_t = x.clone().try_inverse().unwrap().transpose();
            x = (&x + inv_t) * 0.5;
        }
        x
    }

    #[test]
    fn polar_of_identity_and_spd_is_identity() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert!(frobenius(&(polar_factor(&i) - &i)) < 1e-12);
        let d = DMatrix::from_row_slice(2, 2, &[2.0, 0.0, 0.0, 3.0]);
        assert!(distance_from_identity(&polar_factor(&d)) < 1e-12);
    }

    #[test]
    fn polar_matches_hand_value_and_newton_oracle() {
        let m = DMatrix::from_row_slice(2, 2, &[0.0, -2.0, 1.0, 0.0]);
        let expected = DMatrix::from_row_slice(2, 2, &[0.0, -1.0, 1.0, 0.0]);
        assert!(frobenius(&(polar_factor(&m) - &expected)) < 1e-12);
        assert!(frobenius(&(newton_polar(&m) - &expected)) < 1e-12);

        let mut rng = rng_from(11, &[]);
        for _ in 0..20 {
            let a = DMatrix::from_fn(4, 4, |_, _| normal(&mut rng));
            let p = polar_factor(&a);
            assert!(orthonormality_error(&p) < 1e-12);
            assert!(frobenius(&(p - newton_polar(&a))) < 1e-9);
        }
    }

    #[test]
    fn polar_of_zero_is_still_orthogonal() {
        let z = DMatrix::<f64>::zeros(3, 3);
        assert!(orthonormality_error(&polar_factor(&z)) < 1e-12);
    }

    #[test]
    fn haar_columns_are_orthonormal() {
        let mut rng = rng_from(5, &[1]);
        let q = haar_stiefel(10, 4, &mut rng);
        assert_eq!(q.shape(), (10, 4));
        assert!(orthonormality_error(&q) < 1e-12);
    }

    #[test]
    fn principal_directions_recover_exact_plane_both_routes() {
        let mut rng = rng_from(2, &[]);
        for &d in &[6usize, 300] {
            let plane = haar_stiefel(d, 2, &mut rng);
            let coeffs = DMatrix::from_fn(40, 2, |_, j| normal(&mut rng) * (3.0 - j as f64));
            let x = &coeffs * plane.transpose();
            let p = principal_directions(&x, 2);
            let resid = &x - &x * &p.basis * p.basis.transpose();
            assert!(frobenius(&resid) < 1e-10, "d={d}");
            assert!(orthonormality_error(&p.basis) < 1e-10);
            // completion past the rank stays orthonormal
            let p3 = principal_directions(&x, 3);
            assert!(orthonormality_error(&p3.basis) < 1e-10);
        }
    }

    #[test]
    fn signs_follow_largest_entry() {
        let mut b = DMatrix::from_row_slice(3, 2, &[0.1, 0.2, -0.9, 0.3, 0.2, -0.4]);
        fix_column_signs(&mut b);
        assert!(b[(1, 0)] > 0.0);
        assert!(b[(2, 1)] > 0.0);
    }

    #[test]
    fn sorted_eigenpairs() {
        let m = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sym_eigen_desc(&m);
        assert_eq!(vals, alloc::vec![5.0, 3.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
    }
}
