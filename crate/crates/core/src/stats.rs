//! Order-insensitive summaries used by every report.

use alloc::vec::Vec;

/// Pairwise (cascade) summation. The reduction tree depends only on the
/// slice length, so equal inputs in equal order give bit-identical sums.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    const LEAF: usize = 16;
    if xs.len() <= LEAF {
        return xs.iter().fold(0.0, |acc, &x| acc + x);
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}

pub fn mean(xs: &[f64]) -> Option<f64> {
    if xs.is_empty() {
        None
    } else {
        Some(pairwise_sum(xs) / xs.len() as f64)
    }
}

/// Population standard deviation (divisor `n`).
pub fn std_dev(xs: &[f64]) -> Option<f64> {
    let m = mean(xs)?;
    let sq: Vec<f64> = xs.iter().map(|&x| (x - m) * (x - m)).collect();
    Some(libm::sqrt(pairwise_sum(&sq) / xs.len() as f64))
}

fn sorted(xs: &[f64]) -> Vec<f64> {
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    v
}

/// Linear-interpolation quantile of an ascending slice (`q` in [0,1]).
pub fn quantile_sorted(sorted: &[f64], q: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let q = q.clamp(0.0, 1.0);
    let pos = q * (sorted.len() - 1) as f64;
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    Some(sorted[lo] + (sorted[hi] - sorted[lo]) * frac)
}

pub fn quantile(xs: &[f64], q: f64) -> Option<f64> {
    quantile_sorted(&sorted(xs), q)
}

pub fn median(xs: &[f64]) -> Option<f64> {
    quantile(xs, 0.5)
}

/// Pearson correlation; `None` for fewer than two points or zero variance.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs)?;
    let my = mean(ys)?;
    let cov: Vec<f64> = xs.iter().zip(ys).map(|(&x, &y)| (x - mx) * (y - my)).collect();
    let vx: Vec<f64> = xs.iter().map(|&x| (x - mx) * (x - mx)).collect();
    let vy: Vec<f64> = ys.iter().map(|&y| (y - my) * (y - my)).collect();
    let (c, sx, sy) = (pairwise_sum(&cov), pairwise_sum(&vx), pairwise_sum(&vy));
    if sx <= 0.0 || sy <= 0.0 {
        return None;
    }
    Some(c / libm::sqrt(sx * sy))
}

/// Distribution summary with the quantiles reported throughout.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Summary {
    pub n: usize,
    pub mean: f64,
    pub std: f64,
    pub min: f64,
    pub q05: f64,
    pub q50: f64,
    pub q95: f64,
    pub max: f64,
}

impl Summary {
    pub fn of(xs: &[f64]) -> Option<Summary> {
        if xs.is_empty() {
            return None;
        }
        let s = sorted(xs);
        Some(Summary {
            n: xs.len(),
            mean: mean(xs)?,
            std: std_dev(xs)?,
            min: s[0],
            q05: quantile_sorted(&s, 0.05)?,
            q50: quantile_sorted(&s, 0.50)?,
            q95: quantile_sorted(&s, 0.95)?,
            max: s[s.len() - 1],
        })
    }
}
