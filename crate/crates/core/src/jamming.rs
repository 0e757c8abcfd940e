//! Per-chart interference analysis: code-space Fisher estimate, harm
//! matrix, effective rank, participation, sparse dictionaries, projected
//! atom Gram matrices, consequential subsets and their certificates.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;
use nalgebra::{DMatrix, DVector};

use crate::data::SampleMatrix;
use crate::error::{Error, Result};
use crate::linalg::principal_directions;
use crate::seed::{derive_seed, normal, rng_from};
use crate::stats;

#[derive(Debug, Clone, PartialEq)]
pub struct FisherEstimate {
    /// m×m, symmetric.
    pub g: DMatrix<f64>,
    pub n_samples: usize,
}

/// Code-space gradients `g_z = D g_x` for the rows of `grads` (n×d), given
/// atoms as rows of an m×d matrix. Returns n×m.
pub fn encode_gradients(atoms: &DMatrix<f64>, grads: &DMatrix<f64>) -> DMatrix<f64> {
    grads * atoms.transpose()
}

/// `Ĝ = (1/n) Σ g_z g_zᵀ`, symmetrised.
pub fn fisher_estimate(codes_grad: &DMatrix<f64>) -> Result<FisherEstimate> {
    let n = codes_grad.nrows();
    if n == 0 {
        return Err(Error::DegenerateInput("Fisher estimate needs at least one gradient".into()));
    }
    let g = codes_grad.transpose() * codes_grad / n as f64;
    let g = (&g + g.transpose()) * 0.5;
    Ok(FisherEstimate { g, n_samples: n })
}

#[derive(Debug, Clone, PartialEq)]
pub struct HarmMatrix {
    /// m×m, non-negative, symmetric, zero diagonal.
    pub w: DMatrix<f64>,
    pub tau: f64,
}

/// Damping `rel · mean(diag G)`.
pub fn default_damping(g: &DMatrix<f64>, rel: f64) -> f64 {
    let m = g.nrows().max(1) as f64;
    rel * g.diagonal().sum() / m
}

/// `W_ij = |G̃_ij|` off the diagonal, with
/// `G̃ = (diag G + τI)^{-1/2} G (diag G + τI)^{-1/2}`.
pub fn harm_matrix(g: &DMatrix<f64>, tau: f64) -> Result<HarmMatrix> {
    if !(tau > 0.0) {
        return Err(Error::Config(format!("harm damping must be positive, got {tau}")));
    }
    let m = g.nrows();
    let s: Vec<f64> = (0..m).map(|i| 1.0 / libm::sqrt(g[(i, i)].max(0.0) + tau)).collect();
    let w = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { (g[(i, j)] * s[i] * s[j]).abs() });
    Ok(HarmMatrix { w, tau })
}

/// `Tr(G)² / Tr(G²)`.
pub fn effective_rank(g: &DMatrix<f64>) -> Result<f64> {
    let tr = g.trace();
    let tr2 = (g * g).trace();
    if !(tr2 > 0.0) {
        return Err(Error::DegenerateInput("effective rank of a zero matrix".into()));
    }
    Ok(tr * tr / tr2)
}

/// `‖z‖₁² / ‖z‖₂²`, zero for the zero vector.
pub fn participation_ratio(z: &[f64]) -> f64 {
    let l1: f64 = z.iter().map(|x| x.abs()).sum();
    let l2: f64 = z.iter().map(|x| x * x).sum();
    if l2 == 0.0 {
        0.0
    } else {
        l1 * l1 / l2
    }
}

/// Mean participation ratio over the rows of an n×m code matrix.
pub fn participation_active(codes: &DMatrix<f64>) -> f64 {
    let vals: Vec<f64> = (0..codes.nrows())
        .map(|i| participation_ratio(&codes.row(i).iter().copied().collect::<Vec<_>>()))
        .collect();
    stats::mean(&vals).unwrap_or(0.0)
}

pub fn jamming_index(k_active: f64, r_eff: f64) -> f64 {
    k_active / r_eff
}

#[derive(Debug, Clone, PartialEq)]
pub struct DictionaryParams {
    pub m: usize,
    pub alpha: f64,
    pub seed: u64,
    pub max_outer: usize,
    pub max_passes: usize,
    /// Relative objective change that ends the alternation early.
    pub tol: f64,
}

impl DictionaryParams {
    pub fn new(m: usize, alpha: f64, seed: u64) -> Self {
        DictionaryParams { m, alpha, seed, max_outer: 50, max_passes: 100, tol: 1e-7 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dictionary {
    /// m×d, unit rows.
    pub atoms: DMatrix<f64>,
    /// n×m.
    pub codes: DMatrix<f64>,
    pub alpha: f64,
    pub seed: u64,
    pub outer_iterations: usize,
    pub objective: f64,
}

#[inline]
fn soft(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Moves `z` towards the minimiser of the objective restricted to the
/// current support and sign pattern, stopping where the first coordinate
/// would change sign (it is set to zero). The objective never increases
/// along this segment. Returns the new point, `H z`, and whether the
/// minimiser was reached and satisfies the optimality condition
/// `|c_j − (Hz)_j| ≤ α` off the support.
fn support_step(h: &DMatrix<f64>, c: &[f64], z: &[f64], alpha: f64) -> Option<(Vec<f64>, Vec<f64>, bool)> {
    let m = z.len();
    let support: Vec<usize> = (0..m).filter(|&j| z[j] != 0.0).collect();
    if support.is_empty() {
        return None;
    }
    let hs = DMatrix::from_fn(support.len(), support.len(), |a, b| h[(support[a], support[b])]);
    let rhs = DVector::from_fn(support.len(), |a, _| c[support[a]] - alpha * z[support[a]].signum());
    let y = hs.cholesky()?.solve(&rhs);
    let mut t = 1.0;
    let mut hit = None;
    for (a, &j) in support.iter().enumerate() {
        if y[a].signum() != z[j].signum() || y[a] == 0.0 {
            let ta = z[j] / (z[j] - y[a]);
            if ta < t {
                t = ta;
                hit = Some(j);
            }
        }
    }
    let mut out = z.to_vec();
    for (a, &j) in support.iter().enumerate() {
        out[j] = z[j] + t * (y[a] - z[j]);
    }
    if let Some(j) = hit {
        out[j] = 0.0;
    }
    let q: Vec<f64> = (0..m).map(|a| support.iter().map(|&b| h[(a, b)] * out[b]).sum()).collect();
    let exact = hit.is_none() && (0..m).all(|j| out[j] != 0.0 || (c[j] - q[j]).abs() <= alpha * (1.0 + 1e-9) + 1e-12);
    Some((out, q, exact))
}

/// Coordinate descent on `½‖x − Dᵀz‖² + α‖z‖₁` for every row of `x`,
/// starting from `warm` when given. Every sweep is followed by a
/// [`support_step`]. The solve ends when that step lands on the exact
/// solution, when no coordinate of a sweep moves by more than
/// `1e-10·max(1, ‖z‖_∞)`, or after `max_passes` sweeps.
pub fn sparse_codes(atoms: &DMatrix<f64>, x: &DMatrix<f64>, alpha: f64, max_passes: usize, warm: Option<&DMatrix<f64>>) -> DMatrix<f64> {
    let m = atoms.nrows();
    let n = x.nrows();
    let h = atoms * atoms.transpose();
    let c_all = x * atoms.transpose();
    let mut codes = match warm {
        Some(w) => w.clone(),
        None => DMatrix::zeros(n, m),
    };
    let mut z = vec![0.0; m];
    let mut q = vec![0.0; m];
    let mut c = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            z[j] = codes[(i, j)];
            c[j] = c_all[(i, j)];
        }
        for (a, qa) in q.iter_mut().enumerate() {
            *qa = (0..m).filter(|&b| z[b] != 0.0).map(|b| h[(a, b)] * z[b]).sum();
        }
        for _ in 0..max_passes {
            let mut max_step: f64 = 0.0;
            let mut max_z: f64 = 0.0;
            for j in 0..m {
                let hjj = h[(j, j)];
                let new = if hjj > 0.0 {
                    let rho = c[j] - q[j] + hjj * z[j];
                    soft(rho, alpha) / hjj
                } else {
                    0.0
                };
                let step = new - z[j];
                if step != 0.0 {
                    for (qa, hv) in q.iter_mut().zip(h.column(j).iter()) {
                        *qa += hv * step;
                    }
                    z[j] = new;
                    max_step = max_step.max(step.abs());
                }
                max_z = max_z.max(new.abs());
            }
            if max_step <= 1e-10 * max_z.max(1.0) {
                break;
            }
            if let Some((next, hq, exact)) = support_step(&h, &c, &z, alpha) {
                z.copy_from_slice(&next);
                q.copy_from_slice(&hq);
                if exact {
                    break;
                }
            }
        }
        for j in 0..m {
            codes[(i, j)] = z[j];
        }
    }
    codes
}

fn objective(atoms: &DMatrix<f64>, codes: &DMatrix<f64>, x: &DMatrix<f64>, alpha: f64) -> f64 {
    let r = x - codes * atoms;
    0.5 * r.iter().map(|v| v * v).sum::<f64>() + alpha * codes.iter().map(|v| v.abs()).sum::<f64>()
}

fn unit_row(v: DVector<f64>) -> Option<DVector<f64>> {
    let n = v.norm();
    if n > 1e-12 {
        Some(v / n)
    } else {
        None
    }
}

/// Least-squares atom update over the atoms in use, followed by row
/// renormalisation. Atoms without any nonzero code, and duplicates of an
/// earlier atom, are moved to the normalised residual of the
/// worst-reconstructed samples.
fn update_atoms(atoms: &mut DMatrix<f64>, codes: &DMatrix<f64>, x: &DMatrix<f64>) {
    let m = atoms.nrows();
    let used: Vec<usize> = (0..m).filter(|&j| codes.column(j).iter().any(|v| *v != 0.0)).collect();
    if !used.is_empty() {
        let zu = DMatrix::from_fn(codes.nrows(), used.len(), |i, c| codes[(i, used[c])]);
        let mut a = zu.transpose() * &zu;
        let ridge = 1e-10 * (a.trace() / used.len() as f64).max(1e-300);
        for i in 0..used.len() {
            a[(i, i)] += ridge;
        }
        let b = zu.transpose() * x;
        if let Some(chol) = a.cholesky() {
            let sol = chol.solve(&b);
            for (c, &j) in used.iter().enumerate() {
                if let Some(row) = unit_row(sol.row(c).transpose()) {
                    atoms.set_row(j, &row.transpose());
                }
            }
        }
    }
    let mut unused: Vec<usize> = (0..m).filter(|j| used.binary_search(j).is_err()).collect();
    for (c, &j) in used.iter().enumerate() {
        if used[..c].iter().any(|&i| atoms.row(i).dot(&atoms.row(j)).abs() > 1.0 - 1e-9) {
            unused.push(j);
        }
    }
    unused.sort_unstable();
    if unused.is_empty() {
        return;
    }
    let resid = x - codes * &*atoms;
    let mut order: Vec<(f64, usize)> = (0..x.nrows()).map(|i| (resid.row(i).norm_squared(), i)).collect();
    order.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    for (slot, &j) in unused.iter().enumerate() {
        let Some(&(_, i)) = order.get(slot) else { break };
        if let Some(row) = unit_row(resid.row(i).transpose()) {
            atoms.set_row(j, &row.transpose());
        }
    }
}

/// Alternating minimisation from randomly selected, normalised data rows.
pub fn learn_dictionary(x: &DMatrix<f64>, params: &DictionaryParams) -> Result<Dictionary> {
    let (n, d) = x.shape();
    if n == 0 || d == 0 {
        return Err(Error::DegenerateInput("dictionary learning needs at least one sample".into()));
    }
    if params.m == 0 || !(params.alpha >= 0.0) {
        return Err(Error::Config("dictionary needs m ≥ 1 and α ≥ 0".into()));
    }
    let m = params.m;
    let mut rng = rng_from(params.seed, &[0x6469_6374]);
    let picks: Vec<usize> = if m <= n {
        rand::seq::index::sample(&mut rng, n, m).into_vec()
    } else {
        let mut all = rand::seq::index::sample(&mut rng, n, n).into_vec();
        all.resize(m, usize::MAX);
        all
    };
    let mut atoms = DMatrix::zeros(m, d);
    for (j, &i) in picks.iter().enumerate() {
        let from_data = if i == usize::MAX { None } else { unit_row(x.row(i).transpose()) };
        let row = from_data.unwrap_or_else(|| {
            let g = DVector::from_fn(d, |_, _| normal(&mut rng));
            unit_row(g).unwrap_or_else(|| DVector::from_fn(d, |r, _| if r == 0 { 1.0 } else { 0.0 }))
        });
        atoms.set_row(j, &row.transpose());
    }

    let mut codes = sparse_codes(&atoms, x, params.alpha, params.max_passes, None);
    let mut obj = objective(&atoms, &codes, x, params.alpha);
    let mut outer = 0;
    while outer < params.max_outer {
        outer += 1;
        update_atoms(&mut atoms, &codes, x);
        codes = sparse_codes(&atoms, x, params.alpha, params.max_passes, Some(&codes));
        let next = objective(&atoms, &codes, x, params.alpha);
        let done = (obj - next).abs() <= params.tol * obj.abs().max(1e-300);
        obj = next;
        if done {
            break;
        }
    }
    Ok(Dictionary { atoms, codes, alpha: params.alpha, seed: params.seed, outer_iterations: outer, objective: obj })
}

/// Atoms with a projection shorter than this are left out of subsets.
pub const PROJECTION_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectedGram {
    /// m×m, zero diagonal; zero rows and columns for ineligible atoms.
    pub k: DMatrix<f64>,
    pub eligible: Vec<bool>,
}

/// `K_ij = ⟨â_i, â_j⟩` with `â_i` the normalised projection `D_i B_r`.
pub fn projected_gram(atoms: &DMatrix<f64>, b_r: &DMatrix<f64>) -> ProjectedGram {
    let a = atoms * b_r;
    let m = a.nrows();
    let mut eligible = vec![false; m];
    let mut hat = a.clone();
    for i in 0..m {
        let n = a.row(i).norm();
        if n >= PROJECTION_FLOOR {
            eligible[i] = true;
            hat.row_mut(i).scale_mut(1.0 / n);
        } else {
            hat.row_mut(i).fill(0.0);
        }
    }
    let mut k = &hat * hat.transpose();
    for i in 0..m {
        k[(i, i)] = 0.0;
    }
    ProjectedGram { k, eligible }
}

/// `Σ_{i≠j} W_ij K_ij²` over `members`, or over all pairs when `None`.
pub fn interference_energy(w: &DMatrix<f64>, k: &DMatrix<f64>, members: Option<&[usize]>) -> f64 {
    let all: Vec<usize>;
    let idx = match members {
        Some(m) => m,
        None => {
            all = (0..w.nrows()).collect();
            &all
        }
    };
    let mut terms = Vec::with_capacity(idx.len() * idx.len());
    for &i in idx {
        for &j in idx {
            if i != j {
                terms.push(w[(i, j)] * k[(i, j)] * k[(i, j)]);
            }
        }
    }
    stats::pairwise_sum(&terms)
}

/// `τ · max(s²/r − s, 0)`.
pub fn welch_bound(tau: f64, size: usize, r: usize) -> f64 {
    let s = size as f64;
    tau * (s * s / r as f64 - s).max(0.0)
}

pub const SUBSET_QUANTILES: [f64; 6] = [0.5, 0.6, 0.7, 0.8, 0.9, 0.95];

/// Positive quantiles of the off-diagonal weights among eligible atoms, in
/// [`SUBSET_QUANTILES`] order.
pub fn candidate_thresholds(w: &DMatrix<f64>, eligible: &[bool]) -> Vec<f64> {
    let m = w.nrows();
    let mut vals = Vec::new();
    for i in 0..m {
        for j in (i + 1)..m {
            if eligible[i] && eligible[j] {
                vals.push(w[(i, j)]);
            }
        }
    }
    if vals.is_empty() {
        return Vec::new();
    }
    vals.sort_by(f64::total_cmp);
    SUBSET_QUANTILES
        .iter()
        .filter_map(|&q| stats::quantile_sorted(&vals, q))
        .filter(|&t| t > 0.0)
        .collect()
}

/// Greedy clique in `{(i, j) : W_ij ≥ τ}` seeded at the vertex of largest
/// thresholded degree. Each step adds the vertex adjacent to every member
/// whose smallest weight to the members is largest; ties go to the lower
/// index. Returned sorted.
pub fn greedy_clique(w: &DMatrix<f64>, eligible: &[bool], tau: f64) -> Vec<usize> {
    let m = w.nrows();
    let adj = |i: usize, j: usize| i != j && eligible[i] && eligible[j] && w[(i, j)] >= tau;
    let mut start = None;
    let mut best_deg = 0;
    for i in (0..m).filter(|&i| eligible[i]) {
        let deg = (0..m).filter(|&j| adj(i, j)).count();
        if start.is_none() || deg > best_deg {
            start = Some(i);
            best_deg = deg;
        }
    }
    let Some(start) = start else { return Vec::new() };
    let mut members = vec![start];
    let mut min_w: Vec<f64> = (0..m).map(|j| if adj(start, j) { w[(start, j)] } else { f64::NEG_INFINITY }).collect();
    loop {
        let mut pick = None;
        let mut pick_w = f64::NEG_INFINITY;
        for j in 0..m {
            if min_w[j] > pick_w && !members.contains(&j) {
                pick = Some(j);
                pick_w = min_w[j];
            }
        }
        let Some(j) = pick else { break };
        members.push(j);
        for (c, mw) in min_w.iter_mut().enumerate() {
            *mw = if adj(j, c) { mw.min(w[(j, c)]) } else { f64::NEG_INFINITY };
        }
    }
    members.sort_unstable();
    members
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConsequentialSubset {
    pub members: Vec<usize>,
    pub tau_star: f64,
    pub lb: f64,
}

/// Smallest pairwise weight inside `members`.
pub fn subset_floor(w: &DMatrix<f64>, members: &[usize]) -> f64 {
    let mut floor = f64::INFINITY;
    for (a, &i) in members.iter().enumerate() {
        for &j in &members[a + 1..] {
            floor = floor.min(w[(i, j)]);
        }
    }
    floor
}

/// Best `(τ, A)` over the candidate thresholds by `τ(|A|²/r − |A|)₊`, then
/// by `|A|`, where each clique's `τ` is raised to its own weight floor.
/// Empty when no eligible pair clears any threshold.
pub fn find_consequential_subset(w: &DMatrix<f64>, eligible: &[bool], r: usize) -> ConsequentialSubset {
    let mut best = ConsequentialSubset { members: Vec::new(), tau_star: 0.0, lb: 0.0 };
    for threshold in candidate_thresholds(w, eligible) {
        let members = greedy_clique(w, eligible, threshold);
        if members.len() < 2 {
            continue;
        }
        let tau = subset_floor(w, &members);
        let lb = welch_bound(tau, members.len(), r);
        if lb > best.lb || (lb == best.lb && members.len() > best.members.len()) {
            best = ConsequentialSubset { members, tau_star: tau, lb };
        }
    }
    best
}

#[derive(Debug, Clone, PartialEq)]
pub struct JammingCertificate {
    pub r: usize,
    pub subset: Vec<usize>,
    pub tau_star: f64,
    pub lb: f64,
    pub energy_a: f64,
    pub energy_full: f64,
    /// `energy_a / lb`, defined when `lb > 0`.
    pub slack: Option<f64>,
}

impl JammingCertificate {
    pub fn certified(&self) -> bool {
        self.lb > 0.0
    }
}

/// Re-validates the subset and evaluates the certified bound. A slack below
/// `1 − 1e−9` with a positive bound is reported as an internal invariant
/// violation.
pub fn certify(w: &DMatrix<f64>, pg: &ProjectedGram, subset: &[usize], tau_star: f64, r: usize) -> Result<JammingCertificate> {
    let m = w.nrows();
    if r == 0 {
        return Err(Error::CertificateInput("r must be at least 1".into()));
    }
    for (a, &i) in subset.iter().enumerate() {
        if i >= m || !pg.eligible[i] {
            return Err(Error::CertificateInput(format!("atom {i} is not eligible")));
        }
        for &j in &subset[a + 1..] {
            if i == j {
                return Err(Error::CertificateInput(format!("atom {i} repeated")));
            }
            if !(w[(i, j)] >= tau_star) {
                return Err(Error::CertificateInput(format!(
                    "W[{i},{j}] = {} is below the floor {tau_star}",
                    w[(i, j)]
                )));
            }
        }
    }
    let lb = welch_bound(tau_star, subset.len(), r);
    let energy_a = interference_energy(w, &pg.k, Some(subset));
    let eligible: Vec<usize> = (0..m).filter(|&i| pg.eligible[i]).collect();
    let energy_full = interference_energy(w, &pg.k, Some(&eligible));
    let slack = (lb > 0.0).then(|| energy_a / lb);
    if let Some(s) = slack {
        if s < 1.0 - 1e-9 {
            return Err(Error::InternalInvariant(format!(
                "certified bound violated: energy {energy_a} < lb {lb}"
            )));
        }
    }
    Ok(JammingCertificate { r, subset: subset.to_vec(), tau_star, lb, energy_a, energy_full, slack })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JammingParams {
    pub m: usize,
    pub alpha: f64,
    pub grad_samples: usize,
    pub damping_rel: f64,
    pub max_outer: usize,
    pub max_passes: usize,
    pub center: bool,
}

impl Default for JammingParams {
    fn default() -> Self {
        JammingParams { m: 256, alpha: 1.0, grad_samples: 512, damping_rel: 1e-6, max_outer: 50, max_passes: 100, center: true }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ChartJamming {
    pub chart: usize,
    pub n_grad: usize,
    pub m: usize,
    pub alpha: f64,
    pub r_eff: f64,
    pub k_active: f64,
    pub j_index: f64,
    pub damping: f64,
    pub dictionary_iterations: usize,
    pub certificate: JammingCertificate,
}

fn centered(x: &SampleMatrix, rows: &[usize], mean: Option<&[f64]>) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), x.cols(), |r, j| x.row(rows[r])[j] - mean.map_or(0.0, |m| m[j]))
}

/// Full per-chart analysis. `x` and `grads` hold the chart's samples only
/// (aligned rows).
pub fn analyze_chart(chart: usize, x: &SampleMatrix, grads: &SampleMatrix, params: &JammingParams, seed: u64) -> Result<ChartJamming> {
    let n = x.rows();
    let d = x.cols();
    if n == 0 || grads.rows() != n || grads.cols() != d {
        return Err(Error::DegenerateInput(format!("chart {chart}: activations and gradients are empty or misaligned")));
    }
    let chart_seed = derive_seed(seed, &[chart as u64]);
    let rows: Vec<usize> = if n > params.grad_samples {
        let mut rng = rng_from(chart_seed, &[0x6772_6164]);
        let mut r = rand::seq::index::sample(&mut rng, n, params.grad_samples).into_vec();
        r.sort_unstable();
        r
    } else {
        (0..n).collect()
    };
    let mut mean = vec![0.0; d];
    for i in 0..n {
        for (m, v) in mean.iter_mut().zip(x.row(i)) {
            *m += v;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n as f64);
    let origin = params.center.then_some(mean.as_slice());

    let xs = centered(x, &rows, origin);
    let gs = centered(grads, &rows, None);
    let dict = learn_dictionary(
        &xs,
        &DictionaryParams { m: params.m, alpha: params.alpha, seed: chart_seed, max_outer: params.max_outer, max_passes: params.max_passes, tol: 1e-7 },
    )?;
    let fisher = fisher_estimate(&encode_gradients(&dict.atoms, &gs))?;
    let damping = default_damping(&fisher.g, params.damping_rel);
    if !(damping > 0.0) {
        return Err(Error::DegenerateInput(format!("chart {chart}: code-space Fisher has a zero diagonal")));
    }
    let harm = harm_matrix(&fisher.g, damping)?;
    let r_eff = effective_rank(&fisher.g)?;
    let r = (libm::ceil(r_eff - 1e-9) as usize).clamp(1, d);
    let all: Vec<usize> = (0..n).collect();
    let b_r = principal_directions(&centered(x, &all, origin), r).basis;
    let pg = projected_gram(&dict.atoms, &b_r);
    let subset = find_consequential_subset(&harm.w, &pg.eligible, r);
    let certificate = certify(&harm.w, &pg, &subset.members, subset.tau_star, r)?;
    let k_active = participation_active(&dict.codes);
    Ok(ChartJamming {
        chart,
        n_grad: rows.len(),
        m: params.m,
        alpha: params.alpha,
        r_eff,
        k_active,
        j_index: jamming_index(k_active, r_eff),
        damping,
        dictionary_iterations: dict.outer_iterations,
        certificate,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct JammingSummary {
    pub n_charts: usize,
    pub n_certified: usize,
    pub cert_rate: Option<f64>,
    pub slack_median: Option<f64>,
    pub slack_min: Option<f64>,
    pub corr_j_energy_full: Option<f64>,
    pub corr_j_energy_a: Option<f64>,
}

/// Chart-level aggregates; correlations are Pearson.
pub fn summarize(charts: &[ChartJamming]) -> JammingSummary {
    let n = charts.len();
    let slacks: Vec<f64> = charts.iter().filter_map(|c| c.certificate.slack).collect();
    let j: Vec<f64> = charts.iter().map(|c| c.j_index).collect();
    let ef: Vec<f64> = charts.iter().map(|c| c.certificate.energy_full).collect();
    let ea: Vec<f64> = charts.iter().map(|c| c.certificate.energy_a).collect();
    let n_certified = charts.iter().filter(|c| c.certificate.certified()).count();
    JammingSummary {
        n_charts: n,
        n_certified,
        cert_rate: (n > 0).then(|| n_certified as f64 / n as f64),
        slack_median: stats::median(&slacks),
        slack_min: slacks.iter().copied().reduce(f64::min),
        corr_j_energy_full: stats::pearson(&j, &ef),
        corr_j_energy_a: stats::pearson(&j, &ea),
    }
}
