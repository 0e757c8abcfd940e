//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::f64::consts::FRAC_PI_2;
use std::fs;
use std::path::Path;
use std::process::ExitCode;
use std::time::Instant;

use gaugeatlas::atlas::{build_atlas, AtlasParams};
use gaugeatlas::gauge::{gauge_fix, DefectGraph};
use gaugeatlas::jamming::{analyze_chart, certify, find_consequential_subset, projected_gram, welch_bound, JammingParams};
use gaugeatlas::linalg::{haar_orthogonal, haar_stiefel, sigma_min};
use gaugeatlas::seed::{normal, rng_from, Rng};
use gaugeatlas::stability::{bootstrap_edge_shear, BootstrapParams, EdgeSample};
use gaugeatlas::stats::std_dev;
use gaugeatlas::synth::{presets, synth_atlas_dataset};
use gaugeatlas::transport::{estimate_all, fit_transport, shear_record};
use gaugeatlas_cli::config::RunConfig;
use gaugeatlas_cli::generate::write_synthetic;
use gaugeatlas_cli::ingest::{load_dataset, Dtype};
use gaugeatlas_cli::pipeline::{full_run, run_stages, AtlasCache, Stage};
use gaugeatlas_cli::sweep::{run_sweep, Axis};
use nalgebra::DMatrix;
use rand::Rng as _;

type Check = Result<String, String>;

fn rotated_params(seed: u64) -> AtlasParams {
    AtlasParams {
        n_charts: 12,
        k: 4,
        knn_degree: 4,
        min_overlap: 20,
        max_overlap: 8000,
        max_iter: 100,
        center_charts: true,
        seed,
    }
}

fn rotated_config(dataset: &Path) -> RunConfig {
    let mut c = RunConfig::new(dataset);
    c.n_charts = 12;
    c.k = 4;
    c.knn_degree = 4;
    c.min_overlap = 20;
    c.jamming.enabled = false;
    c
}

fn tree_chord_identity() -> Check {
    let mut worst_tree = 0.0f64;
    let mut worst_gap = 0.0f64;
    let mut chords = 0;
    let mut slowest = 0.0f64;
    for seed in 0..3 {
        let t = Instant::now();
        let (x, _, _) = synth_atlas_dataset(&presets::rotated_gaussians(12, 16, 4, 400, seed)).map_err(|e| e.to_string())?;
        let atlas = build_atlas(&x, &rotated_params(seed)).map_err(|e| e.to_string())?;
        let tr = estimate_all(&x, &atlas, 1e-2).map_err(|e| e.to_string())?;
        let rep = gauge_fix(&DefectGraph::from_transports(&tr), 4).map_err(|e| e.to_string())?;
        slowest = slowest.max(t.elapsed().as_secs_f64());
        worst_tree = rep.tree_residuals.iter().copied().fold(worst_tree, f64::max);
        for (c, h) in rep.chord_residuals.iter().zip(&rep.holonomy_defects) {
            worst_gap = worst_gap.max((c - h).abs());
        }
        chords += rep.chord_residuals.len();
    }
    let msg = format!("max tree residual {worst_tree:.2e}, max |chord - holonomy| {worst_gap:.2e}, {chords} chords, slowest run {slowest:.3}s");
    if worst_tree <= 1e-10 && worst_gap <= 1e-8 && slowest < 5.0 && chords > 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn gauge_invariance() -> Check {
    let (x, _, _) = synth_atlas_dataset(&presets::rotated_gaussians(12, 16, 4, 400, 0)).map_err(|e| e.to_string())?;
    let atlas = build_atlas(&x, &rotated_params(0)).map_err(|e| e.to_string())?;
    let tr = estimate_all(&x, &atlas, 1e-2).map_err(|e| e.to_string())?;
    let graph = DefectGraph::from_transports(&tr);
    let base = gauge_fix(&graph, 4).map_err(|e| e.to_string())?;
    let mut worst = 0.0f64;
    for trial in 0..20 {
        let mut rng = rng_from(17, &[trial]);
        let gauges: Vec<DMatrix<f64>> = (0..12).map(|_| haar_orthogonal(4, &mut rng)).collect();
        let rep = gauge_fix(&graph.regauged(&gauges), 4).map_err(|e| e.to_string())?;
        if rep.chords() != base.chords() {
            return Err(format!("trial {trial}: chord set changed"));
        }
        for (a, b) in rep.d_hol.iter().zip(&base.d_hol) {
            worst = worst.max((a - b).abs());
        }
    }
    let msg = format!("20 trials, {} loops, max |Δd_hol| {worst:.2e}", base.d_hol.len());
    if worst <= 1e-9 && !base.d_hol.is_empty() {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// `n` samples whose empirical second moment is exactly `V diag(λ) Vᵀ`.
fn samples_with_covariance(rng: &mut Rng, v: &DMatrix<f64>, lambdas: &[f64], n: usize) -> DMatrix<f64> {
    let k = lambdas.len();
    let white = haar_stiefel(n, k, rng).transpose() * (n as f64).sqrt();
    let scale = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(k, lambdas.iter().map(|l| l.sqrt())));
    v * scale * white
}

fn shear_slack_bound() -> Check {
    let mut rng = rng_from(2024, &[0x62]);
    let mut min_slack = f64::INFINITY;
    let mut worst_delta = 0.0f64;
    for _ in 0..500 {
        let k = rng.random_range(2..=8usize);
        let n = rng.random_range(k + 2..=4 * k + 8);
        let q = haar_orthogonal(k, &mut rng);
        let p = haar_orthogonal(k, &mut rng);
        let v = haar_orthogonal(k, &mut rng);
        let lambdas: Vec<f64> = (0..k).map(|_| 10f64.powf(rng.random_range(-4.0..1.0))).collect();
        let z = samples_with_covariance(&mut rng, &v, &lambdas, n);
        let rec = shear_record(&q, &p, &z).map_err(|e| e.to_string())?;
        min_slack = min_slack.min(rec.slack);
        let a = &q - &p;
        let sigma = &v * DMatrix::from_diagonal(&nalgebra::DVector::from_vec(lambdas)) * v.transpose();
        let oracle = (&a * sigma * a.transpose()).trace();
        worst_delta = worst_delta.max((rec.delta_hat - oracle).abs() / oracle.max(1e-300));
    }
    let mut iso_dev = 0.0f64;
    for _ in 0..50 {
        let k = rng.random_range(2..=8usize);
        let c = 10f64.powf(rng.random_range(-3.0..1.0));
        let q = haar_orthogonal(k, &mut rng);
        let p = haar_orthogonal(k, &mut rng);
        let z = samples_with_covariance(&mut rng, &DMatrix::identity(k, k), &vec![c; k], 3 * k);
        let rec = shear_record(&q, &p, &z).map_err(|e| e.to_string())?;
        iso_dev = iso_dev.max((rec.slack - 1.0).abs());
    }
    let msg = format!("500 edges: min slack {min_slack:.6}, Δ̂ oracle rel err {worst_delta:.1e}; isotropic |slack-1| max {iso_dev:.1e}");
    if min_slack >= 1.0 - 1e-9 && iso_dev <= 1e-9 && worst_delta < 1e-9 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

/// Best `τ(|A|²/r − |A|)₊` over every subset, with `τ` the subset's
/// smallest pairwise weight.
fn exhaustive_lb(w: &DMatrix<f64>, r: usize) -> f64 {
    let m = w.nrows();
    let mut best = 0.0f64;
    for mask in 1u32..(1 << m) {
        let members: Vec<usize> = (0..m).filter(|i| mask >> i & 1 == 1).collect();
        if members.len() < 2 {
            continue;
        }
        let mut tau = f64::INFINITY;
        for (a, &i) in members.iter().enumerate() {
            for &j in &members[a + 1..] {
                tau = tau.min(w[(i, j)]);
            }
        }
        best = best.max(welch_bound(tau, members.len(), r));
    }
    best
}

fn planted_block_weights(rng: &mut Rng, m: usize, block: usize) -> DMatrix<f64> {
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        perm.swap(i, rng.random_range(0..=i));
    }
    let inside: Vec<bool> = (0..m).map(|i| perm[i] < block).collect();
    let w_in = rng.random_range(0.3..0.9);
    let mut w = DMatrix::zeros(m, m);
    for i in 0..m {
        for j in (i + 1)..m {
            let v = if inside[i] && inside[j] { w_in } else { rng.random_range(0.0..0.02) };
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    w
}

fn jamming_certificates() -> Check {
    let mut total = 0;
    let mut certified = 0;
    let mut violations = 0;
    let mut min_slack = f64::INFINITY;
    for seed in 0..5u64 {
        let mut spec = presets::rotated_gaussians(10, 12, 4, 160, seed);
        spec.gradients.rank = 2;
        let (x, g, truth) = synth_atlas_dataset(&spec).map_err(|e| e.to_string())?;
        for (m, alpha) in [(128, 0.5), (128, 1.0), (256, 0.5), (256, 1.0)] {
            let params = JammingParams { m, alpha, ..JammingParams::default() };
            for c in 0..10 {
                let idx: Vec<usize> = (0..x.rows()).filter(|&i| truth.labels[i] == c).collect();
                total += 1;
                match analyze_chart(c, &x.select_rows(&idx), &g.select_rows(&idx), &params, seed) {
                    Ok(r) => {
                        if let Some(s) = r.certificate.slack {
                            certified += 1;
                            min_slack = min_slack.min(s);
                            if s < 1.0 - 1e-9 {
                                violations += 1;
                            }
                        }
                    }
                    Err(gaugeatlas::Error::InternalInvariant(_)) => violations += 1,
                    Err(e) => return Err(format!("seed {seed} chart {c}: {e}")),
                }
            }
        }
    }
    let rate = certified as f64 / total as f64;
    let mut rng = rng_from(99, &[0x6578]);
    let mut instances = 0;
    let mut mismatches = 0;
    let spec_example = DMatrix::from_fn(10, 10, |i, j| match (i == j, i < 6 && j < 6) {
        (true, _) => 0.0,
        (false, true) => 0.5,
        (false, false) => 0.01,
    });
    let mut cases: Vec<(DMatrix<f64>, usize)> = vec![(spec_example, 2)];
    for m in 8..=12 {
        for block in 4..=7 {
            for r in 1..=3 {
                for _ in 0..2 {
                    cases.push((planted_block_weights(&mut rng, m, block), r));
                }
            }
        }
    }
    for (w, r) in &cases {
        instances += 1;
        let greedy = find_consequential_subset(w, &vec![true; w.nrows()], *r).lb;
        let oracle = exhaustive_lb(w, *r);
        if (greedy - oracle).abs() > 1e-12 * oracle.max(1.0) {
            mismatches += 1;
        }
    }
    let msg = format!(
        "{certified}/{total} charts certified (rate {rate:.3}), {violations} violations, min slack {min_slack:.3}; greedy vs exhaustive: {mismatches}/{instances} mismatches"
    );
    if violations == 0 && rate >= 0.8 && mismatches == 0 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn welch_consistency() -> Check {
    let mut rng = rng_from(7, &[0x77]);
    let mut worst = 0.0f64;
    let mut count = 0;
    for _ in 0..200 {
        let r = rng.random_range(1..=4usize);
        let d = r + rng.random_range(0..6usize);
        let m = rng.random_range(2..=24usize);
        let w_min = rng.random_range(0.01..2.0);
        let atoms = DMatrix::from_fn(m, d, |_, _| normal(&mut rng));
        let b_r = haar_stiefel(d, r, &mut rng);
        let pg = projected_gram(&atoms, &b_r);
        let subset: Vec<usize> = (0..m).filter(|&i| pg.eligible[i]).collect();
        let w = DMatrix::from_fn(m, m, |i, j| if i == j { 0.0 } else { w_min });
        let cert = certify(&w, &pg, &subset, w_min, r).map_err(|e| e.to_string())?;
        let s = subset.len() as f64;
        let oracle = (w_min * (s * s / r as f64 - s)).max(0.0);
        worst = worst.max((cert.lb - oracle).abs());
        let found = find_consequential_subset(&w, &pg.eligible, r);
        if found.members != subset {
            return Err(format!("uniform weights: subset search returned {} of {} atoms", found.members.len(), subset.len()));
        }
        if cert.lb > 0.0 && cert.energy_a < cert.lb * (1.0 - 1e-9) {
            return Err(format!("energy {} below bound {}", cert.energy_a, cert.lb));
        }
        count += 1;
    }
    let msg = format!("{count} uniform-weight instances, max |lb - w(k²/r - k)| {worst:.1e}");
    if worst <= 1e-10 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn planted_holonomy(tmp: &Path) -> Check {
    let dir = tmp.join("triangle");
    let manifest = write_synthetic(&dir, "triangle", &presets::planted_triangle(FRAC_PI_2, 0), Dtype::F64, false).map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(&manifest);
    cfg.n_charts = 4;
    cfg.k = 2;
    cfg.knn_degree = 3;
    cfg.min_overlap = 200;
    cfg.max_overlap = 10_000;
    cfg.jamming.enabled = false;
    let data = load_dataset(&manifest).map_err(|e| e.to_string())?;
    let (_, out) = run_stages("acceptance", &cfg, &data, &full_run(&cfg), &tmp.join("triangle-run"), &AtlasCache::in_memory())
        .map_err(|e| format!("{e:#}"))?;
    let d = out.gauge.map(|g| g.d_hol).unwrap_or_default();
    let msg = format!("loops {}, d_hol {:?}", d.len(), d);
    if d.len() == 1 && (d[0] - 1.0).abs() <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn bootstrap_concentration() -> Check {
    let k = 4;
    let n = 4096;
    let mut wins = 0;
    let mut detail = Vec::new();
    for seed in 0..5u64 {
        let mut rng = rng_from(seed, &[0x6263]);
        let scales = [2.0, 1.6, 1.3, 1.0];
        let z_u = DMatrix::from_fn(k, n, |i, _| scales[i] * normal(&mut rng));
        let rot = haar_orthogonal(k, &mut rng);
        let noise = DMatrix::from_fn(k, n, |_, _| 0.3 * normal(&mut rng));
        let z_v = &rot * &z_u + noise;
        let sig = sigma_min(&fit_transport(&z_u, &z_v, 1e-2, (0, 1)).map_err(|e| e.to_string())?);
        if sig < 0.5 {
            return Err(format!("seed {seed}: fixture edge has σ_min {sig:.3}"));
        }
        let sample = EdgeSample { edge: (0, 1), z_u, z_v, p: haar_orthogonal(k, &mut rng), proxy_degenerate: false };
        let std_at = |n_boot| {
            let params = BootstrapParams { n_boot, replicates: 200, lambda: 1e-2, seed, cap_to_overlap: true };
            std_dev(&bootstrap_edge_shear(&sample, &params)).unwrap_or(f64::NAN)
        };
        let (small, large) = (std_at(256), std_at(2048));
        if large < small {
            wins += 1;
        }
        detail.push(format!("{small:.4}→{large:.4}"));
    }
    let msg = format!("std(256)→std(2048) per seed [{}], {wins}/5 decrease", detail.join(", "));
    if wins >= 4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn null_control(tmp: &Path) -> Check {
    let dir = tmp.join("shared");
    let manifest = write_synthetic(&dir, "shared", &presets::shared_plane(6, 1024, 32, 600, 0.05, 0.0, 0), Dtype::F64, false)
        .map_err(|e| e.to_string())?;
    let mut cfg = RunConfig::new(&manifest);
    cfg.n_charts = 6;
    cfg.k = 32;
    cfg.knn_degree = 3;
    cfg.min_overlap = 100;
    cfg.jamming.enabled = false;
    cfg.flags.null_random_bases = true;
    let data = load_dataset(&manifest).map_err(|e| e.to_string())?;
    let (_, out) = run_stages("acceptance", &cfg, &data, &[Stage::Null], &tmp.join("shared-run"), &AtlasCache::in_memory())
        .map_err(|e| format!("{e:#}"))?;
    let null = out.null.ok_or("null stage produced nothing")?;
    let (learned, nulled) = (null.learned_shear_median.unwrap_or(f64::NAN), null.null_shear_median.unwrap_or(f64::NAN));
    let msg = format!("null median d_shear {nulled:.4} (edges {}), learned median {learned:.4}", out.transports.len());
    if (0.65..=0.75).contains(&nulled) && nulled >= 2.0 * learned {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn ridge_flatness(tmp: &Path) -> Check {
    let dir = tmp.join("rotated");
    let manifest = write_synthetic(&dir, "rotated", &presets::rotated_gaussians(12, 16, 4, 400, 0), Dtype::F64, false)
        .map_err(|e| e.to_string())?;
    let cfg = rotated_config(&manifest);
    let data = load_dataset(&manifest).map_err(|e| e.to_string())?;
    let values: Vec<String> = ["0.001", "0.01", "0.1"].iter().map(|s| s.to_string()).collect();
    let rows = run_sweep(&cfg, &data, Axis::Lambda, &values, &tmp.join("lambda-sweep"), &AtlasCache::in_memory())
        .map_err(|e| format!("{e:#}"))?;
    let spread = |f: &dyn Fn(usize) -> Option<f64>| -> Option<f64> {
        let v: Vec<f64> = (0..rows.len()).map(f).collect::<Option<_>>()?;
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        Some((hi - lo) / v[1].abs())
    };
    let shear = spread(&|i| rows[i].d_shear_median);
    let hol = spread(&|i| rows[i].d_hol_mean);
    let msg = format!("relative spread: median d_shear {shear:?}, mean d_hol {hol:?}");
    match (shear, hol) {
        (Some(s), Some(h)) if s < 0.05 && h < 0.05 => Ok(msg),
        _ => Err(msg),
    }
}

fn determinism(tmp: &Path) -> Check {
    let dir = tmp.join("det");
    let manifest = write_synthetic(&dir, "det", &presets::rotated_gaussians(12, 16, 4, 400, 3), Dtype::F64, true).map_err(|e| e.to_string())?;
    let mut cfg = rotated_config(&manifest);
    cfg.jamming.enabled = true;
    cfg.jamming.n_charts_analyzed = 3;
    cfg.jamming.m = 32;
    cfg.jamming.grad_samples_per_chart = 256;
    cfg.bootstrap.enabled = true;
    cfg.bootstrap.replicates = 20;
    cfg.bootstrap.n_boot = vec![64, 256];
    cfg.flags.null_random_bases = true;
    cfg.s_min = vec![0.0, 0.5, 0.9];
    let mut reports = Vec::new();
    for run in ["a", "b"] {
        let data = load_dataset(&manifest).map_err(|e| e.to_string())?;
        let out_dir = tmp.join(format!("det-{run}"));
        let (report, _) = run_stages("report", &cfg, &data, &full_run(&cfg), &out_dir, &AtlasCache::in_memory()).map_err(|e| format!("{e:#}"))?;
        let bytes = fs::read(out_dir.join("report.json")).map_err(|e| e.to_string())?;
        reports.push((bytes, report.outputs.len()));
    }
    let same = reports[0].0 == reports[1].0;
    let msg = format!("report.json {} bytes, {} outputs digested, identical: {same}", reports[0].0.len(), reports[0].1);
    if same {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn main() -> ExitCode {
    let tmp = tempfile::tempdir().expect("temporary directory");
    let t = tmp.path();
    let criteria: Vec<(&str, Box<dyn Fn() -> Check>)> = vec![
        ("tree_chord_identity", Box::new(tree_chord_identity)),
        ("gauge_invariance", Box::new(gauge_invariance)),
        ("shear_slack_bound", Box::new(shear_slack_bound)),
        ("jamming_certificates", Box::new(jamming_certificates)),
        ("welch_consistency", Box::new(welch_consistency)),
        ("planted_holonomy", Box::new(|| planted_holonomy(t))),
        ("bootstrap_concentration", Box::new(bootstrap_concentration)),
        ("null_control", Box::new(|| null_control(t))),
        ("ridge_flatness", Box::new(|| ridge_flatness(t))),
        ("determinism", Box::new(|| determinism(t))),
    ];
    let mut failed = 0;
    for (name, check) in &criteria {
        let start = Instant::now();
        let result = check();
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(msg) => println!("PASS {name}: {msg} [{secs:.1}s]"),
            Err(msg) => {
                failed += 1;
                println!("FAIL {name}: {msg} [{secs:.1}s]");
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
